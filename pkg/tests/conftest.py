"""Shared fixtures: default material constants, a small homogeneous background and
the transcritical steady states built from the default pump geometry."""

import sys
from pathlib import Path
from typing import Tuple

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from polariton_horizon.core.bdg_spectrum import QnmEstimate, assemble_bdg, diagonalize, find_qnm
from polariton_horizon.core.gpe_engine import BackgroundState, build_background, find_steady_state
from polariton_horizon.core.model import (
    LocalHydro,
    calibrate_pump,
    effective_detuning,
    frequency_window,
    homogeneous_field,
    local_hydro,
    pump_intensity,
)
from polariton_horizon.models import (
    HBAR,
    AnalysisSpec,
    DefectPotential,
    GridSpec,
    PolaritonParams,
    PumpProfile,
    PumpSpec,
    SimGrid,
)

REPO_ROOT = Path(__file__).parent.parent


@pytest.fixture
def params() -> PolaritonParams:
    return PolaritonParams()


def homogeneous_background(params: PolaritonParams, n_points: int = 256,
                           length: float = 100.0, density_ratio: float = 1.2) -> BackgroundState:
    """Uniform fluid at rest on a periodic grid, pumped at normal incidence.

    The density is ``density_ratio``·δ/g, on the stable side of the gap.
    """
    grid = SimGrid(n_points=n_points, length=length)
    delta = float(effective_detuning(0.0, params))
    n0 = density_ratio * delta / params.g
    F = float(np.sqrt(pump_intensity(n0, 0.0, params)))
    # x_switch beyond the grid: the whole fluid sees the upstream pump with k = 0
    pump = PumpProfile(k_up=0.0, k_down=0.1, x_switch=2.0 * length, F_up=F, F_down=0.0,
                       omega_p=params.omega_p)
    psi = np.full(n_points, homogeneous_field(n0, 0.0, params), dtype=complex)
    return build_background(psi, t=0.0, residual=0.0, grid=grid, params=params, pump=pump,
                            defect=DefectPotential(depth=0.0), margin=0.0, strength=0.0)


@pytest.fixture
def uniform_background(params: PolaritonParams) -> BackgroundState:
    return homogeneous_background(params)


@pytest.fixture
def make_background():
    return homogeneous_background


@pytest.fixture
def flows(params):
    """Subsonic upstream at ħk_up/m*, supersonic downstream at 2.07 μm/ps with c_B = 0.81 μm/ps."""
    v_up = params.velocity(0.27)
    delta_up = float(effective_detuning(v_up, params))
    upstream = local_hydro(1.2 * delta_up / params.g, v_up, params)
    v_down = 2.07
    delta_down = float(effective_detuning(v_down, params))
    n_down = (params.mass * 0.81**2 / HBAR + delta_down) / (2.0 * params.g)
    downstream = local_hydro(n_down, v_down, params)
    return upstream, downstream


# Transcritical backgrounds on the default pump geometry. The full-size ones
# take minutes and are only built for tests marked slow.
REDUCED_GRID = GridSpec(n_points=512, length=200.0, absorbing_margin=20.0)
REDUCED_DEFECT = DefectPotential(center=100.0)
REDUCED_PLATEAUS = ((-60.0, -20.0), (40.0, 75.0))  # μm from the defect


def transcritical_background(grid: GridSpec = GridSpec(),
                             defect: DefectPotential = DefectPotential(),
                             supported: bool = True,
                             require_horizon: bool = True) -> BackgroundState:
    """calibrate_pump → find_steady_state with the default pump and material constants."""
    params, spec = PolaritonParams(), PumpSpec()
    x_switch = defect.center + spec.switch_offset
    pump, _ = calibrate_pump(params, spec.k_up, spec.k_down, x_switch,
                             up_offset=spec.up_offset, supported=supported,
                             c_B_target=spec.c_B_target, v_down_target=spec.v_down_target)
    return find_steady_state(grid.simulation_grid(), params, pump, defect,
                             margin=grid.absorbing_margin, strength=grid.absorbing_strength,
                             ramp_from=spec.ramp_from, require_horizon=require_horizon)


def plateaus(background: BackgroundState,
             windows: Tuple[Tuple[float, float], Tuple[float, float]] = (
                 AnalysisSpec().plateau_upstream, AnalysisSpec().plateau_downstream),
             ) -> Tuple[LocalHydro, LocalHydro]:
    center = background.defect.center
    (up_lo, up_hi), (down_lo, down_hi) = windows
    return (background.plateau(center + up_lo, center + up_hi),
            background.plateau(center + down_lo, center + down_hi))


def horizon_qnm(background: BackgroundState,
                windows: Tuple[Tuple[float, float], Tuple[float, float]] = (
                    AnalysisSpec().plateau_upstream, AnalysisSpec().plateau_downstream),
                ) -> QnmEstimate:
    """The bdg stage's search: one zero-norm mode in (ω_max, 3ω_max) near the horizon."""
    analysis = AnalysisSpec()
    _, omega_max = frequency_window(*plateaus(background, windows))
    op = assemble_bdg(background)
    modes = diagonalize(op, zero_tol=analysis.zero_tol)
    horizon_x = background.horizon_x or background.pump.x_switch
    return find_qnm(modes, (omega_max, analysis.qnm_cutoff_factor * omega_max), horizon_x,
                    background.params.gamma, period=op.period,
                    max_distance=analysis.horizon_distance)


@pytest.fixture(scope="session")
def default_background() -> BackgroundState:
    return transcritical_background()


@pytest.fixture(scope="session")
def unsupported_background() -> BackgroundState:
    return transcritical_background(supported=False)


@pytest.fixture(scope="session")
def default_qnm(default_background) -> QnmEstimate:
    return horizon_qnm(default_background)
