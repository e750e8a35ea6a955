"""Pydantic models for the polariton horizon simulator.

Units used throughout the package: lengths in μm, times in ps, energies in
meV, with ħ = 0.6582119569 meV·ps. The physical constants are kept in the
units the literature quotes them in (kg, meV, μeV, meV·μm) and converted by
the properties below.
"""

from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

HBAR = 0.6582119569  # meV·ps
KG_TO_MEV_PS2_PER_UM2 = 6.241509074e33  # 1 kg = 6.24e33 meV·ps²/μm²


def mass_from_kg(kg: float) -> float:
    """kg -> meV·ps²/μm²."""
    return kg * KG_TO_MEV_PS2_PER_UM2


def rate_from_mev(energy):
    """ħω in meV -> ω in 1/ps."""
    return energy / HBAR


def mev_from_rate(omega):
    """ω in 1/ps -> ħω in meV."""
    return HBAR * omega


def rate_from_uev(energy):
    return energy * 1e-3 / HBAR


class PolaritonParams(BaseModel):
    """Material constants of the microcavity and the pump frequency."""
    model_config = ConfigDict(frozen=True)

    m_star: float = Field(5e-35, gt=0, description="effective mass [kg]")
    hbar_omega0: float = Field(1473.36, gt=0, description="exciton-photon energy [meV]")
    hbar_gamma: float = Field(47.0, gt=0, description="loss energy [μeV]")
    hbar_g: float = Field(3e-4, gt=0, description="interaction energy·length [meV·μm]")
    hbar_omega_p: float = Field(1473.85, gt=0, description="pump energy [meV]")

    @model_validator(mode="after")
    def _weak_loss(self) -> "PolaritonParams":
        if self.hbar_gamma * 1e-3 >= self.hbar_omega_p:
            raise ValueError("hbar_gamma must be smaller than hbar_omega_p (weak-loss regime)")
        return self

    @property
    def mass(self) -> float:
        """Effective mass in meV·ps²/μm²."""
        return mass_from_kg(self.m_star)

    @property
    def hbar_over_mass(self) -> float:
        """ħ/m* in μm²/ps."""
        return HBAR / self.mass

    @property
    def gamma(self) -> float:
        """Loss rate in 1/ps."""
        return rate_from_uev(self.hbar_gamma)

    @property
    def g(self) -> float:
        """Interaction constant in μm/ps."""
        return self.hbar_g / HBAR

    @property
    def omega_p(self) -> float:
        """Absolute pump angular frequency in 1/ps."""
        return rate_from_mev(self.hbar_omega_p)

    @property
    def detuning(self) -> float:
        """Bare pump detuning ω_p − ω₀ in 1/ps."""
        return (self.hbar_omega_p - self.hbar_omega0) / HBAR

    def velocity(self, k: float) -> float:
        """Flow velocity ħk/m* in μm/ps carried by a plane wave of wavevector k."""
        return self.hbar_over_mass * k


class PumpProfile(BaseModel):
    """Structured coherent pump: two plateaus with their own wavevectors."""
    model_config = ConfigDict(frozen=True)

    k_up: float  # 1/μm
    k_down: float  # 1/μm
    x_switch: float  # μm
    F_up: float = Field(ge=0)  # sqrt(1/μm)/ps
    F_down: float = Field(ge=0)  # sqrt(1/μm)/ps, 0 = no downstream support
    omega_p: float  # 1/ps
    edge_width: float = Field(0.0, ge=0)  # μm, 0 = sharp step

    @model_validator(mode="after")
    def _transcritical(self) -> "PumpProfile":
        if self.k_down <= self.k_up:
            raise ValueError("k_down must exceed k_up for a transcritical configuration")
        return self

    @property
    def supported(self) -> bool:
        return self.F_down > 0

    def phase(self, x: np.ndarray) -> np.ndarray:
        """Pump phase, continuous across x_switch."""
        return np.where(
            x < self.x_switch,
            self.k_up * x,
            self.k_up * self.x_switch + self.k_down * (x - self.x_switch),
        )

    def amplitude(self, x: np.ndarray) -> np.ndarray:
        if self.edge_width > 0:
            step = 0.5 * (1.0 + np.tanh((x - self.x_switch) / self.edge_width))
        else:
            step = (x >= self.x_switch).astype(float)
        return self.F_up * (1.0 - step) + self.F_down * step

    def field(self, x: np.ndarray) -> np.ndarray:
        """Complex pump F(x) e^{iθ(x)} on the grid [sqrt(1/μm)/ps]."""
        return self.amplitude(x) * np.exp(1j * self.phase(x))


class DefectPotential(BaseModel):
    """Gaussian potential V(x) = depth·exp(−(x − center)²/(2 width²))."""
    model_config = ConfigDict(frozen=True)

    depth: float = -0.85  # meV, negative = attractive
    width: float = Field(0.75, gt=0)  # μm
    center: float = 400.0  # μm

    def profile(self, x: np.ndarray) -> np.ndarray:
        """Potential energy on the grid [meV]."""
        return self.depth * np.exp(-((x - self.center) ** 2) / (2.0 * self.width**2))


class SimGrid(BaseModel):
    """Uniform periodic grid used by the split-step integrator."""
    model_config = ConfigDict(frozen=True)

    n_points: int = Field(2048, gt=0)
    length: float = Field(800.0, gt=0)  # μm
    x0: float = 0.0  # μm
    dt: Optional[float] = Field(None, gt=0)  # ps, None = default from the stability bound

    @field_validator("n_points")
    @classmethod
    def _power_of_two(cls, value: int) -> int:
        if value & (value - 1):
            raise ValueError("n_points must be a power of two")
        return value

    @property
    def dx(self) -> float:
        return self.length / self.n_points

    @property
    def x(self) -> np.ndarray:
        return self.x0 + self.dx * np.arange(self.n_points)

    @property
    def k(self) -> np.ndarray:
        """FFT wavevectors in 1/μm (unshifted order)."""
        return 2.0 * np.pi * np.fft.fftfreq(self.n_points, d=self.dx)


class GridSpec(SimGrid):
    """Simulation grid plus the absorbing margins at both ends."""
    absorbing_margin: float = Field(50.0, ge=0)  # μm
    absorbing_strength: float = Field(1.0, ge=0)  # 1/ps

    @model_validator(mode="after")
    def _margin_fits(self) -> "GridSpec":
        if self.absorbing_margin >= self.length / 4:
            raise ValueError("absorbing_margin must be below a quarter of the grid length")
        return self

    def simulation_grid(self) -> SimGrid:
        return SimGrid(n_points=self.n_points, length=self.length, x0=self.x0, dt=self.dt)


class PumpSpec(BaseModel):
    """Pump geometry and how its amplitudes are calibrated."""
    k_up: float = 0.27  # 1/μm
    k_down: float = 0.539  # 1/μm
    switch_offset: float = -7.0  # μm, x_switch − defect center
    up_offset: float = Field(8e-4, gt=0)  # relative intensity above the upper turning point
    c_B_target: float = Field(0.81, gt=0)  # μm/ps
    v_down_target: float = Field(2.07, gt=0)  # μm/ps
    F_up: Optional[float] = Field(None, ge=0)  # overrides the calibration
    F_down: Optional[float] = Field(None, ge=0)
    edge_width: float = Field(0.0, ge=0)  # μm
    # ramp down from above the upper turning point so the fluid settles on the upper branch
    ramp_from: float = Field(1.1, gt=0)  # initial pump amplitude fraction
    ramp_duration: Optional[float] = Field(None, ge=0)  # ps, None = 20/γ


class ProbeSpec(BaseModel):
    """Weak coherent probe and noise seeding."""
    amplitude_fraction: float = Field(1e-3, gt=0)  # of F_up
    width: float = Field(12.0, gt=0)  # μm
    offset: float = -100.0  # μm, probe center − defect center
    turn_on: float = Field(50.0, ge=0)  # ps
    relax_time: float = Field(300.0, gt=0)  # ps
    record_time: float = Field(800.0, gt=0)  # ps
    periodicity_tol: float = Field(2e-2, gt=0)
    noise_fraction: float = Field(1e-4, ge=0)  # of the upstream field amplitude
    noise_duration: float = Field(800.0, gt=0)  # ps


class SweepSpec(BaseModel):
    n_points: int = Field(60, ge=8)
    densify: int = Field(3, ge=1)
    span: float = Field(5.0, gt=0)  # linewidths around the expected resonance
    omega_qnm: Optional[float] = Field(None, gt=0)  # 1/ps, expected resonance if no bdg stage
    gamma_qnm: Optional[float] = Field(None, gt=0)  # 1/ps
    fit_span: float = Field(5.0, gt=0)  # linewidths fed to the resonance fit
    fit_mode: str = "complex"

    @field_validator("fit_mode")
    @classmethod
    def _known_mode(cls, value: str) -> str:
        if value not in ("complex", "magnitude"):
            raise ValueError("fit_mode must be 'complex' or 'magnitude'")
        return value


class AnalysisSpec(BaseModel):
    """Tolerances and analysis windows; windows are offsets from the defect center in μm."""
    steady_tol: float = Field(1e-5, gt=0)  # 1/ps
    t_max: float = Field(8000.0, gt=0)  # ps
    upstream_window: Tuple[float, float] = (-80.0, -20.0)
    downstream_window: Tuple[float, float] = (20.0, 300.0)
    map_upstream_window: Tuple[float, float] = (-330.0, -20.0)
    map_downstream_window: Tuple[float, float] = (20.0, 330.0)
    plateau_upstream: Tuple[float, float] = (-200.0, -60.0)
    plateau_downstream: Tuple[float, float] = (60.0, 300.0)
    box: int = Field(3, ge=1)
    zero_tol: float = Field(1e-3, gt=0)
    qnm_cutoff_factor: float = Field(3.0, gt=1)  # search window (ω_max, factor·ω_max)
    horizon_distance: float = Field(20.0, gt=0)  # μm
    balance_tolerance: float = Field(0.05, gt=0)
    loss_distance: float = Field(100.0, gt=0)  # μm

    @field_validator("upstream_window", "downstream_window", "map_upstream_window",
                     "map_downstream_window", "plateau_upstream", "plateau_downstream")
    @classmethod
    def _ordered(cls, value: Tuple[float, float]) -> Tuple[float, float]:
        if value[0] >= value[1]:
            raise ValueError("window bounds must be increasing")
        return value

    @field_validator("box")
    @classmethod
    def _odd_box(cls, value: int) -> int:
        if value % 2 == 0:
            raise ValueError("box must be odd")
        return value


class OutputSpec(BaseModel):
    directory: str = "runs/default"
    plots: bool = True


class VariantFlags(BaseModel):
    supported_downstream: bool = True
    lossless_linear_stage: bool = False  # γ→0 check mode: probes evolve the loss-free linearized field
