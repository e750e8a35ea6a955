"""Bogoliubov–de Gennes spectrum of a converged background.

Perturbations are written δφ = e^{iθ₀(x)}[u e^{−iωt} + v* e^{iω*t}] with the
intrinsic loss factored out, so the operator acting on (u, v) is

    L = [[ L₁₁,  g n₀ ],
         [−g n₀, −L₁₁* ]],
    L₁₁ = V/ħ − δ_eff(v₀) + 2g n₀ − (ħ/2m*)∂ₓ² − i v₀∂ₓ − (i/2)∂ₓv₀

in 1/ps. Total linewidths add the factored γ back.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from ..models import HBAR, mev_from_rate
from .gpe_engine import BackgroundState
from .model import effective_detuning

logger = logging.getLogger(__name__)

ZERO_NORM_TOL = 1e-3
HORIZON_DISTANCE = 20.0  # μm


class EigenFailure(Exception):
    """The dense eigensolver did not converge."""


class NoQnmFound(Exception):
    """No zero-norm mode localized at the horizon inside the search window."""


class MultipleQnmCandidates(Exception):
    """More than one mode passes the QNM selection."""

    def __init__(self, candidates: List["BdgMode"]):
        freqs = ", ".join(f"{m.omega.real:.4g}{m.omega.imag:+.3g}i" for m in candidates)
        super().__init__(f"{len(candidates)} QNM candidates: {freqs}")
        self.candidates = candidates


class NormClass(str, Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"
    ZERO = "zero"


@dataclass
class BdgOperator:
    matrix: np.ndarray  # (2N, 2N) complex, 1/ps
    x: np.ndarray  # μm, the window the operator lives on
    dx: float
    gamma: float  # factored loss, 1/ps
    horizon_x: Optional[float] = None
    boundary: str = "periodic"
    period: float = 0.0  # μm

    @property
    def size(self) -> int:
        return self.x.size


@dataclass
class BdgMode:
    omega: complex  # 1/ps, γ factored out
    u: np.ndarray
    v: np.ndarray
    norm: float
    center: float  # μm
    localization: float  # μm
    classification: NormClass
    partner: Optional[int] = None


@dataclass
class QnmEstimate:
    Omega_qnm: float  # 1/ps
    Gamma_qnm: float  # total linewidth Γ_rad + γ, 1/ps
    Gamma_radiative: float  # 1/ps
    mode: BdgMode
    zero_tol: float = ZERO_NORM_TOL
    window: Tuple[float, float] = (0.0, 0.0)
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def Q(self) -> float:
        return self.Omega_qnm / self.Gamma_qnm

    def record(self) -> Dict[str, Any]:
        """Serializable summary in both linewidth conventions."""
        return {
            "Omega_qnm_per_ps": self.Omega_qnm,
            "Omega_qnm_meV": mev_from_rate(self.Omega_qnm),
            "Gamma_qnm_per_ps": self.Gamma_qnm,
            "Gamma_qnm_meV": mev_from_rate(self.Gamma_qnm),
            "Gamma_radiative_per_ps": self.Gamma_radiative,
            "Q": self.Q,
            "center_um": self.mode.center,
            "localization_um": self.mode.localization,
            "norm": self.mode.norm,
            "zero_tol": self.zero_tol,
            "window_per_ps": list(self.window),
            **self.metadata,
        }


def first_derivative(n: int, h: float) -> np.ndarray:
    """Fourth-order central ∂ₓ with periodic wrap."""
    eye = np.eye(n)
    return (8.0 * (np.roll(eye, 1, axis=1) - np.roll(eye, -1, axis=1))
            - (np.roll(eye, 2, axis=1) - np.roll(eye, -2, axis=1))) / (12.0 * h)


def second_derivative(n: int, h: float) -> np.ndarray:
    """Fourth-order central ∂ₓ² with periodic wrap."""
    eye = np.eye(n)
    return (-(np.roll(eye, 2, axis=1) + np.roll(eye, -2, axis=1))
            + 16.0 * (np.roll(eye, 1, axis=1) + np.roll(eye, -1, axis=1))
            - 30.0 * eye) / (12.0 * h**2)


def periodic_gradient(f: np.ndarray, h: float) -> np.ndarray:
    """Same stencil as first_derivative applied to a profile; zero for constants."""
    return (8.0 * (np.roll(f, -1) - np.roll(f, 1)) - (np.roll(f, -2) - np.roll(f, 2))) / (12.0 * h)


def first_derivative_symbol(k: np.ndarray, h: float) -> np.ndarray:
    """Modified wavenumber of first_derivative: ∂ₓe^{ikx} = i·symbol·e^{ikx}."""
    return (8.0 * np.sin(k * h) - np.sin(2.0 * k * h)) / (6.0 * h)


def second_derivative_symbol(k: np.ndarray, h: float) -> np.ndarray:
    """−∂ₓ²e^{ikx} = symbol·e^{ikx}."""
    return (30.0 - 32.0 * np.cos(k * h) + 2.0 * np.cos(2.0 * k * h)) / (12.0 * h**2)


def operator_from_profiles(n0: np.ndarray, v0: np.ndarray, dx: float, params,
                           potential: Optional[np.ndarray] = None,
                           x: Optional[np.ndarray] = None,
                           horizon_x: Optional[float] = None) -> BdgOperator:
    """Assemble the γ-factored operator for arbitrary (n₀, v₀) profiles."""
    n = n0.size
    if potential is None:
        potential = np.zeros(n)
    if x is None:
        x = dx * np.arange(n)
    D1 = first_derivative(n, dx)
    D2 = second_derivative(n, dx)
    dv0 = periodic_gradient(v0, dx)

    diagonal = potential / HBAR - effective_detuning(v0, params) + 2.0 * params.g * n0
    L11 = (-0.5 * params.hbar_over_mass) * D2 - 1j * v0[:, None] * D1
    L11 = L11 + np.diag(diagonal - 0.5j * dv0)
    coupling = np.diag(params.g * n0)

    matrix = np.block([[L11, coupling], [-coupling, -np.conj(L11)]])
    return BdgOperator(matrix=matrix, x=x, dx=dx, gamma=params.gamma, horizon_x=horizon_x,
                       period=n * dx)


def assemble_bdg(background: BackgroundState, trim_margins: bool = True) -> BdgOperator:
    """Discretize the operator on the background, margins trimmed, periodic closure."""
    keep = background.interior if trim_margins else np.ones(background.x.size, dtype=bool)
    x = background.x[keep]
    potential = background.defect.profile(x)
    op = operator_from_profiles(background.n0[keep], background.v0[keep], background.grid.dx,
                                background.params, potential=potential, x=x,
                                horizon_x=background.horizon_x)
    logger.info(f"Assembled BdG operator of size {op.matrix.shape[0]} on "
                f"[{x[0]:.1f}, {x[-1]:.1f}] μm")
    return op


def _circular_center(x: np.ndarray, weights: np.ndarray, x0: float, period: float) -> float:
    phase = np.exp(2j * np.pi * (x - x0) / period)
    angle = np.angle(np.sum(weights * phase))
    return float(x0 + (angle % (2.0 * np.pi)) * period / (2.0 * np.pi))


def circular_distance(a: float, b: float, period: float) -> float:
    d = abs(a - b) % period
    return min(d, period - d)


def _make_mode(omega: complex, vector: np.ndarray, op: BdgOperator, zero_tol: float) -> BdgMode:
    n = op.size
    u, v = vector[:n], vector[n:]
    total = float(np.sum(np.abs(u) ** 2 + np.abs(v) ** 2) * op.dx)
    scale = 1.0 / np.sqrt(total) if total > 0 else 1.0
    u, v = u * scale, v * scale
    weight = (np.abs(u) ** 2 + np.abs(v) ** 2) * op.dx
    norm = float(np.sum(np.abs(u) ** 2 - np.abs(v) ** 2) * op.dx)
    weight_sum = float(np.sum(weight))
    w = weight / weight_sum
    if abs(norm) < zero_tol * weight_sum:
        kind = NormClass.ZERO
    else:
        kind = NormClass.POSITIVE if norm > 0 else NormClass.NEGATIVE
    return BdgMode(omega=complex(omega), u=u, v=v, norm=norm,
                   center=_circular_center(op.x, w, float(op.x[0]), op.period),
                   localization=float(op.dx / np.sum(w**2)),
                   classification=kind)


def _pair_modes(modes: List[BdgMode]) -> None:
    omegas = np.array([m.omega for m in modes])
    for i, mode in enumerate(modes):
        j = int(np.argmin(np.abs(omegas + np.conj(mode.omega))))
        mode.partner = j


def diagonalize(op: BdgOperator, zero_tol: float = ZERO_NORM_TOL) -> List[BdgMode]:
    """Full dense eigendecomposition, modes sorted by Re ω."""
    try:
        omegas, vectors = linalg.eig(op.matrix, check_finite=True)
    except (linalg.LinAlgError, ValueError) as e:
        raise EigenFailure(str(e)) from e
    if not np.all(np.isfinite(omegas)):
        raise EigenFailure("eigensolver returned non-finite eigenvalues")

    order = np.lexsort((omegas.imag, omegas.real))
    modes = [_make_mode(omegas[i], vectors[:, i], op, zero_tol) for i in order]
    _pair_modes(modes)
    counts = {kind: sum(m.classification == kind for m in modes) for kind in NormClass}
    logger.info(
        f"Diagonalized {len(modes)} modes: {counts[NormClass.POSITIVE]} positive, "
        f"{counts[NormClass.NEGATIVE]} negative, {counts[NormClass.ZERO]} zero norm"
    )
    return modes


def biorthogonality_error(op: BdgOperator) -> float:
    """Largest normalized overlap ⟨wᵢ|vⱼ⟩, i ≠ j, between left and right eigenvectors."""
    try:
        _, left, right = linalg.eig(op.matrix, left=True, right=True)
    except (linalg.LinAlgError, ValueError) as e:
        raise EigenFailure(str(e)) from e
    overlap = left.conj().T @ right
    diag = np.abs(np.diag(overlap))
    scaled = np.abs(overlap) / np.sqrt(np.outer(diag, diag))
    np.fill_diagonal(scaled, 0.0)
    return float(np.max(scaled))


def find_qnm(modes: Sequence[BdgMode], window: Tuple[float, float], horizon_x: float,
             gamma: float, period: Optional[float] = None,
             max_distance: float = HORIZON_DISTANCE) -> QnmEstimate:
    """Pick the decaying zero-norm mode localized at the horizon inside ``window``."""
    lo, hi = window
    candidates = []
    for mode in modes:
        if mode.classification != NormClass.ZERO:
            continue
        if not (lo < mode.omega.real < hi) or mode.omega.imag > 0:
            continue
        distance = (circular_distance(mode.center, horizon_x, period) if period
                    else abs(mode.center - horizon_x))
        if distance > max_distance:
            logger.debug(f"Zero-norm mode at {mode.omega:.4g} localized at "
                         f"{mode.center:.1f} μm, away from the horizon")
            continue
        candidates.append(mode)

    if not candidates:
        raise NoQnmFound(f"no zero-norm mode with Re ω in ({lo:.4g}, {hi:.4g}) near "
                         f"x={horizon_x:.1f} μm")
    if len(candidates) > 1:
        logger.warning(f"{len(candidates)} QNM candidates in the search window")
        raise MultipleQnmCandidates(candidates)

    mode = candidates[0]
    gamma_rad = 2.0 * abs(mode.omega.imag)
    estimate = QnmEstimate(Omega_qnm=mode.omega.real, Gamma_qnm=gamma_rad + gamma,
                           Gamma_radiative=gamma_rad, mode=mode, window=(lo, hi))
    logger.info(f"QNM at Ω={estimate.Omega_qnm:.4g}/ps, Γ={estimate.Gamma_qnm:.4g}/ps "
                f"(radiative {gamma_rad:.3g}/ps), Q={estimate.Q:.1f}")
    return estimate


def mode_table(modes: Sequence[BdgMode], gamma: float = 0.0) -> List[Dict[str, Any]]:
    """Rows for the mode CSV; ``im_omega_total_meV`` adds back the factored loss."""
    rows = []
    for mode in modes:
        rows.append({
            "re_omega_meV": mev_from_rate(mode.omega.real),
            "im_omega_meV": mev_from_rate(mode.omega.imag),
            "im_omega_total_meV": mev_from_rate(mode.omega.imag - 0.5 * gamma),
            "norm": mode.norm,
            "localization_um": mode.localization,
            "center_um": mode.center,
            "classification": mode.classification.value,
        })
    return rows
