"""Analytic mean-field and linear-response formulas for the driven polariton fluid.

Everything here is a pure function of its inputs: equation of state and
bistability, local hydrodynamic quantities, the laboratory-frame Bogoliubov
dispersion, channel kinematics at a horizon and the acoustic metric.
"""

import logging
from enum import Enum
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy.optimize import minimize_scalar

from ..models import HBAR, KG_TO_MEV_PS2_PER_UM2, PolaritonParams, PumpProfile

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

# Roots with |v_g| below this are band edges, not channels [μm/ps].
BAND_EDGE_VELOCITY = 1e-4


class GappedRegionError(Exception):
    """Local-density formulas do not apply: a radicand is negative."""

    def __init__(self, message: str, n0: Optional[float] = None,
                 v0: Optional[float] = None, radicand: Optional[float] = None):
        super().__init__(message)
        self.n0 = n0
        self.v0 = v0
        self.radicand = radicand


class NoPropagatingChannel(Exception):
    """An upstream channel was requested below the upstream gap."""

    def __init__(self, omega: float, gap: float):
        super().__init__(f"ω = {omega:.4g}/ps lies below the upstream gap {gap:.4g}/ps")
        self.omega = omega
        self.gap = gap


class NotTranscritical(Exception):
    """The downstream flow does not lift the negative branch to positive frequency."""

    def __init__(self, omega_max: Optional[float], message: Optional[str] = None):
        super().__init__(message or f"flow is not transcritical (ω_max = {omega_max})")
        self.omega_max = omega_max


class Side(str, Enum):
    UPSTREAM = "upstream"
    DOWNSTREAM = "downstream"


class Direction(str, Enum):
    INCOMING = "incoming"
    OUTGOING = "outgoing"


class ChannelLabel(str, Enum):
    """Asymptotic Bogoliubov channels of a horizon."""
    IN = "in"
    P = "p"
    D = "d"
    HR = "HR"
    DOWN = "down"
    DN = "dn"


class Regime(str, Enum):
    BELOW_WINDOW = "below_window"  # ω < ω_min, downstream 2×2 anomalous
    HAWKING_WINDOW = "hawking_window"  # ω_min < ω < ω_max, 3×3 pseudo-unitary
    ABOVE_WINDOW = "above_window"  # ω > ω_max, 2×2 unitary


class TurningPoint(BaseModel):
    """Point of the S-curve where d|F_p|²/dn₀ = 0."""
    n0: float  # 1/μm
    intensity: float  # |F_p|² [1/(μm·ps²)]


class LocalHydro(BaseModel):
    """Local hydrodynamic state of the fluid."""
    model_config = ConfigDict(frozen=True)

    n0: float  # 1/μm
    v0: float  # μm/ps
    delta_eff: float  # 1/ps
    c_B: float  # μm/ps
    m_det: float  # kg
    m_star: float  # kg

    @property
    def mach(self) -> float:
        return abs(self.v0) / self.c_B if self.c_B > 0 else float("inf")

    @property
    def rest_gap(self) -> float:
        """Bogoliubov gap ω(k=0) = c_B² m_det/ħ in 1/ps."""
        return self.c_B**2 * self.m_det * KG_TO_MEV_PS2_PER_UM2 / HBAR

    @property
    def dispersion_curvature(self) -> float:
        """ħ/(2m*) in μm²/ps."""
        return HBAR / (2.0 * self.m_star * KG_TO_MEV_PS2_PER_UM2)


class Channel(BaseModel):
    label: ChannelLabel
    k: float  # 1/μm
    norm_sign: int  # +1 or −1
    group_velocity: float  # μm/ps
    side: Side
    direction: Direction


class ChannelSet(BaseModel):
    """Propagating Bogoliubov channels at one lab-frame frequency."""
    omega: float  # 1/ps
    regime: Regime
    channels: List[Channel]
    band_edges: List[float] = []  # k of zero-group-velocity roots

    def get(self, label: ChannelLabel) -> Optional[Channel]:
        for channel in self.channels:
            if channel.label == label:
                return channel
        return None

    def has(self, label: ChannelLabel) -> bool:
        return self.get(label) is not None

    @property
    def incoming(self) -> List[Channel]:
        return [c for c in self.channels if c.direction == Direction.INCOMING]

    @property
    def outgoing(self) -> List[Channel]:
        return [c for c in self.channels if c.direction == Direction.OUTGOING]


class MetricCoefficients(BaseModel):
    """Painlevé–Gullstrand line element coefficients."""
    g_tt: float  # μm²/ps²
    g_tx: float  # μm/ps
    g_xx: float = -1.0


class PumpCalibration(BaseModel):
    """How the pump amplitudes were derived from the turning points."""
    F_up: float
    F_down: float
    upstream_turning_intensity: float
    upstream_offset: float
    downstream_turning_intensity: Optional[float] = None
    downstream_offset: Optional[float] = None  # F_down²/I_turn − 1
    n_up: float
    n_down_target: Optional[float] = None
    c_B_target: Optional[float] = None
    v_down_target: Optional[float] = None


# ---------------------------------------------------------------------------
# Equation of state and bistability
# ---------------------------------------------------------------------------

def effective_detuning(v0: ArrayLike, params: PolaritonParams) -> ArrayLike:
    """δ_eff(v₀) = ω_p − ω₀ − m* v₀²/(2ħ) in 1/ps."""
    return params.detuning - params.mass * np.square(v0) / (2.0 * HBAR)


def pump_intensity(n0: ArrayLike, v0: float, params: PolaritonParams) -> ArrayLike:
    """Left side of the equation of state, n₀[(g n₀ − δ_eff)² + γ²/4]."""
    delta = effective_detuning(v0, params)
    return n0 * ((params.g * n0 - delta) ** 2 + params.gamma**2 / 4.0)


def _polish_cubic(coeffs: np.ndarray, root: float) -> float:
    poly = np.poly1d(coeffs)
    deriv = poly.deriv()
    for _ in range(8):
        slope = deriv(root)
        if slope == 0:
            break
        step = poly(root) / slope
        root -= step
        if abs(step) <= 1e-15 * max(abs(root), 1.0):
            break
    return float(root)


def equation_of_state_roots(F_p: float, v0: float, params: PolaritonParams) -> List[float]:
    """All real non-negative densities sustained by a homogeneous pump.

    F_p is the drive amplitude as it enters the field equation (the ħF term
    divided by ħ), so the cubic reads n₀[(g n₀ − δ_eff)² + γ²/4] = |F_p|².
    """
    if F_p < 0:
        raise ValueError("F_p must be non-negative")
    if F_p == 0:
        return [0.0]

    g = params.g
    delta = effective_detuning(v0, params)
    coeffs = np.array([g**2, -2.0 * g * delta, delta**2 + params.gamma**2 / 4.0, -F_p**2])
    scale = max(abs(delta) / g, params.gamma / g, 1.0)

    roots: List[float] = []
    for root in np.roots(coeffs):
        if abs(root.imag) > 1e-6 * scale:
            continue
        polished = _polish_cubic(coeffs, root.real)
        if polished < 0:
            continue
        if any(abs(polished - r) <= 1e-7 * scale for r in roots):
            continue
        roots.append(polished)
    return sorted(roots)


def bistability_turning_points(v0: float, params: PolaritonParams) -> Optional[List[TurningPoint]]:
    """Turning points of the S-curve, or None when δ_eff/γ < √3/2.

    Exactly at δ_eff/γ = √3/2 the single degenerate point is returned.
    """
    delta = effective_detuning(v0, params)
    gamma = params.gamma
    if delta <= 0:
        return None
    disc = delta**2 - 0.75 * gamma**2
    if abs(disc) <= 1e-12 * delta**2:
        n0 = 2.0 * delta / (3.0 * params.g)
        return [TurningPoint(n0=n0, intensity=float(pump_intensity(n0, v0, params)))]
    if disc < 0:
        return None
    root = np.sqrt(disc)
    points = []
    for n0 in ((2.0 * delta - root) / (3.0 * params.g), (2.0 * delta + root) / (3.0 * params.g)):
        points.append(TurningPoint(n0=n0, intensity=float(pump_intensity(n0, v0, params))))
    return points


def s_curve(v0: float, params: PolaritonParams, n_max: Optional[float] = None,
            n_points: int = 2000) -> Tuple[np.ndarray, np.ndarray]:
    """Parametric S-curve (n₀, |F_p|²) for plotting."""
    if n_max is None:
        delta = effective_detuning(v0, params)
        n_max = 2.0 * max(abs(delta), params.gamma) / params.g
    n0 = np.linspace(0.0, n_max, n_points)
    return n0, pump_intensity(n0, v0, params)


def homogeneous_field(n0: float, v0: float, params: PolaritonParams,
                      pump_phase: float = 0.0) -> complex:
    """Steady complex amplitude −F/(g n₀ − δ_eff − iγ/2) sustaining density n₀."""
    delta = effective_detuning(v0, params)
    F = np.sqrt(pump_intensity(n0, v0, params)) * np.exp(1j * pump_phase)
    return complex(-F / (params.g * n0 - delta - 0.5j * params.gamma))


def calibrate_pump(params: PolaritonParams, k_up: float, k_down: float, x_switch: float,
                   up_offset: float = 8e-4, supported: bool = True,
                   c_B_target: float = 0.81, v_down_target: float = 2.07,
                   F_up: Optional[float] = None, F_down: Optional[float] = None,
                   edge_width: float = 0.0) -> Tuple[PumpProfile, PumpCalibration]:
    """Derive pump amplitudes from the bistability turning points.

    Upstream sits ``up_offset`` (relative intensity) above the upper-branch
    turning point. Downstream support is the homogeneous drive that sustains
    the target sound speed at the target asymptotic flow velocity; the offset
    this represents on the downstream S-curve is recorded.
    """
    v_up = params.velocity(k_up)
    points = bistability_turning_points(v_up, params)
    if not points:
        raise ValueError(f"upstream pump at k_up={k_up} is not bistable")
    upper = points[-1]
    if F_up is None:
        F_up = float(np.sqrt(upper.intensity * (1.0 + up_offset)))
    n_up = equation_of_state_roots(F_up, v_up, params)[-1]

    down_points = bistability_turning_points(params.velocity(k_down), params)
    down_turning = down_points[-1].intensity if down_points else None

    n_down_target = None
    if not supported:
        F_down = 0.0
    elif F_down is None:
        delta_t = effective_detuning(v_down_target, params)
        n_down_target = (params.mass * c_B_target**2 / HBAR + delta_t) / (2.0 * params.g)
        if n_down_target <= 0:
            raise ValueError("sound-speed target is unreachable at the target flow velocity")
        F_down = float(np.sqrt(pump_intensity(n_down_target, v_down_target, params)))

    down_offset = F_down**2 / down_turning - 1.0 if (down_turning and F_down > 0) else None
    pump = PumpProfile(k_up=k_up, k_down=k_down, x_switch=x_switch, F_up=F_up,
                       F_down=F_down, omega_p=params.omega_p, edge_width=edge_width)
    calibration = PumpCalibration(
        F_up=F_up, F_down=F_down,
        upstream_turning_intensity=upper.intensity, upstream_offset=up_offset,
        downstream_turning_intensity=down_turning, downstream_offset=down_offset,
        n_up=n_up, n_down_target=n_down_target,
        c_B_target=c_B_target if supported else None,
        v_down_target=v_down_target if supported else None,
    )
    logger.info(
        f"Pump calibrated: F_up={F_up:.5g}, F_down={F_down:.5g}, "
        f"n_up={n_up:.1f}/μm, downstream offset={down_offset}"
    )
    return pump, calibration


# ---------------------------------------------------------------------------
# Local hydrodynamics and dispersion
# ---------------------------------------------------------------------------

def local_hydro(n0: float, v0: float, params: PolaritonParams) -> LocalHydro:
    """Sound speed and mass parameter of a locally homogeneous flow."""
    delta = float(effective_detuning(v0, params))
    gn = params.g * n0
    c_radicand = 2.0 * gn - delta
    if c_radicand <= 0:
        raise GappedRegionError(
            f"2gn₀ − δ_eff = {c_radicand:.4g} ≤ 0: no real sound speed",
            n0=n0, v0=v0, radicand=c_radicand,
        )
    gap_radicand = (gn - delta) * (3.0 * gn - delta)
    if gap_radicand < 0:
        if gap_radicand > -1e-12 * c_radicand**2:
            gap_radicand = 0.0
        else:
            raise GappedRegionError(
                f"(gn₀ − δ_eff)(3gn₀ − δ_eff) = {gap_radicand:.4g} < 0: no real mass gap",
                n0=n0, v0=v0, radicand=gap_radicand,
            )
    c_B = float(np.sqrt(params.hbar_over_mass * c_radicand))
    m_det = params.m_star * np.sqrt(gap_radicand) / c_radicand
    return LocalHydro(n0=n0, v0=v0, delta_eff=delta, c_B=c_B, m_det=float(m_det),
                      m_star=params.m_star)


def local_hydro_profile(n0: np.ndarray, v0: np.ndarray,
                        params: PolaritonParams) -> Tuple[np.ndarray, np.ndarray]:
    """c_B(x) and m_det(x) [kg]; NaN wherever the local formulas do not apply."""
    delta = effective_detuning(v0, params)
    gn = params.g * n0
    c_radicand = 2.0 * gn - delta
    gap_radicand = (gn - delta) * (3.0 * gn - delta)
    valid = (c_radicand > 0) & (gap_radicand >= 0)
    with np.errstate(invalid="ignore", divide="ignore"):
        c_B = np.where(valid, np.sqrt(params.hbar_over_mass * np.abs(c_radicand)), np.nan)
        m_det = np.where(valid, params.m_star * np.sqrt(np.abs(gap_radicand)) / c_radicand, np.nan)
    return c_B, m_det


def mach_profile(n0: np.ndarray, v0: np.ndarray, params: PolaritonParams) -> np.ndarray:
    """|v₀|/c_B along a profile; NaN where c_B is undefined."""
    c_B, _ = local_hydro_profile(n0, v0, params)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.abs(v0) / c_B


def _bogoliubov_root(k: ArrayLike, hydro: LocalHydro) -> ArrayLike:
    alpha = hydro.dispersion_curvature
    return np.sqrt((alpha * np.square(k)) ** 2 + hydro.c_B**2 * np.square(k) + hydro.rest_gap**2)


def dispersion_lab_frame(k: ArrayLike, hydro: LocalHydro) -> Tuple[ArrayLike, ArrayLike]:
    """Laboratory-frame Bogoliubov branches ω±(k) = v₀k ± sqrt(...) in 1/ps.

    The rest-gap term is c_B⁴ m_det²/ħ², which makes ω(k=0) equal the
    driven-polariton gap sqrt((gn₀ − δ_eff)(3gn₀ − δ_eff)).
    """
    root = _bogoliubov_root(k, hydro)
    doppler = hydro.v0 * np.asarray(k)
    return doppler + root, doppler - root


def group_velocity(k: ArrayLike, hydro: LocalHydro, norm_sign: int) -> ArrayLike:
    """dω±/dk in μm/ps for the branch of the given norm sign."""
    alpha = hydro.dispersion_curvature
    k = np.asarray(k, dtype=float)
    slope = (2.0 * alpha**2 * k**3 + hydro.c_B**2 * k) / _bogoliubov_root(k, hydro)
    return hydro.v0 + norm_sign * slope


def branch_roots(omega: float, hydro: LocalHydro) -> List[Tuple[float, int]]:
    """Real k roots of ω±(k) = ω, tagged with the branch sign.

    Squaring the dispersion gives the quartic
    −α²k⁴ + (v₀² − c_B²)k² − 2ωv₀k + ω² − M² = 0,
    solved through its companion matrix; spurious roots of the squared
    relation are dropped by re-evaluating the branches.
    """
    alpha = hydro.dispersion_curvature
    v0, c_B, gap = hydro.v0, hydro.c_B, hydro.rest_gap
    coeffs = [-alpha**2, 0.0, v0**2 - c_B**2, -2.0 * omega * v0, omega**2 - gap**2]
    k_scale = max(abs(omega) / max(c_B, 1e-12), np.sqrt(abs(omega) / alpha), 1.0)
    omega_scale = max(abs(omega), gap, 1.0)

    found: List[Tuple[float, int]] = []
    for root in np.roots(coeffs):
        if abs(root.imag) > 1e-6 * k_scale:
            continue
        k = float(root.real)
        sign = 1 if omega - v0 * k > 0 else -1
        for _ in range(6):
            plus, minus = dispersion_lab_frame(k, hydro)
            residual = (plus if sign > 0 else minus) - omega
            slope = group_velocity(k, hydro, sign)
            if slope == 0:
                break
            k -= residual / slope
        plus, minus = dispersion_lab_frame(k, hydro)
        if abs((plus if sign > 0 else minus) - omega) > 1e-9 * omega_scale:
            continue
        if any(abs(k - other) <= 1e-9 * k_scale and sign == s for other, s in found):
            continue
        found.append((float(k), sign))
    return sorted(found)


def negative_branch_max(hydro: LocalHydro, n_grid: int = 4001) -> float:
    """max_k ω₋(k): grid bracketing followed by bounded scalar maximisation."""
    alpha = hydro.dispersion_curvature
    k_hi = 2.0 * (abs(hydro.v0) + hydro.c_B) / alpha + 1.0
    k = np.linspace(-k_hi, k_hi, n_grid)
    minus = dispersion_lab_frame(k, hydro)[1]
    i = int(np.argmax(minus))
    lo, hi = k[max(i - 1, 0)], k[min(i + 1, n_grid - 1)]
    result = minimize_scalar(lambda q: -dispersion_lab_frame(q, hydro)[1],
                             bounds=(lo, hi), method="bounded",
                             options={"xatol": 1e-12 * max(k_hi, 1.0)})
    return float(max(-result.fun, minus[i]))


def local_negative_branch_max(n0: np.ndarray, v0: np.ndarray, params: PolaritonParams,
                              n_grid: int = 1001) -> np.ndarray:
    """Local Doppler lift of ω₋ along a profile; NaN where the formulas fail."""
    c_B, m_det = local_hydro_profile(n0, v0, params)
    gap = c_B**2 * m_det * KG_TO_MEV_PS2_PER_UM2 / HBAR
    alpha = params.hbar_over_mass / 2.0
    finite = np.isfinite(c_B)
    k_hi = 2.0 * (np.nanmax(np.abs(v0)) + np.nanmax(c_B[finite], initial=0.0)) / alpha + 1.0
    k = np.linspace(-k_hi, k_hi, n_grid)[np.newaxis, :]
    root = np.sqrt((alpha * k**2) ** 2 + (c_B**2)[:, None] * k**2 + (gap**2)[:, None])
    lifted = np.max(v0[:, None] * k - root, axis=1)
    return np.where(finite, lifted, np.nan)


def frequency_window(upstream: LocalHydro, downstream: LocalHydro) -> Tuple[float, float]:
    """(ω_min, ω_max): upstream gap and downstream negative-branch maximum."""
    omega_max = negative_branch_max(downstream)
    if abs(downstream.v0) <= downstream.c_B or omega_max <= 0:
        raise NotTranscritical(omega_max)
    return upstream.rest_gap, omega_max


def _classify_regime(omega: float, omega_min: float, omega_max: float) -> Regime:
    if omega < omega_min:
        return Regime.BELOW_WINDOW
    if omega < omega_max:
        return Regime.HAWKING_WINDOW
    return Regime.ABOVE_WINDOW


_LABELS: Dict[Tuple[Side, int, bool], Tuple[ChannelLabel, Direction]] = {
    # (side, norm sign, moves to +x) -> label; the flow runs towards +x.
    (Side.UPSTREAM, 1, True): (ChannelLabel.IN, Direction.INCOMING),
    (Side.UPSTREAM, 1, False): (ChannelLabel.HR, Direction.OUTGOING),
    (Side.DOWNSTREAM, 1, True): (ChannelLabel.DOWN, Direction.OUTGOING),
    (Side.DOWNSTREAM, 1, False): (ChannelLabel.P, Direction.INCOMING),
    (Side.DOWNSTREAM, -1, True): (ChannelLabel.DN, Direction.OUTGOING),
    (Side.DOWNSTREAM, -1, False): (ChannelLabel.D, Direction.INCOMING),
}


def channel_map(omega: float, upstream: LocalHydro, downstream: LocalHydro,
                require_upstream: bool = False) -> ChannelSet:
    """Label the propagating channels on both sides of the horizon at frequency ω."""
    if omega <= 0:
        raise ValueError("omega must be positive")
    omega_min = upstream.rest_gap
    omega_max = negative_branch_max(downstream)
    if omega < omega_min and require_upstream:
        raise NoPropagatingChannel(omega, omega_min)
    regime = _classify_regime(omega, omega_min, omega_max)

    sides = [(Side.DOWNSTREAM, downstream)]
    if omega >= omega_min:
        sides.insert(0, (Side.UPSTREAM, upstream))

    channels: List[Channel] = []
    band_edges: List[float] = []
    for side, hydro in sides:
        for k, sign in branch_roots(omega, hydro):
            v_g = float(group_velocity(k, hydro, sign))
            if abs(v_g) < BAND_EDGE_VELOCITY:
                band_edges.append(k)
                continue
            key = (side, sign, v_g > 0)
            if key not in _LABELS:
                logger.debug(f"Ignoring {side.value} root k={k:.4g} on branch {sign:+d}")
                continue
            label, direction = _LABELS[key]
            existing = next((c for c in channels if c.label == label), None)
            if existing is not None:
                if abs(k) >= abs(existing.k):
                    continue
                channels.remove(existing)
            channels.append(Channel(label=label, k=k, norm_sign=sign, group_velocity=v_g,
                                    side=side, direction=direction))
    order = list(ChannelLabel)
    channels.sort(key=lambda c: order.index(c.label))
    return ChannelSet(omega=omega, regime=regime, channels=channels, band_edges=band_edges)


def metric_at(hydro: LocalHydro) -> MetricCoefficients:
    """Painlevé–Gullstrand coefficients (c_B² − v₀², −v₀, −1)."""
    return MetricCoefficients(g_tt=hydro.c_B**2 - hydro.v0**2, g_tx=-hydro.v0, g_xx=-1.0)
