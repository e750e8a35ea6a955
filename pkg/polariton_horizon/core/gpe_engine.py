"""Split-step integration of the driven-dissipative Gross-Pitaevskii equation.

The field is evolved in the frame rotating at the pump frequency,
φ = ψ e^{iω_p t}, so that the pump is static and every other drive term
oscillates at its offset ``omega`` from ω_p:

    i ∂_t φ = [−(ħ/2m*)∂ₓ² + V/ħ − (ω_p − ω₀) + g|φ|² − iγ(x)/2] φ + Σ F_j(x) e^{−iω_j t}

γ(x) is the intrinsic loss plus the absorbing margins.
"""

import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from ..models import HBAR, DefectPotential, PolaritonParams, PumpProfile, SimGrid
from .model import (
    LocalHydro,
    NotTranscritical,
    effective_detuning,
    equation_of_state_roots,
    local_hydro,
    local_hydro_profile,
)

logger = logging.getLogger(__name__)


class NumericalBlowup(Exception):
    """The field left the physically admissible range."""

    def __init__(self, t: float, max_amplitude: float):
        super().__init__(f"field blew up at t={t:.2f} ps (max |ψ|² = {max_amplitude:.3g})")
        self.t = t
        self.max_amplitude = max_amplitude


class NoConvergence(Exception):
    """No steady state within the allotted time."""

    def __init__(self, t_max: float, residual: float):
        super().__init__(f"no steady state after {t_max:.0f} ps (residual {residual:.3g})")
        self.t_max = t_max
        self.residual = residual


class ProbeInGap(Exception):
    """The probe frequency lies below the upstream gap."""

    def __init__(self, omega_pr: float, omega_min: float):
        super().__init__(
            f"probe ω={omega_pr:.4g}/ps cannot be injected below ω_min={omega_min:.4g}/ps"
        )
        self.omega_pr = omega_pr
        self.omega_min = omega_min


class StabilityBoundViolation(Exception):
    """Time step too large to resolve the kinetic phase at the grid Nyquist."""

    def __init__(self, dt: float, dt_max: float):
        super().__init__(f"dt={dt:.4g} ps exceeds the stability bound {dt_max:.4g} ps")
        self.dt = dt
        self.dt_max = dt_max


class MultipleHorizons(NotTranscritical):
    """More than one subsonic to supersonic crossing; the horizon is not unique."""

    def __init__(self, positions: Sequence[float]):
        where = ", ".join(f"{x:.2f}" for x in positions)
        super().__init__(None, f"{len(positions)} sonic crossings at x = {where} μm")
        self.positions = list(positions)


class DriveKind(str, Enum):
    PUMP = "pump"
    PROBE = "probe"
    WHITE_NOISE = "white_noise"


@dataclass(frozen=True)
class DriveRamp:
    """Amplitude envelope in time: from ``initial_fraction`` to 1 over ``duration``."""
    start: float = 0.0  # ps
    duration: float = 0.0  # ps
    initial_fraction: float = 0.0
    shape: str = "raised_cosine"  # or "linear"

    def factor(self, t: float) -> float:
        if self.duration <= 0 or t >= self.start + self.duration:
            return 1.0
        if t <= self.start:
            return self.initial_fraction
        s = (t - self.start) / self.duration
        if self.shape == "linear":
            w = s
        else:
            w = 0.5 * (1.0 - np.cos(np.pi * s))
        return self.initial_fraction + (1.0 - self.initial_fraction) * w


@dataclass(frozen=True)
class DriveTerm:
    """One source term of the field equation.

    ``omega`` is the offset from the pump frequency (the lab-frame frequency
    is ω_p + omega). The spatial profile is amplitude·envelope·e^{i·phase},
    with phase = k·x unless an explicit phase profile is given.
    """
    kind: DriveKind
    envelope: np.ndarray
    k: float = 0.0  # 1/μm
    omega: float = 0.0  # 1/ps
    amplitude: float = 0.0  # sqrt(1/μm)/ps
    seed: Optional[int] = None
    phase: Optional[np.ndarray] = None
    ramp: Optional[DriveRamp] = None

    def spatial(self, x: np.ndarray, t: float) -> np.ndarray:
        phase = self.phase if self.phase is not None else self.k * x
        scale = self.ramp.factor(t) if self.ramp is not None else 1.0
        return (scale * self.amplitude) * self.envelope * np.exp(1j * phase)


@dataclass
class FieldState:
    psi: np.ndarray  # rotating-frame field [sqrt(1/μm)]
    t: float = 0.0  # ps


@dataclass
class FieldHistory:
    """Recorded perturbation δφ(x, t) = φ(x, t) − φ₀(x) in the rotating frame."""
    times: np.ndarray  # ps
    x: np.ndarray  # μm
    frames: np.ndarray  # (n_times, n_points) complex
    omega_p: float  # 1/ps
    dt_record: float  # ps
    kind: str
    metadata: Dict[str, Any] = field(default_factory=dict)

    def demodulated(self, background: "BackgroundState") -> "FieldHistory":
        """Remove the background phase so that wavevectors are Bogoliubov k."""
        frames = self.frames * np.exp(-1j * np.angle(background.psi0))[np.newaxis, :]
        return replace(self, frames=frames, metadata={**self.metadata, "demodulated": True})


@dataclass
class BackgroundState:
    """Converged steady state and the LDA profiles derived from it."""
    grid: SimGrid
    params: PolaritonParams
    pump: PumpProfile
    defect: DefectPotential
    psi0: np.ndarray
    n0: np.ndarray
    v0: np.ndarray
    c_B: np.ndarray
    m_det: np.ndarray
    horizon_x: Optional[float]
    residual: float
    t: float
    margin: float = 0.0
    absorber_strength: float = 0.0
    horizon_crossings: int = 0

    @property
    def x(self) -> np.ndarray:
        return self.grid.x

    @property
    def interior(self) -> np.ndarray:
        x = self.x
        lo = self.grid.x0 + self.margin
        hi = self.grid.x0 + self.grid.length - self.margin
        return (x >= lo) & (x <= hi)

    def plateau(self, x_lo: float, x_hi: float) -> LocalHydro:
        """Local hydrodynamics averaged over [x_lo, x_hi]."""
        sel = (self.x >= x_lo) & (self.x <= x_hi)
        if not np.any(sel):
            raise ValueError(f"empty plateau window [{x_lo}, {x_hi}]")
        return local_hydro(float(np.mean(self.n0[sel])), float(np.mean(self.v0[sel])), self.params)


def default_time_step(grid: SimGrid, params: PolaritonParams, safety: float = 0.4) -> float:
    """dt = safety·dx² m*/(πħ)."""
    return safety * max_time_step(grid, params)


def max_time_step(grid: SimGrid, params: PolaritonParams) -> float:
    return grid.dx**2 * params.mass / (np.pi * HBAR)


def default_record_stride(dt: float, omega_max: float, headroom: float = 3.0) -> int:
    """Largest stride whose Nyquist frequency still exceeds headroom·ω_max."""
    return max(1, int(np.floor(np.pi / (headroom * abs(omega_max) * dt))))


def absorbing_mask(grid: SimGrid, margin: float, strength: float) -> np.ndarray:
    """Raised-cosine extra loss [1/ps] confined to margins at both grid edges."""
    if margin < 0 or margin >= grid.length / 4:
        raise ValueError("absorbing margin must lie in [0, length/4)")
    mask = np.zeros(grid.n_points)
    if margin == 0 or strength == 0:
        return mask
    x = grid.x
    left = grid.x0 + margin
    right = grid.x0 + grid.length - margin
    depth = np.zeros_like(x)
    depth = np.where(x < left, (left - x) / margin, depth)
    depth = np.where(x > right, (x - right) / margin, depth)
    depth = np.clip(depth, 0.0, 1.0)
    mask = strength * 0.5 * (1.0 - np.cos(np.pi * depth))
    mask[(x >= left) & (x <= right)] = 0.0
    return mask


def pump_drive(pump: PumpProfile, grid: SimGrid, ramp: Optional[DriveRamp] = None) -> DriveTerm:
    x = grid.x
    scale = max(pump.F_up, pump.F_down, 1e-300)
    return DriveTerm(kind=DriveKind.PUMP, envelope=pump.amplitude(x) / scale, amplitude=scale,
                     phase=pump.phase(x), ramp=ramp)


def probe_drive(grid: SimGrid, center: float, width: float, k: float, omega: float,
                amplitude: float, ramp: Optional[DriveRamp] = None) -> DriveTerm:
    """Gaussian probe exp(−(x − center)²/(2 width²)) at rotating-frame offset ω."""
    envelope = np.exp(-((grid.x - center) ** 2) / (2.0 * width**2))
    return DriveTerm(kind=DriveKind.PROBE, envelope=envelope, k=k, omega=omega,
                     amplitude=amplitude, ramp=ramp)


def noise_drive(grid: SimGrid, amplitude: float, seed: int,
                envelope: Optional[np.ndarray] = None) -> DriveTerm:
    if envelope is None:
        envelope = np.ones(grid.n_points)
    return DriveTerm(kind=DriveKind.WHITE_NOISE, envelope=envelope, amplitude=amplitude, seed=seed)


def _phi1(z: np.ndarray) -> np.ndarray:
    """(e^z − 1)/z, accurate near z = 0."""
    small = np.abs(z) < 1e-8
    safe = np.where(small, 1.0, z)
    return np.where(small, 1.0 + 0.5 * z, np.expm1(safe) / safe)


class SplitStepPropagator:
    """Symmetric split-step stepper: half kinetic, full local, half kinetic."""

    def __init__(self, grid: SimGrid, params: PolaritonParams,
                 potential: Optional[np.ndarray] = None,
                 absorber: Optional[np.ndarray] = None,
                 dt: Optional[float] = None, lossless: bool = False,
                 density_scale: Optional[float] = None):
        self.grid = grid
        self.params = params
        self.dt = dt or grid.dt or default_time_step(grid, params)
        dt_max = max_time_step(grid, params)
        if self.dt > dt_max * (1.0 + 1e-12):
            raise StabilityBoundViolation(self.dt, dt_max)

        self.x = grid.x
        kinetic = 0.5 * params.hbar_over_mass * grid.k**2
        self.half_kinetic = np.exp(-0.5j * kinetic * self.dt)

        gamma = np.zeros(grid.n_points) if lossless else np.full(grid.n_points, params.gamma)
        if absorber is not None:
            gamma = gamma + absorber
        self.gamma_profile = gamma
        potential = np.zeros(grid.n_points) if potential is None else potential
        self.linear = potential / HBAR - params.detuning - 0.5j * gamma

        if density_scale is None:
            density_scale = max(abs(params.detuning), params.gamma) / params.g
        self.blowup_limit = 1e3 * density_scale
        self._rngs: Dict[int, np.random.Generator] = {}

    def _rng(self, seed: int) -> np.random.Generator:
        if seed not in self._rngs:
            self._rngs[seed] = np.random.default_rng(seed)
        return self._rngs[seed]

    def _local_step(self, psi: np.ndarray, t: float, drives: Sequence[DriveTerm]) -> np.ndarray:
        dt = self.dt
        g = self.params.g
        density = np.abs(psi) ** 2

        def advance(a: np.ndarray) -> np.ndarray:
            out = np.exp(-1j * a * dt) * psi
            for drive in drives:
                if drive.kind == DriveKind.WHITE_NOISE:
                    continue
                source = drive.spatial(self.x, t + 0.5 * dt)
                z = -1j * (a - drive.omega) * dt
                out = out - 1j * source * np.exp(-1j * drive.omega * (t + dt)) * dt * _phi1(z)
            return out

        predictor = advance(self.linear + g * density)
        mid_density = 0.5 * (density + np.abs(predictor) ** 2)
        return advance(self.linear + g * mid_density)

    def step(self, state: FieldState, drives: Sequence[DriveTerm] = ()) -> FieldState:
        psi = np.fft.ifft(self.half_kinetic * np.fft.fft(state.psi))
        psi = self._local_step(psi, state.t, drives)
        psi = np.fft.ifft(self.half_kinetic * np.fft.fft(psi))
        for drive in drives:
            if drive.kind == DriveKind.WHITE_NOISE and drive.amplitude > 0:
                rng = self._rng(drive.seed or 0)
                xi = rng.standard_normal(self.grid.n_points) + 1j * rng.standard_normal(self.grid.n_points)
                psi = psi + drive.amplitude * drive.envelope * xi / np.sqrt(2.0)
        return FieldState(psi=psi, t=state.t + self.dt)

    def check(self, state: FieldState) -> None:
        peak = float(np.max(np.abs(state.psi) ** 2))
        if not np.isfinite(peak) or peak > self.blowup_limit:
            raise NumericalBlowup(state.t, peak)

    def evolve(self, state: FieldState, drives: Sequence[DriveTerm], n_steps: int,
               callback: Optional[Callable[[int, FieldState], None]] = None,
               check_every: int = 64) -> FieldState:
        for i in range(n_steps):
            state = self.step(state, drives)
            if (i + 1) % check_every == 0 or i + 1 == n_steps:
                self.check(state)
            if callback is not None:
                callback(i + 1, state)
        return state


class LinearizedPropagator:
    """Evolves a small perturbation δφ around a fixed background φ₀.

    Used for the loss-free verification stage: the intrinsic loss is removed
    from the perturbation while the absorbing margins stay active.
    """

    def __init__(self, background: "BackgroundState", dt: Optional[float] = None,
                 include_loss: bool = False):
        grid, params = background.grid, background.params
        self.grid = grid
        self.x = grid.x
        self.dt = dt or grid.dt or default_time_step(grid, params)
        dt_max = max_time_step(grid, params)
        if self.dt > dt_max * (1.0 + 1e-12):
            raise StabilityBoundViolation(self.dt, dt_max)
        kinetic = 0.5 * params.hbar_over_mass * grid.k**2
        self.half_kinetic = np.exp(-0.5j * kinetic * self.dt)

        gamma = absorbing_mask(grid, background.margin, background.absorber_strength)
        if include_loss:
            gamma = gamma + params.gamma
        potential = background.defect.profile(grid.x)
        a = potential / HBAR - params.detuning + 2.0 * params.g * background.n0 - 0.5j * gamma
        b = params.g * background.psi0**2
        # w = (δ, δ*), dw/dt = A w with A = [[−ia, −ib], [ib*, ia*]]
        A11, A12, A21, A22 = -1j * a, -1j * b, 1j * np.conj(b), 1j * np.conj(a)
        half_trace = 0.5 * (A11 + A22)
        B11, B22 = A11 - half_trace, A22 - half_trace
        lam = np.sqrt(B11 * B22 * -1.0 + A12 * A21 + 0j)
        lam_dt = lam * self.dt
        cosh = np.cosh(lam_dt)
        small = np.abs(lam) < 1e-14
        sinhc = np.where(small, self.dt, np.sinh(lam_dt) / np.where(small, 1.0, lam))
        growth = np.exp(half_trace * self.dt)
        self.E11 = growth * (cosh + sinhc * B11)
        self.E12 = growth * sinhc * A12
        self.E21 = growth * sinhc * A21
        self.E22 = growth * (cosh + sinhc * B22)

    def step(self, state: FieldState, drives: Sequence[DriveTerm] = ()) -> FieldState:
        dt = self.dt
        delta = np.fft.ifft(self.half_kinetic * np.fft.fft(state.psi))

        def source(t: float) -> np.ndarray:
            total = np.zeros_like(delta)
            for drive in drives:
                if drive.kind == DriveKind.PROBE:
                    total = total - 1j * drive.spatial(self.x, t) * np.exp(-1j * drive.omega * t)
            return total

        s0 = source(state.t)
        u = delta + 0.5 * dt * s0
        v = np.conj(u)
        delta = self.E11 * u + self.E12 * v
        delta = delta + 0.5 * dt * source(state.t + dt)
        delta = np.fft.ifft(self.half_kinetic * np.fft.fft(delta))
        return FieldState(psi=delta, t=state.t + dt)


def step(state: FieldState, drives: Sequence[DriveTerm], potential: Optional[np.ndarray],
         grid: SimGrid, params: PolaritonParams, absorber: Optional[np.ndarray] = None,
         dt: Optional[float] = None) -> FieldState:
    """Advance the field by one time step."""
    propagator = SplitStepPropagator(grid, params, potential=potential, absorber=absorber, dt=dt)
    new_state = propagator.step(state, drives)
    propagator.check(new_state)
    return new_state


def initial_field(grid: SimGrid, params: PolaritonParams, pump: PumpProfile) -> np.ndarray:
    """Homogeneous EOS solutions: upper branch upstream, lowest root downstream."""
    x = grid.x
    v_up, v_down = params.velocity(pump.k_up), params.velocity(pump.k_down)
    n_up = equation_of_state_roots(pump.F_up, v_up, params)[-1]
    n_down = equation_of_state_roots(pump.F_down, v_down, params)[0]
    upstream = x < pump.x_switch
    n = np.where(upstream, n_up, n_down)
    delta = np.where(upstream, effective_detuning(v_up, params), effective_detuning(v_down, params))
    F = pump.field(x)
    return -F / (params.g * n - delta - 0.5j * params.gamma)


def velocity_profile(psi: np.ndarray, grid: SimGrid, params: PolaritonParams) -> np.ndarray:
    """(ħ/m*)·∂ₓ arg ψ with the phase unwrapped."""
    phase = np.unwrap(np.angle(psi))
    return params.hbar_over_mass * np.gradient(phase, grid.dx)


def find_horizons(x: np.ndarray, v0: np.ndarray, c_B: np.ndarray,
                  interior: np.ndarray) -> List[float]:
    """Positions where the flow turns supersonic (|v₀| − c_B crosses 0 upward)."""
    diff = np.abs(v0) - c_B
    crossings: List[float] = []
    for i in range(len(x) - 1):
        if not (interior[i] and interior[i + 1]):
            continue
        a, b = diff[i], diff[i + 1]
        if not (np.isfinite(a) and np.isfinite(b)):
            continue
        if a < 0 <= b:
            crossings.append(float(x[i] + (x[i + 1] - x[i]) * (-a) / (b - a)))
    return crossings


def unique_horizon(crossings: Sequence[float]) -> float:
    """The single sonic crossing; none or several means there is no horizon to work with."""
    if not crossings:
        raise NotTranscritical(None, "steady state has no sonic horizon")
    if len(crossings) > 1:
        raise MultipleHorizons(crossings)
    return crossings[0]


def build_background(psi: np.ndarray, t: float, residual: float, grid: SimGrid,
                     params: PolaritonParams, pump: PumpProfile, defect: DefectPotential,
                     margin: float, strength: float) -> BackgroundState:
    n0 = np.abs(psi) ** 2
    v0 = velocity_profile(psi, grid, params)
    c_B, m_det = local_hydro_profile(n0, v0, params)
    state = BackgroundState(grid=grid, params=params, pump=pump, defect=defect, psi0=psi,
                            n0=n0, v0=v0, c_B=c_B, m_det=m_det, horizon_x=None,
                            residual=residual, t=t, margin=margin, absorber_strength=strength)
    crossings = find_horizons(grid.x, v0, c_B, state.interior)
    state.horizon_crossings = len(crossings)
    if len(crossings) == 1:
        state.horizon_x = crossings[0]
    elif crossings:
        logger.warning(f"{len(crossings)} sonic crossings found; horizon left undefined")
    return state


def find_steady_state(grid: SimGrid, params: PolaritonParams, pump: PumpProfile,
                      defect: DefectPotential, tol: float = 1e-5, t_max: float = 8000.0,
                      margin: float = 50.0, strength: float = 1.0,
                      ramp_from: float = 1.1, ramp_duration: Optional[float] = None,
                      require_horizon: bool = True, progress_every: int = 10,
                      initial: Optional[np.ndarray] = None) -> BackgroundState:
    """Evolve from the seeded initial condition until the rotating-frame field is stationary.

    The residual is ‖φ(t+Δ) − φ(t)‖/(‖φ‖Δ) over the interior with Δ = 10/γ,
    in 1/ps.
    """
    absorber = absorbing_mask(grid, margin, strength)
    propagator = SplitStepPropagator(grid, params, potential=defect.profile(grid.x),
                                     absorber=absorber)
    if ramp_duration is None:
        ramp_duration = 20.0 / params.gamma
    drives = [pump_drive(pump, grid, DriveRamp(duration=ramp_duration,
                                               initial_fraction=ramp_from, shape="linear"))]

    psi = initial_field(grid, params, pump) if initial is None else initial
    state = FieldState(psi=psi.astype(complex), t=0.0)
    window = 10.0 / params.gamma
    steps_per_window = max(1, int(round(window / propagator.dt)))
    window = steps_per_window * propagator.dt
    interior = absorbing_mask(grid, margin, 1.0) == 0.0

    logger.info(
        f"Steady-state search: dt={propagator.dt:.4g} ps, window={window:.1f} ps, "
        f"t_max={t_max:.0f} ps, tol={tol:.1e}/ps"
    )
    residual = float("inf")
    n_windows = 0
    while state.t < t_max:
        previous = state.psi.copy()
        state = propagator.evolve(state, drives, steps_per_window)
        n_windows += 1
        norm = np.linalg.norm(state.psi[interior])
        residual = float(np.linalg.norm((state.psi - previous)[interior]) / (max(norm, 1e-300) * window))
        if progress_every and n_windows % progress_every == 0:
            logger.info(f"   t={state.t:.0f} ps, residual={residual:.3e}/ps")
        if state.t >= ramp_duration and residual < tol:
            break
    else:
        raise NoConvergence(t_max, residual)

    background = build_background(state.psi, state.t, residual, grid, params, pump, defect,
                                  margin, strength)
    logger.info(f"Steady state reached at t={state.t:.0f} ps (residual {residual:.2e}/ps), "
                f"horizon at {background.horizon_x}")
    if require_horizon:
        unique_horizon(find_horizons(grid.x, background.v0, background.c_B,
                                     background.interior))
    return background


def _record(advance: Callable[[FieldState, int], FieldState], state: FieldState,
            n_records: int, stride: int, reference: np.ndarray):
    frames = np.empty((n_records, reference.size), dtype=complex)
    times = np.empty(n_records)
    for i in range(n_records):
        state = advance(state, stride)
        frames[i] = state.psi - reference
        times[i] = state.t
    return state, times, frames


def _evolve_linear(propagator: LinearizedPropagator, state: FieldState,
                   drives: Sequence[DriveTerm], n_steps: int) -> FieldState:
    for _ in range(n_steps):
        state = propagator.step(state, drives)
    if not np.all(np.isfinite(state.psi)):
        raise NumericalBlowup(state.t, float("nan"))
    return state


def _propagator_for(background: BackgroundState) -> SplitStepPropagator:
    grid = background.grid
    absorber = absorbing_mask(grid, background.margin, background.absorber_strength)
    return SplitStepPropagator(grid, background.params,
                               potential=background.defect.profile(grid.x), absorber=absorber)


def run_with_noise(background: BackgroundState, noise: DriveTerm, duration: float,
                   record_stride: int) -> FieldHistory:
    """Seed the steady state with white noise each step and record δφ."""
    propagator = _propagator_for(background)
    drives = [pump_drive(background.pump, background.grid), noise]
    n_records = max(1, int(duration / (record_stride * propagator.dt)))
    state = FieldState(psi=background.psi0.copy(), t=0.0)
    logger.info(f"Noise run: {n_records} records, stride {record_stride}, "
                f"amplitude {noise.amplitude:.3g}")
    _, times, frames = _record(lambda s, n: propagator.evolve(s, drives, n), state,
                               n_records, record_stride, background.psi0)
    return FieldHistory(times=times, x=background.x, frames=frames,
                        omega_p=background.params.omega_p,
                        dt_record=record_stride * propagator.dt, kind="noise",
                        metadata={"seed": noise.seed, "noise_amplitude": noise.amplitude,
                                  "record_stride": record_stride})


def run_with_probe(background: BackgroundState, probe: DriveTerm, relax_time: float,
                   record_time: float, record_stride: int,
                   omega_min: Optional[float] = None, tol: float = 2e-2,
                   linearized: bool = False) -> FieldHistory:
    """Drive the steady state with a CW probe, relax, then record δφ.

    The probe oscillates at ω_p + probe.omega in the lab frame. After the
    relaxation the response must repeat itself over whole probe periods to
    within ``tol`` (relative), otherwise NoConvergence is raised. With
    ``linearized`` the perturbation is evolved on the frozen background
    without intrinsic loss.
    """
    if omega_min is not None and probe.omega < omega_min:
        raise ProbeInGap(probe.omega, omega_min)

    advance: Callable[[FieldState, int], FieldState]
    if linearized:
        linear = LinearizedPropagator(background)
        dt = linear.dt
        state = FieldState(psi=np.zeros_like(background.psi0), t=0.0)
        reference = np.zeros_like(background.psi0)
        advance = lambda s, n: _evolve_linear(linear, s, [probe], n)  # noqa: E731
    else:
        full = _propagator_for(background)
        dt = full.dt
        drives = [pump_drive(background.pump, background.grid), probe]
        state = FieldState(psi=background.psi0.copy(), t=0.0)
        reference = background.psi0
        advance = lambda s, n: full.evolve(s, drives, n)  # noqa: E731

    state = advance(state, max(1, int(relax_time / dt)))

    period = 2.0 * np.pi / abs(probe.omega) if probe.omega != 0 else 10.0
    n_periods = max(1, int(np.ceil(20.0 / period)))
    check_steps = max(1, int(round(n_periods * period / dt)))
    before = state.psi - reference
    state = advance(state, check_steps)
    after = state.psi - reference
    scale = max(float(np.linalg.norm(after)), 1e-300)
    residual = float(np.linalg.norm(after - before) / scale)
    if residual > tol:
        raise NoConvergence(state.t, residual)

    n_records = max(1, int(record_time / (record_stride * dt)))
    state, times, frames = _record(advance, state, n_records, record_stride, reference)
    logger.debug(f"Probe ω={probe.omega:.4g}/ps recorded {n_records} frames "
                 f"(relax residual {residual:.2e})")
    return FieldHistory(times=times, x=background.x, frames=frames,
                        omega_p=background.params.omega_p, dt_record=record_stride * dt,
                        kind="probe",
                        metadata={"omega_pr": probe.omega, "k_pr": probe.k,
                                  "probe_amplitude": probe.amplitude,
                                  "linearized": linearized, "relax_residual": residual,
                                  "record_stride": record_stride})
