"""Space–time spectroscopy of recorded perturbations.

Maps are A(k, ω) = Σₓ Σₜ w(x)w(t) δφ(x, t) e^{−ik(x − x_ref)} e^{iω(t − t₀)},
so a component a·e^{i(kx − ωt)} shows up at (k, ω) and the conjugate
trace v* of a Bogoliubov wave at (−k, −ω).
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel
from scipy.optimize import least_squares
from scipy.signal.windows import hann

from ..models import mev_from_rate
from .gpe_engine import FieldHistory
from .model import (
    ChannelLabel,
    ChannelSet,
    Direction,
    LocalHydro,
    Regime,
    branch_roots,
    dispersion_lab_frame,
)

logger = logging.getLogger(__name__)

MIN_REGION_POINTS = 64
DEFAULT_BOX = 3


class RegionTooNarrow(Exception):
    """Analysis region holds too few grid points."""

    def __init__(self, n_points: int):
        super().__init__(f"analysis region has {n_points} points, need {MIN_REGION_POINTS}")
        self.n_points = n_points


class ChannelOffGrid(Exception):
    """A channel's (k, ω) lies outside the map axes."""

    def __init__(self, label: str, k: float, omega: float):
        super().__init__(f"channel {label} at k={k:.4g}/μm, ω={omega:.4g}/ps is off the map")
        self.label = label
        self.k = k
        self.omega = omega


class FitDiverged(Exception):
    """Nonlinear least squares did not produce a usable resonance."""

    def __init__(self, reason: str):
        super().__init__(f"Breit-Wigner fit diverged: {reason}")
        self.reason = reason


class PeakNotResolved(Exception):
    """The sampled frequencies cannot resolve the resonance."""

    def __init__(self, fwhm: float, spacing: float, message: Optional[str] = None):
        super().__init__(message or f"linewidth {fwhm:.3g}/ps is under two samples "
                                    f"({spacing:.3g}/ps spacing)")
        self.fwhm = fwhm
        self.spacing = spacing


@dataclass
class SpectrumMap:
    region: str
    k_axis: np.ndarray  # 1/μm, increasing
    omega_axis: np.ndarray  # 1/ps, increasing
    field: np.ndarray  # (n_k, n_omega) complex, divided by ``normalization``
    normalization: float  # window gain × reference
    reference: float
    mode: str = "probe"
    x_ref: float = 0.0
    bounds: Tuple[float, float] = (0.0, 0.0)

    @property
    def amplitude(self) -> np.ndarray:
        return np.abs(self.field)

    @property
    def k_resolution(self) -> float:
        return float(self.k_axis[1] - self.k_axis[0])

    @property
    def omega_resolution(self) -> float:
        return float(self.omega_axis[1] - self.omega_axis[0])

    def locate(self, k: float, omega: float) -> Optional[Tuple[int, int]]:
        """Nearest bin, or None when (k, ω) is outside the axes."""
        dk, dw = self.k_resolution, self.omega_resolution
        if not (self.k_axis[0] - 0.5 * dk <= k <= self.k_axis[-1] + 0.5 * dk):
            return None
        if not (self.omega_axis[0] - 0.5 * dw <= omega <= self.omega_axis[-1] + 0.5 * dw):
            return None
        return (int(np.argmin(np.abs(self.k_axis - k))),
                int(np.argmin(np.abs(self.omega_axis - omega))))


@dataclass
class ChannelAmplitudes:
    omega_pr: float  # 1/ps
    regime: Regime
    amplitudes: Dict[str, Optional[complex]]  # label or label* -> complex, None = closed
    box: int = DEFAULT_BOX
    k_resolution: Dict[str, float] = field(default_factory=dict)
    omega_resolution: Dict[str, float] = field(default_factory=dict)

    def get(self, label: str) -> Optional[complex]:
        return self.amplitudes.get(label)

    def magnitude(self, label: str) -> Optional[float]:
        value = self.amplitudes.get(label)
        return None if value is None else abs(value)

    def present(self, label: str) -> bool:
        return self.amplitudes.get(label) is not None


class EnergyBalance(BaseModel):
    omega: float
    regime: Regime
    flux_in: float
    flux_out: float
    flux_out_positive: float
    flux_out_negative: float
    imbalance: float
    gain: float
    loss_budget: float
    used_conjugate: bool
    passes: bool
    fluxes: Dict[str, float]


@dataclass
class BreitWignerFit:
    Omega_qnm: float  # 1/ps
    Gamma_qnm: float  # 1/ps
    t_bg: complex
    alpha: complex
    residual: float  # ‖data − model‖/‖data‖
    covariance: np.ndarray
    uncertainties: Dict[str, float]
    mode: str
    n_samples: int
    phase_slip: Optional[float] = None
    phase_slip_ok: Optional[bool] = None

    @property
    def Q(self) -> float:
        return self.Omega_qnm / self.Gamma_qnm

    def model(self, omega: np.ndarray) -> np.ndarray:
        return breit_wigner(omega, self.Omega_qnm, self.Gamma_qnm, self.t_bg, self.alpha)

    def record(self) -> Dict[str, Any]:
        return {
            "Omega_qnm_per_ps": self.Omega_qnm,
            "Omega_qnm_meV": mev_from_rate(self.Omega_qnm),
            "Gamma_qnm_per_ps": self.Gamma_qnm,
            "Gamma_qnm_meV": mev_from_rate(self.Gamma_qnm),
            "Q": self.Q,
            "t_bg": [self.t_bg.real, self.t_bg.imag],
            "alpha": [self.alpha.real, self.alpha.imag],
            "residual": self.residual,
            "uncertainties": self.uncertainties,
            "mode": self.mode,
            "n_samples": self.n_samples,
            "phase_slip_rad": self.phase_slip,
            "phase_slip_ok": self.phase_slip_ok,
        }


# ---------------------------------------------------------------------------
# Spectra
# ---------------------------------------------------------------------------

def windowed_spectrum(history: FieldHistory, region_bounds: Tuple[float, float],
                      region: str = "upstream", reference: Optional[float] = None,
                      normalization: str = "probe", x_ref: float = 0.0,
                      omega_lowest: Optional[float] = None) -> SpectrumMap:
    """Hann-windowed 2D Fourier transform of a history over one spatial region.

    ``normalization="probe"`` divides by the window gain and ``reference``
    (the probe amplitude; 1 when None); ``"max"`` scales the map to a unit
    maximum.
    """
    lo, hi = region_bounds
    sel = (history.x >= lo) & (history.x <= hi)
    n_x = int(np.count_nonzero(sel))
    if n_x < MIN_REGION_POINTS:
        raise RegionTooNarrow(n_x)
    x = history.x[sel]
    dx = float(x[1] - x[0])
    frames = history.frames[:, sel]
    n_t = frames.shape[0]
    if omega_lowest and n_t * history.dt_record < 2 * 2.0 * np.pi / abs(omega_lowest):
        logger.warning(f"history of {n_t * history.dt_record:.0f} ps spans fewer than two "
                       f"periods at ω={omega_lowest:.3g}/ps")

    w_t = hann(n_t, sym=False)
    w_x = hann(n_x, sym=False)
    windowed = frames * w_t[:, None] * w_x[None, :]

    # e^{−ikx} over space, e^{+iωt} over time
    spectrum = np.fft.fft(windowed, axis=1)
    spectrum = np.fft.ifft(spectrum, axis=0) * n_t
    k_axis = 2.0 * np.pi * np.fft.fftfreq(n_x, d=dx)
    omega_axis = 2.0 * np.pi * np.fft.fftfreq(n_t, d=history.dt_record)
    phase = (np.exp(-1j * k_axis * (x[0] - x_ref))[None, :]
             * np.exp(1j * omega_axis * history.times[0])[:, None])
    spectrum = spectrum * phase

    spectrum = np.fft.fftshift(spectrum).T  # (k, ω)
    k_axis = np.fft.fftshift(k_axis)
    omega_axis = np.fft.fftshift(omega_axis)

    gain = float(np.sum(w_x) * np.sum(w_t))
    if normalization == "max":
        ref = float(np.max(np.abs(spectrum)) / gain) or 1.0
    elif normalization == "probe":
        ref = float(reference) if reference else 1.0
    else:
        raise ValueError(f"unknown normalization {normalization!r}")
    norm = gain * ref
    return SpectrumMap(region=region, k_axis=k_axis, omega_axis=omega_axis,
                       field=spectrum / norm, normalization=norm, reference=ref,
                       mode=normalization, x_ref=x_ref, bounds=(float(lo), float(hi)))


def _box_amplitude(spectrum: SpectrumMap, label: str, k: float, omega: float,
                   box: int) -> complex:
    loc = spectrum.locate(k, omega)
    if loc is None:
        raise ChannelOffGrid(label, k, omega)
    i, j = loc
    half = box // 2
    n_k, n_w = spectrum.field.shape
    if i - half < 0 or i + half >= n_k or j - half < 0 or j + half >= n_w:
        raise ChannelOffGrid(label, k, omega)
    patch = spectrum.field[i - half:i + half + 1, j - half:j + half + 1]
    energy = float(np.sum(np.abs(patch) ** 2))
    magnitude = np.sqrt(energy / hann_box_gain(box))
    return complex(magnitude * np.exp(1j * np.angle(spectrum.field[i, j])))


def hann_box_gain(box: int) -> float:
    """Fraction of an on-bin Hann peak's power captured by a box, squared over two axes."""
    weights = {0: 1.0, 1: 0.25}
    per_axis = sum(weights.get(abs(o), 0.0) for o in range(-(box // 2), box // 2 + 1))
    return per_axis**2


def extract_channel_amplitudes(maps: Union[SpectrumMap, Mapping[str, SpectrumMap]],
                               channels: ChannelSet, omega_pr: float,
                               box: int = DEFAULT_BOX) -> ChannelAmplitudes:
    """Integrate each channel's peak and its conjugate trace at (−k, −ω)."""
    if isinstance(maps, SpectrumMap):
        maps = {maps.region: maps}
    amplitudes: Dict[str, Optional[complex]] = {}
    k_res: Dict[str, float] = {}
    w_res: Dict[str, float] = {}
    for label in ChannelLabel:
        amplitudes[label.value] = None
        amplitudes[f"{label.value}*"] = None
    for channel in channels.channels:
        spectrum = maps.get(channel.side.value)
        if spectrum is None:
            continue
        amplitudes[channel.label.value] = _box_amplitude(spectrum, channel.label.value,
                                                         channel.k, omega_pr, box)
        amplitudes[f"{channel.label.value}*"] = _box_amplitude(
            spectrum, f"{channel.label.value}*", -channel.k, -omega_pr, box)
        k_res[channel.side.value] = spectrum.k_resolution
        w_res[channel.side.value] = spectrum.omega_resolution
    return ChannelAmplitudes(omega_pr=omega_pr, regime=channels.regime, amplitudes=amplitudes,
                             box=box, k_resolution=k_res, omega_resolution=w_res)


def channel_spectra(history: FieldHistory, regions: Mapping[str, Tuple[float, float]],
                    reference: Optional[float], x_ref: float = 0.0) -> Dict[str, SpectrumMap]:
    return {name: windowed_spectrum(history, bounds, region=name, reference=reference,
                                    x_ref=x_ref)
            for name, bounds in regions.items()}


def window_modulation(history: FieldHistory, regions: Mapping[str, Tuple[float, float]],
                      channels: ChannelSet, omega_pr: float, reference: Optional[float],
                      x_ref: float = 0.0) -> float:
    """Largest relative change of the channel magnitudes when the record is halved."""
    full = extract_channel_amplitudes(channel_spectra(history, regions, reference, x_ref),
                                      channels, omega_pr)
    half_n = history.frames.shape[0] // 2
    half = FieldHistory(times=history.times[half_n:], x=history.x,
                        frames=history.frames[half_n:], omega_p=history.omega_p,
                        dt_record=history.dt_record, kind=history.kind,
                        metadata=history.metadata)
    short = extract_channel_amplitudes(channel_spectra(half, regions, reference, x_ref),
                                       channels, omega_pr)
    present = [abs(v) for v in full.amplitudes.values() if v is not None]
    floor = 1e-6 * max(present, default=0.0)
    worst = 0.0
    for label, value in full.amplitudes.items():
        other = short.amplitudes.get(label)
        # traces at the noise floor carry no channel
        if value is None or other is None or abs(value) <= floor:
            continue
        worst = max(worst, abs(abs(other) - abs(value)) / abs(value))
    return worst


def lda_overlay(spectrum: SpectrumMap, hydro: LocalHydro) -> Dict[str, np.ndarray]:
    """ω±(k) on the map's k axis."""
    plus, minus = dispersion_lab_frame(spectrum.k_axis, hydro)
    return {"k": spectrum.k_axis, "omega_plus": np.asarray(plus),
            "omega_minus": np.asarray(minus)}


def ridge_offsets(spectrum: SpectrumMap, hydro: LocalHydro,
                  omegas: Optional[Sequence[float]] = None,
                  search_bins: int = 4) -> List[Dict[str, float]]:
    """Distance in k between the map's local maxima and the LDA roots at fixed ω."""
    if omegas is None:
        omegas = [w for w in spectrum.omega_axis if w > 0]
    rows: List[Dict[str, float]] = []
    for omega in omegas:
        j = int(np.argmin(np.abs(spectrum.omega_axis - omega)))
        column = spectrum.amplitude[:, j]
        for k_lda, sign in branch_roots(float(spectrum.omega_axis[j]), hydro):
            loc = spectrum.locate(k_lda, spectrum.omega_axis[j])
            if loc is None:
                continue
            i = loc[0]
            lo, hi = max(i - search_bins, 0), min(i + search_bins + 1, column.size)
            i_peak = lo + int(np.argmax(column[lo:hi]))
            k_peak = float(spectrum.k_axis[i_peak])
            rows.append({
                "omega": float(spectrum.omega_axis[j]),
                "branch": float(sign),
                "k_lda": float(k_lda),
                "k_peak": k_peak,
                "offset_bins": (k_peak - k_lda) / spectrum.k_resolution,
                "relative_offset": (k_peak - k_lda) / k_lda if k_lda else float("nan"),
            })
    return rows


# ---------------------------------------------------------------------------
# Flux bookkeeping
# ---------------------------------------------------------------------------

def energy_balance_check(amplitudes: ChannelAmplitudes, channels: ChannelSet, gamma: float,
                         distance: float = 100.0, tolerance: float = 0.05,
                         use_conjugate: bool = True) -> EnergyBalance:
    """Norm-weighted flux balance between the incoming probe and the outgoing channels.

    With ``use_conjugate`` the norm of each wave is measured as |a|² − |a*|²
    from the direct and conjugate traces; otherwise norm_sign·|a|² is used.
    The loss budget is the largest 1 − exp(−γ d/|v_g|) among the channels.
    """
    def weight(label: str, norm_sign: int) -> float:
        direct = amplitudes.magnitude(label) or 0.0
        if use_conjugate:
            conjugate = amplitudes.magnitude(f"{label}*") or 0.0
            return direct**2 - conjugate**2
        return norm_sign * direct**2

    fluxes: Dict[str, float] = {}
    flux_in = 0.0
    positive, negative = 0.0, 0.0
    loss_budget = 0.0
    for channel in channels.channels:
        if not amplitudes.present(channel.label.value):
            continue
        flux = abs(channel.group_velocity) * weight(channel.label.value, channel.norm_sign)
        fluxes[channel.label.value] = flux
        if gamma > 0:
            loss_budget = max(loss_budget,
                              1.0 - np.exp(-gamma * distance / abs(channel.group_velocity)))
        if channel.label == ChannelLabel.IN:
            flux_in = flux
        elif channel.direction == Direction.OUTGOING:
            if channel.norm_sign > 0:
                positive += flux
            else:
                negative += flux

    flux_out = positive + negative
    if flux_in == 0.0:
        imbalance = 0.0 if flux_out == 0.0 else float("inf")
        gain = 0.0
    else:
        imbalance = (flux_out - flux_in) / flux_in
        gain = positive / flux_in
    return EnergyBalance(
        omega=amplitudes.omega_pr, regime=amplitudes.regime, flux_in=flux_in,
        flux_out=flux_out, flux_out_positive=positive, flux_out_negative=negative,
        imbalance=imbalance, gain=gain, loss_budget=float(loss_budget),
        used_conjugate=use_conjugate, passes=bool(abs(imbalance) < tolerance),
        fluxes=fluxes,
    )


# ---------------------------------------------------------------------------
# Resonance fit
# ---------------------------------------------------------------------------

def breit_wigner(omega: np.ndarray, Omega: float, Gamma: float, t_bg: complex,
                 alpha: complex) -> np.ndarray:
    """t(ω) = t_bg + α/(ω − Ω + iΓ/2)."""
    return t_bg + alpha / (np.asarray(omega) - Omega + 0.5j * Gamma)


def _initial_guess(omega: np.ndarray, t: np.ndarray) -> Tuple[float, float, complex, complex]:
    mag = np.abs(t)
    i = int(np.argmax(mag))
    edges = np.concatenate([t[:2], t[-2:]])
    t_bg = complex(np.mean(edges))
    peak = mag[i] ** 2
    floor = min(np.abs(edges) ** 2)
    half = floor + 0.5 * (peak - floor)
    above = np.where(mag**2 >= half)[0]
    width = float(omega[above[-1]] - omega[above[0]]) if above.size > 1 else 0.0
    spacing = float(np.median(np.diff(omega)))
    Gamma = max(width, 2.0 * spacing)
    alpha = complex((t[i] - t_bg) * 0.5j * Gamma)
    return float(omega[i]), Gamma, t_bg, alpha


def breit_wigner_fit(omega: Sequence[float], t: Sequence[Any], mode: str = "complex",
                     phase_tolerance: float = 0.25) -> BreitWignerFit:
    """Fit t_bg + α/(ω − Ω + iΓ/2) to transmission samples around a peak.

    ``mode="complex"`` fits complex samples; ``mode="magnitude"`` fits |t|²
    with a complex background and a real non-negative residue. Gaps (None or
    NaN samples) are dropped.
    """
    omega = np.asarray(omega, dtype=float)
    values = np.array([np.nan if v is None else v for v in t], dtype=complex)
    keep = np.isfinite(omega) & np.isfinite(values)
    omega, values = omega[keep], values[keep]
    order = np.argsort(omega)
    omega, values = omega[order], values[order]
    if omega.size < 8:
        raise PeakNotResolved(float("nan"), float("nan"),
                              f"need at least 8 samples around the peak, got {omega.size}")
    if mode == "magnitude":
        values = np.abs(values).astype(complex)

    Omega0, Gamma0, t_bg0, alpha0 = _initial_guess(omega, values)
    scale = max(float(np.max(np.abs(values))), 1e-300)

    if mode == "complex":
        x0 = [Omega0, Gamma0, t_bg0.real, t_bg0.imag, alpha0.real, alpha0.imag]
        lower = [omega[0], 1e-12, -np.inf, -np.inf, -np.inf, -np.inf]
        upper = [omega[-1], np.inf, np.inf, np.inf, np.inf, np.inf]

        def residuals(p: np.ndarray) -> np.ndarray:
            model = breit_wigner(omega, p[0], p[1], p[2] + 1j * p[3], p[4] + 1j * p[5])
            diff = (model - values) / scale
            return np.concatenate([diff.real, diff.imag])
    elif mode == "magnitude":
        target = np.abs(values) ** 2
        x0 = [Omega0, Gamma0, abs(t_bg0), 0.0, max(abs(alpha0), 1e-12)]
        lower = [omega[0], 1e-12, -np.inf, -np.inf, 0.0]
        upper = [omega[-1], np.inf, np.inf, np.inf, np.inf]

        def residuals(p: np.ndarray) -> np.ndarray:
            model = breit_wigner(omega, p[0], p[1], p[2] + 1j * p[3], p[4])
            return (np.abs(model) ** 2 - target) / scale**2
    else:
        raise ValueError(f"unknown fit mode {mode!r}")

    x0 = np.clip(np.asarray(x0, dtype=float), np.asarray(lower) + 1e-15,
                 np.asarray(upper) - 1e-15)
    try:
        result = least_squares(residuals, x0, bounds=(lower, upper), x_scale="jac",
                               max_nfev=2000)
    except (ValueError, np.linalg.LinAlgError) as e:
        raise FitDiverged(str(e)) from e
    if not result.success or not np.all(np.isfinite(result.x)):
        raise FitDiverged(result.message)

    p = result.x
    Omega, Gamma = float(p[0]), float(p[1])
    if Gamma <= 1e-12:
        raise FitDiverged("linewidth collapsed to zero")
    spacing = float(np.median(np.diff(omega)))
    if Gamma < 2.0 * spacing:
        raise PeakNotResolved(Gamma, spacing)
    if omega[-1] - omega[0] < 3.0 * Gamma:
        raise PeakNotResolved(Gamma, spacing,
                              f"samples span {omega[-1] - omega[0]:.3g}/ps, under three "
                              f"linewidths of {Gamma:.3g}/ps")

    t_bg = complex(p[2] + 1j * p[3])
    alpha = complex(p[4] + 1j * p[5]) if mode == "complex" else complex(p[4])

    n_res, n_par = result.fun.size, p.size
    dof = max(n_res - n_par, 1)
    s2 = 2.0 * result.cost / dof
    jac = result.jac
    covariance = np.linalg.pinv(jac.T @ jac) * s2
    names = ["Omega", "Gamma", "re_t_bg", "im_t_bg", "re_alpha", "im_alpha"][:n_par]
    if mode == "magnitude":
        names = ["Omega", "Gamma", "re_t_bg", "im_t_bg", "alpha"]
    uncertainties = {n: float(np.sqrt(max(covariance[i, i], 0.0))) for i, n in enumerate(names)}

    model = breit_wigner(omega, Omega, Gamma, t_bg, alpha)
    if mode == "complex":
        residual = float(np.linalg.norm(model - values) / np.linalg.norm(values))
    else:
        residual = float(np.linalg.norm(np.abs(model) ** 2 - np.abs(values) ** 2)
                         / np.linalg.norm(np.abs(values) ** 2))

    phase_slip = None
    phase_ok = None
    if mode == "complex":
        edges = np.array([Omega - 10.0 * Gamma, Omega + 10.0 * Gamma])
        resonant = alpha / (edges - Omega + 0.5j * Gamma)
        phase_slip = float(abs(np.unwrap(np.angle(resonant))[1] - np.unwrap(np.angle(resonant))[0]))
        phase_ok = bool(abs(phase_slip - np.pi) < phase_tolerance)

    fit = BreitWignerFit(Omega_qnm=Omega, Gamma_qnm=Gamma, t_bg=t_bg, alpha=alpha,
                         residual=residual, covariance=covariance,
                         uncertainties=uncertainties, mode=mode, n_samples=int(omega.size),
                         phase_slip=phase_slip, phase_slip_ok=phase_ok)
    logger.info(f"Breit-Wigner fit ({mode}): Ω={Omega:.4g}/ps, Γ={Gamma:.4g}/ps, "
                f"residual={residual:.3g}")
    return fit


# ---------------------------------------------------------------------------
# Sweep collation
# ---------------------------------------------------------------------------

@dataclass
class ScatterSweepResult:
    """Collated probe sweep; ``entries[i]`` is None where the run failed."""
    omega_grid: np.ndarray
    entries: List[Optional[ChannelAmplitudes]]
    errors: Dict[int, str] = field(default_factory=dict)
    balances: List[Optional[EnergyBalance]] = field(default_factory=list)
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if np.any(np.diff(self.omega_grid) <= 0):
            raise ValueError("sweep frequencies must be strictly increasing")
        if not self.balances:
            self.balances = [None] * len(self.entries)

    @property
    def gaps(self) -> List[float]:
        return [float(w) for w, e in zip(self.omega_grid, self.entries) if e is None]

    def _ratio(self, label: str) -> np.ndarray:
        out = np.full(self.omega_grid.size, np.nan)
        for i, entry in enumerate(self.entries):
            if entry is None:
                continue
            a_in = entry.magnitude("in")
            a = entry.magnitude(label)
            if a_in and a is not None:
                out[i] = a / a_in
        return out

    @property
    def T_down(self) -> np.ndarray:
        return self._ratio("down")

    @property
    def R_HR(self) -> np.ndarray:
        return self._ratio("HR")

    @property
    def T_dn(self) -> np.ndarray:
        return self._ratio("dn")

    @property
    def T_complex(self) -> np.ndarray:
        out = np.full(self.omega_grid.size, np.nan + 0j)
        for i, entry in enumerate(self.entries):
            if entry is None:
                continue
            a_in, a = entry.get("in"), entry.get("down")
            if a_in and a is not None:
                out[i] = a / a_in
        return out

    @property
    def gain(self) -> np.ndarray:
        return np.array([b.gain if b is not None else np.nan for b in self.balances])

    def rows(self) -> List[Dict[str, Any]]:
        """CSV rows; magnitudes are normalized to the probe amplitude."""
        rows = []
        T_down, R_HR, T_dn, T_c, gain = self.T_down, self.R_HR, self.T_dn, self.T_complex, self.gain
        for i, (omega, entry) in enumerate(zip(self.omega_grid, self.entries)):
            row: Dict[str, Any] = {"omega_meV": mev_from_rate(float(omega))}
            for label, column in (("HR", "abs_HR"), ("down", "abs_down"), ("dn", "abs_dn"),
                                  ("down*", "abs_down_star"), ("dn*", "abs_dn_star"),
                                  ("in", "abs_in")):
                value = entry.magnitude(label) if entry is not None else None
                row[column] = np.nan if value is None else value
            row.update({
                "T_down": T_down[i], "R_HR": R_HR[i], "T_dn": T_dn[i],
                "re_T_down": T_c[i].real, "im_T_down": T_c[i].imag, "gain": gain[i],
                "regime": entry.regime.value if entry is not None else "",
                "gap_flag": int(entry is None),
            })
            rows.append(row)
        return rows


def probe_frequency_grid(omega_min: float, omega_qnm: float, gamma_qnm: float,
                         n_points: int = 60, densify: int = 3, span: float = 5.0,
                         start_offset: float = 0.01) -> np.ndarray:
    """Probe frequencies from just above ω_min to 1.5·Ω_qnm, denser around the resonance."""
    top = 1.5 * omega_qnm
    if top <= omega_min:
        raise ValueError("resonance lies below the upstream gap")
    start = omega_min + start_offset * (top - omega_min)
    base = np.linspace(start, top, n_points)
    lo = max(omega_qnm - span * gamma_qnm, start)
    hi = min(omega_qnm + span * gamma_qnm, top)
    inside = int(np.count_nonzero((base >= lo) & (base <= hi)))
    extra = np.linspace(lo, hi, max(densify * inside, densify * 2))
    return np.unique(np.concatenate([base, extra]))


def regime_counts(result: ScatterSweepResult) -> Dict[str, int]:
    counts: Dict[str, int] = {r.value: 0 for r in Regime}
    for entry in result.entries:
        if entry is not None:
            counts[entry.regime.value] += 1
    return counts
