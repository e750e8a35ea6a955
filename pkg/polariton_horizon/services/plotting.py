"""SVG figures for the report stage.

Each function returns SVG text; the caller decides where it is stored.
Figures are built on bare ``Figure`` objects so worker processes never
touch pyplot state.
"""

import io
import logging
from typing import Dict, Iterable, Mapping, Optional, Sequence, Tuple

import matplotlib
import numpy as np
from matplotlib.colors import LogNorm, Normalize
from matplotlib.figure import Figure

from ..models import mev_from_rate

logger = logging.getLogger(__name__)

matplotlib.use("Agg")
# Stable element ids so that identical inputs give identical files.
matplotlib.rcParams["svg.hashsalt"] = "polariton-horizon"

CLASS_COLORS = {"positive": "tab:blue", "negative": "tab:red", "zero": "tab:green"}
CHANNEL_STYLES = {
    "abs_HR": ("|HR|", "tab:orange"),
    "abs_down": ("|down|", "tab:blue"),
    "abs_dn": ("|dn|", "tab:red"),
    "abs_dn_star": ("|dn*|", "tab:purple"),
}


def _to_svg(fig: Figure) -> str:
    buffer = io.StringIO()
    fig.savefig(buffer, format="svg", metadata={"Date": None})
    return buffer.getvalue()


def _window_lines(ax, omega_min: Optional[float], omega_max: Optional[float],
                  horizontal: bool = False) -> None:
    for value, label in ((omega_min, "ω_min"), (omega_max, "ω_max")):
        if value is None:
            continue
        energy = mev_from_rate(value)
        if horizontal:
            ax.axhline(energy, color="gray", linestyle=":", linewidth=1.2, label=label)
        else:
            ax.axvline(energy, color="gray", linestyle=":", linewidth=1.2, label=label)


def bistability_figure(curves: Sequence[Mapping[str, np.ndarray]],
                       turning_points: Mapping[str, Sequence[Tuple[float, float]]],
                       operating: Mapping[str, Tuple[float, float]]) -> str:
    """Density against pump intensity for every pumped region.

    ``curves`` items carry ``label``, ``n0`` and ``intensity``; turning points
    and operating points are (intensity, n0) pairs keyed by the same label.
    """
    fig = Figure(figsize=(6, 4.5), constrained_layout=True)
    ax = fig.add_subplot()
    for curve in curves:
        label = str(curve["label"])
        line, = ax.plot(curve["intensity"], curve["n0"], linewidth=1.8, label=label)
        for intensity, n0 in turning_points.get(label, ()):
            ax.plot(intensity, n0, "o", color=line.get_color(), markersize=5)
        if label in operating:
            intensity, n0 = operating[label]
            ax.plot(intensity, n0, "*", color=line.get_color(), markersize=11,
                    label=f"{label} working point")
    ax.set_xlabel("|F_p|² [1/(μm·ps²)]")
    ax.set_ylabel("n₀ [1/μm]")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=9)
    return _to_svg(fig)


def profiles_figure(x: np.ndarray, n0: np.ndarray, v0: np.ndarray, c_B: np.ndarray,
                    horizon_x: Optional[float], defect_center: float) -> str:
    """Density on top, flow and sound speed below."""
    fig = Figure(figsize=(8, 6), constrained_layout=True)
    top, bottom = fig.subplots(2, 1, sharex=True)
    top.plot(x, n0, color="black", linewidth=1.5)
    top.set_ylabel("n₀ [1/μm]")
    bottom.plot(x, np.abs(v0), color="tab:blue", linewidth=1.5, label="|v₀|")
    bottom.plot(x, c_B, color="tab:red", linewidth=1.5, label="c_B")
    bottom.set_ylabel("[μm/ps]")
    bottom.set_xlabel("x [μm]")
    for ax in (top, bottom):
        ax.axvline(defect_center, color="gray", linestyle="--", linewidth=1.0)
        if horizon_x is not None:
            ax.axvline(horizon_x, color="tab:green", linestyle=":", linewidth=1.5)
        ax.grid(True, alpha=0.3)
    bottom.legend(fontsize=9)
    return _to_svg(fig)


def spectrum_figure(k_axis: np.ndarray, omega_axis: np.ndarray, amplitude: np.ndarray,
                    overlay: Optional[Mapping[str, np.ndarray]] = None,
                    log_scale: bool = True, title: str = "",
                    omega_window: Optional[Tuple[float, float]] = None,
                    k_limits: Optional[Tuple[float, float]] = None,
                    omega_limits: Optional[Tuple[float, float]] = None,
                    marker: Optional[Tuple[float, float]] = None) -> str:
    """|A(k, ω)| as a colour map with optional LDA branches.

    ``amplitude`` is indexed (k, ω); frequencies are drawn in meV.
    """
    fig = Figure(figsize=(6, 4.5), constrained_layout=True)
    ax = fig.add_subplot()
    energy = mev_from_rate(omega_axis)
    data = np.asarray(amplitude, dtype=float).T
    if log_scale:
        positive = data[data > 0]
        floor = float(positive.max()) * 1e-6 if positive.size else 1e-12
        norm = LogNorm(vmin=floor, vmax=max(float(data.max()), floor * 10))
        data = np.maximum(data, floor)
    else:
        norm = Normalize(vmin=0.0, vmax=float(data.max()) or 1.0)
    mesh = ax.pcolormesh(k_axis, energy, data, norm=norm, shading="nearest", cmap="magma",
                         rasterized=False)
    fig.colorbar(mesh, ax=ax, label="|A(k, ω)|")
    if overlay is not None:
        for key in ("omega_plus", "omega_minus"):
            ax.plot(overlay["k"], mev_from_rate(np.asarray(overlay[key])), color="white",
                    linestyle="--", linewidth=1.0)
    if omega_window is not None:
        _window_lines(ax, *omega_window, horizontal=True)
    if marker is not None:
        ax.plot(marker[0], mev_from_rate(marker[1]), "x", color="cyan", markersize=8)
    ax.set_xlim(*(k_limits or (k_axis[0], k_axis[-1])))
    if omega_limits is not None:
        ax.set_ylim(mev_from_rate(omega_limits[0]), mev_from_rate(omega_limits[1]))
    ax.set_xlabel("k [1/μm]")
    ax.set_ylabel("ħω [meV]")
    if title:
        ax.set_title(title)
    return _to_svg(fig)


def lda_figure(x: np.ndarray, local_max: np.ndarray, mach: np.ndarray,
               omega_max: Optional[float], horizon_x: Optional[float]) -> str:
    """Local negative-branch maximum along the flow, with the Mach number."""
    fig = Figure(figsize=(8, 4.5), constrained_layout=True)
    ax = fig.add_subplot()
    ax.plot(x, mev_from_rate(local_max), color="tab:red", linewidth=1.5,
            label="local max ħω₋")
    if omega_max is not None:
        ax.axhline(mev_from_rate(omega_max), color="gray", linestyle=":", label="ħω_max")
    if horizon_x is not None:
        ax.axvline(horizon_x, color="tab:green", linestyle=":", linewidth=1.5)
    ax.set_xlabel("x [μm]")
    ax.set_ylabel("ħω [meV]")
    ax.grid(True, alpha=0.3)
    twin = ax.twinx()
    twin.plot(x, mach, color="black", linewidth=1.0, alpha=0.6, label="|v₀|/c_B")
    twin.axhline(1.0, color="black", linestyle="--", linewidth=0.8, alpha=0.5)
    twin.set_ylabel("Mach number")
    ax.legend(loc="upper left", fontsize=9)
    return _to_svg(fig)


def modes_figure(rows: Iterable[Mapping[str, float]], qnm: Optional[Tuple[float, float]] = None,
                 omega_window: Optional[Tuple[float, float]] = None) -> str:
    """Eigenfrequencies in the complex plane coloured by norm class (meV)."""
    fig = Figure(figsize=(6, 4.5), constrained_layout=True)
    ax = fig.add_subplot()
    grouped: Dict[str, Tuple[list, list]] = {}
    for row in rows:
        re, im = grouped.setdefault(str(row["classification"]), ([], []))
        re.append(row["re_omega_meV"])
        im.append(row["im_omega_meV"])
    for kind, (re, im) in sorted(grouped.items()):
        ax.plot(re, im, ".", color=CLASS_COLORS.get(kind, "black"), markersize=3, label=kind)
    if qnm is not None:
        ax.plot(*qnm, "o", markerfacecolor="none", markeredgecolor="black", markersize=10,
                label="QNM")
    if omega_window is not None:
        _window_lines(ax, *omega_window)
    ax.set_xlabel("Re ħω [meV]")
    ax.set_ylabel("Im ħω [meV]")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=9)
    return _to_svg(fig)


def transmission_figure(omega_meV: np.ndarray, columns: Mapping[str, np.ndarray],
                        omega_window: Optional[Tuple[float, float]] = None,
                        fit_curve: Optional[Tuple[np.ndarray, np.ndarray]] = None,
                        qnm_meV: Optional[float] = None) -> str:
    """Outgoing channel magnitudes against probe energy, gaps left blank."""
    fig = Figure(figsize=(7, 4.5), constrained_layout=True)
    ax = fig.add_subplot()
    for column, (label, color) in CHANNEL_STYLES.items():
        if column in columns:
            ax.semilogy(omega_meV, columns[column], "o-", color=color, markersize=3,
                        linewidth=1.2, label=label)
    if fit_curve is not None:
        ax.semilogy(fit_curve[0], fit_curve[1], color="black", linestyle="--", linewidth=1.2,
                    label="Breit-Wigner fit")
    if qnm_meV is not None:
        ax.axvline(qnm_meV, color="tab:green", linestyle="-.", linewidth=1.0, label="Re Ω_qnm")
    if omega_window is not None:
        _window_lines(ax, *omega_window)
    ax.set_xlabel("ħω [meV]")
    ax.set_ylabel("amplitude / probe")
    ax.grid(True, alpha=0.3, which="both")
    ax.legend(fontsize=8, ncol=2)
    return _to_svg(fig)
