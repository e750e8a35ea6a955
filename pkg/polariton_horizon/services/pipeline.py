"""Stage functions behind the command-line interface.

Each stage owns ``<out>/<stage>/`` while it runs, reads its inputs through
the artifact store and finishes by writing a manifest. Stages compose only
through those checkpoints.
"""

import logging
from datetime import datetime
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from ..config import RunConfig, Settings, settings as default_settings
from ..core.bdg_spectrum import (
    MultipleQnmCandidates,
    NoQnmFound,
    assemble_bdg,
    diagonalize,
    find_qnm,
    mode_table,
)
from ..core.gpe_engine import (
    BackgroundState,
    default_record_stride,
    default_time_step,
    find_steady_state,
    noise_drive,
    run_with_noise,
)
from ..core.model import (
    LocalHydro,
    bistability_turning_points,
    calibrate_pump,
    equation_of_state_roots,
    frequency_window,
    local_negative_branch_max,
    mach_profile,
    s_curve,
)
from ..core.scatter_analysis import (
    FitDiverged,
    PeakNotResolved,
    breit_wigner_fit,
    lda_overlay,
    probe_frequency_grid,
    regime_counts,
    ridge_offsets,
    windowed_spectrum,
)
from ..core.sweep_executor import SweepContext, probe_history, probe_spectra, run_sweep
from ..models import ProbeSpec, mev_from_rate
from . import plotting
from .storage import ArtifactStore, MissingUpstreamArtifact

STAGES = ("steady", "bistability", "dispersion-map", "bdg", "sweep", "fit", "report")


class SteadyOnlyConfig(Exception):
    """A probe stage was requested on a configuration without a [probe] section."""

    def __init__(self, stage: str):
        super().__init__(f"stage '{stage}' needs a [probe] section in the configuration")
        self.stage = stage


class Pipeline:
    """Runs the simulator stages for one validated configuration."""

    def __init__(self, config: RunConfig, store: ArtifactStore, max_workers: int = 1,
                 settings: Optional[Settings] = None):
        self.config = config
        self.store = store
        self.max_workers = max(1, max_workers)
        self.settings = settings or default_settings
        self.logger = logging.getLogger(__name__)

    # Shared helpers
    def _absolute(self, window: Tuple[float, float]) -> Tuple[float, float]:
        center = self.config.defect.center
        return (center + window[0], center + window[1])

    def _plateaus(self, background: BackgroundState) -> Tuple[LocalHydro, LocalHydro]:
        analysis = self.config.analysis
        return (background.plateau(*self._absolute(analysis.plateau_upstream)),
                background.plateau(*self._absolute(analysis.plateau_downstream)))

    def _load_steady(self) -> Tuple[BackgroundState, Dict[str, Any]]:
        self.store.require("steady")
        return self.store.load_background("steady"), self.store.read_json("steady", "summary.json")

    def _qnm_estimate(self) -> Optional[Tuple[float, float]]:
        """(Ω, Γ) from the bdg stage when it found a mode, else from the config."""
        if self.store.has_stage("bdg"):
            record = self.store.read_json("bdg", "qnm.json")
            if record.get("status") == "found":
                return record["Omega_qnm_per_ps"], record["Gamma_qnm_per_ps"]
        sweep = self.config.sweep
        if sweep.omega_qnm is not None:
            return sweep.omega_qnm, sweep.gamma_qnm or self.config.params.gamma
        return None

    def _header(self, **extra: Any) -> Dict[str, Any]:
        return {"config": self.config.model_dump(mode="json"), "seed": self.config.seed, **extra}

    # Stages
    def steady(self) -> BackgroundState:
        config = self.config
        self.store.begin_stage("steady")
        pump_spec = config.pump
        x_switch = config.defect.center + pump_spec.switch_offset
        pump, calibration = calibrate_pump(
            config.params, pump_spec.k_up, pump_spec.k_down, x_switch,
            up_offset=pump_spec.up_offset, supported=config.variant.supported_downstream,
            c_B_target=pump_spec.c_B_target, v_down_target=pump_spec.v_down_target,
            F_up=pump_spec.F_up, F_down=pump_spec.F_down, edge_width=pump_spec.edge_width,
        )
        grid = config.grid
        background = find_steady_state(
            grid.simulation_grid(), config.params, pump, config.defect,
            tol=config.analysis.steady_tol, t_max=config.analysis.t_max,
            margin=grid.absorbing_margin, strength=grid.absorbing_strength,
            ramp_from=pump_spec.ramp_from, ramp_duration=pump_spec.ramp_duration,
            progress_every=self.settings.progress_every,
        )
        upstream, downstream = self._plateaus(background)
        omega_min, omega_max = frequency_window(upstream, downstream)

        files = [self.store.save_background("steady", background,
                                            {"calibration": calibration.model_dump()})]
        mach = mach_profile(background.n0, background.v0, config.params)
        local_max = local_negative_branch_max(background.n0, background.v0, config.params)
        rows = {"x_um": background.x, "n0_per_um": background.n0, "v0_um_per_ps": background.v0,
                "c_B_um_per_ps": background.c_B, "m_det_kg": background.m_det, "mach": mach,
                "local_omega_minus_max_meV": mev_from_rate(local_max)}
        files.append(self.store.write_table("steady", "profiles.csv", pd.DataFrame(rows),
                                            header=self._header(units="μm, 1/μm, μm/ps, kg")))
        summary = {
            "horizon_x_um": background.horizon_x,
            "horizon_offset_um": (background.horizon_x - config.defect.center
                                  if background.horizon_x is not None else None),
            "horizon_crossings": background.horizon_crossings,
            "residual_per_ps": background.residual,
            "t_ps": background.t,
            "upstream": upstream.model_dump(),
            "downstream": downstream.model_dump(),
            "mach_upstream": upstream.mach,
            "mach_downstream": downstream.mach,
            "omega_min_per_ps": omega_min,
            "omega_max_per_ps": omega_max,
            "omega_min_meV": mev_from_rate(omega_min),
            "omega_max_meV": mev_from_rate(omega_max),
            "calibration": calibration.model_dump(),
        }
        files.append(self.store.write_json("steady", "summary.json", summary))
        self.store.finish_stage("steady", files)
        self.logger.info(f"Horizon at x={background.horizon_x:.2f} μm; downstream "
                         f"c_B={downstream.c_B:.3f} μm/ps, v₀={downstream.v0:.3f} μm/ps; "
                         f"window [{mev_from_rate(omega_min):.4f}, "
                         f"{mev_from_rate(omega_max):.4f}] meV")
        return background

    def bistability(self) -> Dict[str, Any]:
        config = self.config
        params = config.params
        self.store.begin_stage("bistability")
        pump_spec = config.pump
        x_switch = config.defect.center + pump_spec.switch_offset
        pump, _ = calibrate_pump(
            params, pump_spec.k_up, pump_spec.k_down, x_switch, up_offset=pump_spec.up_offset,
            supported=config.variant.supported_downstream, c_B_target=pump_spec.c_B_target,
            v_down_target=pump_spec.v_down_target, F_up=pump_spec.F_up, F_down=pump_spec.F_down,
        )
        regions = {"upstream": (pump_spec.k_up, pump.F_up),
                   "downstream": (pump_spec.k_down, pump.F_down)}
        rows: List[Dict[str, Any]] = []
        record: Dict[str, Any] = {}
        for name, (k, F) in regions.items():
            v0 = params.velocity(k)
            n0, intensity = s_curve(v0, params)
            rows.extend({"region": name, "k_per_um": k, "n0_per_um": n, "intensity": i}
                        for n, i in zip(n0, intensity))
            points = bistability_turning_points(v0, params)
            roots = equation_of_state_roots(F, v0, params) if F > 0 else [0.0]
            record[name] = {
                "k_per_um": k,
                "v0_um_per_ps": v0,
                "bistable": points is not None,
                "turning_points": [p.model_dump() for p in points or []],
                "F": F,
                "F_squared": F**2,
                "n0_roots": roots,
                "working_n0": roots[-1] if name == "upstream" else roots[0],
            }
        files = [
            self.store.write_table("bistability", "s_curve.csv", rows,
                                   header=self._header(units={"n0": "1/μm",
                                                              "intensity": "1/(μm·ps²)"})),
            self.store.write_json("bistability", "turning_points.json", record),
        ]
        self.store.finish_stage("bistability", files)
        return record

    def dispersion_map(self) -> Dict[str, Any]:
        config = self.config
        background, summary = self._load_steady()
        self.store.begin_stage("dispersion-map")
        upstream, downstream = self._plateaus(background)
        probe = config.probe or ProbeSpec()
        grid = background.grid
        dt = grid.dt or default_time_step(grid, background.params)
        stride = default_record_stride(dt, summary["omega_max_per_ps"] * config.analysis.qnm_cutoff_factor)
        amplitude = probe.noise_fraction * float(np.sqrt(np.max(background.n0)))
        history = run_with_noise(background, noise_drive(grid, amplitude, config.seed),
                                 duration=probe.noise_duration, record_stride=stride)
        history = history.demodulated(background)

        files: List[str] = [self.store.write_history("dispersion-map", "history_noise.npz",
                                                     history, {"seed": config.seed})]
        record: Dict[str, Any] = {"noise_amplitude": amplitude, "record_stride": stride,
                                  "dt_record_ps": history.dt_record}
        for name, window, hydro in (("upstream", config.analysis.map_upstream_window, upstream),
                                    ("downstream", config.analysis.map_downstream_window,
                                     downstream)):
            spectrum = windowed_spectrum(history, self._absolute(window), region=name,
                                         normalization="max", x_ref=background.horizon_x or 0.0)
            overlay = lda_overlay(spectrum, hydro)
            files.append(self.store.write_arrays(
                "dispersion-map", f"map_{name}.npz",
                {"k": spectrum.k_axis, "omega": spectrum.omega_axis,
                 "amplitude": spectrum.amplitude},
                {"units": {"k": "1/μm", "omega": "1/ps"}, "region": name,
                 "bounds_um": spectrum.bounds, "normalization": spectrum.mode}))
            files.append(self.store.write_table(
                "dispersion-map", f"lda_{name}.csv",
                pd.DataFrame({"k_per_um": overlay["k"],
                              "omega_plus_meV": mev_from_rate(overlay["omega_plus"]),
                              "omega_minus_meV": mev_from_rate(overlay["omega_minus"])}),
                header=self._header(region=name)))
            omegas = np.linspace(hydro.rest_gap, summary["omega_max_per_ps"]
                                 * config.analysis.qnm_cutoff_factor, 12)
            offsets = ridge_offsets(spectrum, hydro, omegas)
            files.append(self.store.write_table("dispersion-map", f"ridges_{name}.csv", offsets,
                                                header=self._header(region=name)))
            worst = max((abs(r["offset_bins"]) for r in offsets), default=float("nan"))
            record[name] = {"n_ridge_points": len(offsets), "max_offset_bins": worst,
                            "k_resolution": spectrum.k_resolution,
                            "omega_resolution": spectrum.omega_resolution}
            self.logger.info(f"{name} map: {len(offsets)} ridge points, "
                             f"largest LDA offset {worst:.2f} bins")
        files.append(self.store.write_json("dispersion-map", "summary.json", record))
        self.store.finish_stage("dispersion-map", files, inputs=["steady"])
        return record

    def bdg(self) -> Dict[str, Any]:
        config = self.config
        background, summary = self._load_steady()
        self.store.begin_stage("bdg")
        op = assemble_bdg(background)
        modes = diagonalize(op, zero_tol=config.analysis.zero_tol)
        gamma = background.params.gamma
        files = [self.store.write_table("bdg", "modes.csv", mode_table(modes, gamma),
                                        header=self._header(units="meV, μm", gamma_factored=True))]
        omega_max = summary["omega_max_per_ps"]
        window = (omega_max, config.analysis.qnm_cutoff_factor * omega_max)
        record: Dict[str, Any]
        try:
            qnm = find_qnm(modes, window, background.horizon_x or config.defect.center, gamma,
                           period=op.period, max_distance=config.analysis.horizon_distance)
            record = {"status": "found", **qnm.record()}
        except MultipleQnmCandidates as e:
            self.logger.warning(f"QNM ambiguous: {len(e.candidates)} candidates")
            record = {"status": "ambiguous",
                      "candidates": [{"omega": m.omega, "center_um": m.center}
                                     for m in e.candidates]}
        except NoQnmFound as e:
            self.logger.warning(f"No QNM: {e}")
            record = {"status": "not_found", "reason": str(e)}
        record["window_per_ps"] = list(window)
        record["n_modes"] = len(modes)
        files.append(self.store.write_json("bdg", "qnm.json", record))
        self.store.finish_stage("bdg", files, inputs=["steady"])
        return record

    def _sweep_context(self, background: BackgroundState, summary: Dict[str, Any],
                       probe: ProbeSpec) -> SweepContext:
        config = self.config
        upstream, downstream = self._plateaus(background)
        return SweepContext(
            background=background, upstream=upstream, downstream=downstream,
            omega_min=summary["omega_min_per_ps"],
            omega_record_max=summary["omega_max_per_ps"]
            * config.analysis.qnm_cutoff_factor,
            probe=probe, probe_center=config.defect.center + probe.offset,
            regions={"upstream": self._absolute(config.analysis.upstream_window),
                     "downstream": self._absolute(config.analysis.downstream_window)},
            x_ref=background.horizon_x or config.defect.center, box=config.analysis.box,
            linearized=config.variant.lossless_linear_stage, retries=self.settings.probe_retries,
            balance_tolerance=config.analysis.balance_tolerance,
            loss_distance=config.analysis.loss_distance,
        )

    def sweep(self) -> Dict[str, Any]:
        config = self.config
        if config.probe is None:
            raise SteadyOnlyConfig("sweep")
        background, summary = self._load_steady()
        estimate = self._qnm_estimate()
        self.store.begin_stage("sweep")
        context = self._sweep_context(background, summary, config.probe)
        omega_min, omega_max = summary["omega_min_per_ps"], summary["omega_max_per_ps"]
        if estimate is not None:
            grid = probe_frequency_grid(omega_min, estimate[0], estimate[1],
                                        n_points=config.sweep.n_points,
                                        densify=config.sweep.densify, span=config.sweep.span)
        else:
            self.logger.warning("No resonance estimate: sweeping a uniform grid")
            top = config.analysis.qnm_cutoff_factor * omega_max
            grid = np.linspace(omega_min + 0.01 * (top - omega_min), top, config.sweep.n_points)
        context.omega_record_max = max(context.omega_record_max, float(np.max(grid)))

        result = run_sweep(context, grid, max_workers=self.max_workers)
        header = self._header(units={"omega": "meV", "amplitudes": "probe amplitude"},
                              horizon_x_um=context.x_ref, box=context.box,
                              regions_um=context.regions, linearized=context.linearized,
                              omega_min_meV=mev_from_rate(omega_min),
                              omega_max_meV=mev_from_rate(omega_max))
        files = [self.store.write_table("sweep", "sweep.csv", result.rows(), header=header)]
        balances = [b.model_dump(mode="json") for b in result.balances if b is not None]
        files.append(self.store.write_table("sweep", "balance.csv",
                                            [{k: v for k, v in b.items() if k != "fluxes"}
                                             for b in balances], header=header))
        record = {
            "n_points": int(result.omega_grid.size),
            "gaps_meV": [mev_from_rate(w) for w in result.gaps],
            "errors": {str(i): e for i, e in result.errors.items()},
            "regimes": regime_counts(result),
            "balance_failures": sum(1 for b in balances if not b["passes"]),
            "resonance_estimate_per_ps": list(estimate) if estimate else None,
            "attempts": result.metadata.get("attempts"),
        }
        files.append(self.store.write_json("sweep", "summary.json", record))

        showcase = estimate[0] if estimate else 0.5 * (omega_min + omega_max)
        try:
            history = probe_history(context, float(showcase))
            files.append(self.store.write_history("sweep", "history_probe.npz", history,
                                                  {"x_ref_um": context.x_ref}))
            maps = probe_spectra(context, float(showcase),
                                 {"upstream": self._absolute(config.analysis.map_upstream_window),
                                  "downstream": self._absolute(
                                      config.analysis.map_downstream_window)},
                                 history=history)
            for name, spectrum in maps.items():
                files.append(self.store.write_arrays(
                    "sweep", f"probe_map_{name}.npz",
                    {"k": spectrum.k_axis, "omega": spectrum.omega_axis,
                     "amplitude": spectrum.amplitude},
                    {"omega_pr": showcase, "region": name, "units": {"k": "1/μm",
                                                                     "omega": "1/ps"}}))
        except Exception as e:
            self.logger.warning(f"Probe map at ω={showcase:.4g}/ps skipped: {e}")

        inputs = ["steady"] + (["bdg"] if self.store.has_stage("bdg") else [])
        self.store.finish_stage("sweep", files, inputs=inputs)
        if result.gaps:
            self.logger.warning(f"{len(result.gaps)} probe frequencies omitted")
        return record

    def fit(self) -> Dict[str, Any]:
        config = self.config
        self.store.require("sweep")
        table, _ = self.store.read_table("sweep", "sweep.csv")
        self.store.begin_stage("fit")
        table = table[table["gap_flag"] == 0]
        omega = np.asarray(table["omega_meV"], dtype=float) / mev_from_rate(1.0)
        if config.sweep.fit_mode == "complex":
            values = np.asarray(table["re_T_down"] + 1j * table["im_T_down"])
        else:
            values = np.asarray(table["T_down"], dtype=complex)

        estimate = self._qnm_estimate()
        if estimate is None:
            peak = int(np.nanargmax(np.abs(values)))
            estimate = (float(omega[peak]), float(config.params.gamma))
        span = config.sweep.fit_span * estimate[1]
        near = np.abs(omega - estimate[0]) <= span
        if np.count_nonzero(near) < 8:
            near = np.ones_like(omega, dtype=bool)

        record: Dict[str, Any]
        try:
            fit = breit_wigner_fit(omega[near], values[near], mode=config.sweep.fit_mode)
            record = {"status": "converged", **fit.record(),
                      "passes_residual": fit.residual < 0.05}
            if self.store.has_stage("bdg"):
                bdg = self.store.read_json("bdg", "qnm.json")
                if bdg.get("status") == "found":
                    eigen = bdg["Omega_qnm_per_ps"]
                    record["bdg_Omega_qnm_per_ps"] = eigen
                    record["relative_offset_from_bdg"] = (fit.Omega_qnm - eigen) / eigen
        except (FitDiverged, PeakNotResolved) as e:
            self.logger.warning(f"Resonance fit failed: {e}")
            record = {"status": "failed", "reason": str(e)}
        record["fit_window_per_ps"] = [estimate[0] - span, estimate[0] + span]
        files = [self.store.write_json("fit", "fit.json", record)]
        self.store.finish_stage("fit", files, inputs=["sweep"])
        return record

    def report(self) -> Dict[str, Any]:
        present = [s for s in STAGES[:-1] if self.store.has_stage(s)]
        absent = [s for s in STAGES[:-1] if s not in present]
        self.store.begin_stage("report")
        files: List[str] = []
        lines = [
            "# Polariton horizon run report",
            "",
            f"- config hash: `{self.store.config_hash}`",
            f"- seed: {self.config.seed}",
            f"- generated: {datetime.now().isoformat(timespec='seconds')}",
            f"- stages present: {', '.join(present) or 'none'}",
            f"- stages absent: {', '.join(absent) or 'none'}",
            "",
        ]
        plots = self.config.output.plots
        window: Optional[Tuple[float, float]] = None

        if "steady" in present:
            background, summary = self._load_steady()
            window = (summary["omega_min_per_ps"], summary["omega_max_per_ps"])
            lines += ["## Steady state", "",
                      f"- horizon: x = {summary['horizon_x_um']:.2f} μm "
                      f"({summary['horizon_offset_um']:+.2f} μm from the defect)",
                      f"- upstream: v₀ = {summary['upstream']['v0']:.3f} μm/ps, "
                      f"c_B = {summary['upstream']['c_B']:.3f} μm/ps",
                      f"- downstream: v₀ = {summary['downstream']['v0']:.3f} μm/ps, "
                      f"c_B = {summary['downstream']['c_B']:.3f} μm/ps",
                      f"- Hawking window: {summary['omega_min_meV']:.4f} to "
                      f"{summary['omega_max_meV']:.4f} meV", ""]
            if plots:
                files.append(self.store.write_text("report", "fig1_profiles.svg",
                                                   plotting.profiles_figure(
                                                       background.x, background.n0,
                                                       background.v0, background.c_B,
                                                       background.horizon_x,
                                                       self.config.defect.center)))
                params = background.params
                keep = background.interior
                files.append(self.store.write_text("report", "fig1_lda.svg", plotting.lda_figure(
                    background.x[keep],
                    local_negative_branch_max(background.n0[keep], background.v0[keep], params),
                    mach_profile(background.n0[keep], background.v0[keep], params),
                    summary["omega_max_per_ps"], background.horizon_x)))

        if "bistability" in present:
            record = self.store.read_json("bistability", "turning_points.json")
            table, _ = self.store.read_table("bistability", "s_curve.csv")
            lines += ["## Bistability", ""]
            for name in ("upstream", "downstream"):
                entry = record[name]
                lines.append(f"- {name}: bistable = {entry['bistable']}, "
                             f"turning points at n₀ = "
                             f"{[round(p['n0'], 2) for p in entry['turning_points']]} /μm")
            lines.append("")
            if plots:
                curves, turning, operating = [], {}, {}
                for name in ("upstream", "downstream"):
                    rows = table[table["region"] == name]
                    curves.append({"label": name, "n0": rows["n0_per_um"].to_numpy(),
                                   "intensity": rows["intensity"].to_numpy()})
                    entry = record[name]
                    turning[name] = [(p["intensity"], p["n0"]) for p in entry["turning_points"]]
                    if entry["F"] > 0:
                        operating[name] = (entry["F_squared"], entry["working_n0"])
                files.append(self.store.write_text("report", "fig1_bistability.svg",
                                                   plotting.bistability_figure(curves, turning,
                                                                               operating)))

        if "dispersion-map" in present and plots:
            for name, figure in (("upstream", "fig1_dispersion_up.svg"),
                                 ("downstream", "fig1_dispersion_down.svg")):
                arrays, _ = self.store.read_arrays("dispersion-map", f"map_{name}.npz")
                lda, _ = self.store.read_table("dispersion-map", f"lda_{name}.csv")
                overlay = {"k": lda["k_per_um"].to_numpy(),
                           "omega_plus": lda["omega_plus_meV"].to_numpy() / mev_from_rate(1.0),
                           "omega_minus": lda["omega_minus_meV"].to_numpy() / mev_from_rate(1.0)}
                files.append(self.store.write_text("report", figure, plotting.spectrum_figure(
                    arrays["k"], arrays["omega"], arrays["amplitude"], overlay=overlay,
                    title=f"noise spectrum, {name}", omega_window=window,
                    k_limits=(-3.0, 3.0), omega_limits=_omega_limits(window))))
        if "dispersion-map" in present:
            record = self.store.read_json("dispersion-map", "summary.json")
            lines += ["## Dispersion maps", ""]
            for name in ("upstream", "downstream"):
                lines.append(f"- {name}: largest ridge offset from LDA "
                             f"{record[name]['max_offset_bins']:.2f} k-bins")
            lines.append("")

        qnm_meV: Optional[float] = None
        if "bdg" in present:
            record = self.store.read_json("bdg", "qnm.json")
            lines += ["## Bogoliubov spectrum", "", f"- modes: {record['n_modes']}",
                      f"- QNM search: {record['status']}"]
            qnm_point = None
            if record["status"] == "found":
                qnm_meV = record["Omega_qnm_meV"]
                qnm_point = (qnm_meV, -0.5 * mev_from_rate(record["Gamma_radiative_per_ps"]))
                lines += [f"- Ω_qnm = {record['Omega_qnm_meV']:.4f} meV, "
                          f"Γ_qnm = {record['Gamma_qnm_meV'] * 1e3:.1f} μeV "
                          f"(Q = {record['Q']:.1f})"]
            lines.append("")
            if plots:
                modes, _ = self.store.read_table("bdg", "modes.csv")
                files.append(self.store.write_text("report", "fig2_modes.svg",
                                                   plotting.modes_figure(
                                                       modes.to_dict("records"), qnm_point,
                                                       window)))

        fit_curve = None
        if "fit" in present:
            record = self.store.read_json("fit", "fit.json")
            lines += ["## Resonance fit", "", f"- status: {record['status']}"]
            if record["status"] == "converged":
                lines += [f"- Ω = {record['Omega_qnm_meV']:.4f} meV, "
                          f"Γ = {record['Gamma_qnm_meV'] * 1e3:.1f} μeV, Q = {record['Q']:.1f}",
                          f"- residual: {record['residual']:.3g}"]
                if "relative_offset_from_bdg" in record:
                    lines.append(f"- offset from the eigenvalue: "
                                 f"{100 * record['relative_offset_from_bdg']:+.2f} %")
                lo, hi = record["fit_window_per_ps"]
                w = np.linspace(lo, hi, 400)
                t_bg = complex(*record["t_bg"])
                alpha = complex(*record["alpha"])
                model = t_bg + alpha / (w - record["Omega_qnm_per_ps"]
                                        + 0.5j * record["Gamma_qnm_per_ps"])
                fit_curve = (mev_from_rate(w), np.abs(model))
            lines.append("")

        if "sweep" in present:
            table, _ = self.store.read_table("sweep", "sweep.csv")
            summary = self.store.read_json("sweep", "summary.json")
            lines += ["## Probe sweep", "", f"- frequencies: {summary['n_points']}",
                      f"- omitted: {len(summary['gaps_meV'])}",
                      f"- energy-balance failures: {summary['balance_failures']}",
                      f"- regimes: {summary['regimes']}", ""]
            if plots:
                columns = {c: table[c].to_numpy() for c in plotting.CHANNEL_STYLES}
                files.append(self.store.write_text("report", "fig2_transmission.svg",
                                                   plotting.transmission_figure(
                                                       table["omega_meV"].to_numpy(), columns,
                                                       window, fit_curve, qnm_meV)))
                for name, figures in (("upstream", (("fig2_upstream.svg", True),)),
                                      ("downstream", (("fig2_downstream_log.svg", True),
                                                      ("fig2_downstream_lin.svg", False)))):
                    try:
                        arrays, meta = self.store.read_arrays("sweep", f"probe_map_{name}.npz")
                    except MissingUpstreamArtifact:
                        continue
                    for figure, log_scale in figures:
                        files.append(self.store.write_text("report", figure,
                                                           plotting.spectrum_figure(
                                                               arrays["k"], arrays["omega"],
                                                               arrays["amplitude"],
                                                               log_scale=log_scale,
                                                               title=f"probe response, {name}",
                                                               omega_window=window,
                                                               k_limits=(-3.0, 3.0),
                                                               omega_limits=_omega_limits(window))))

        if absent:
            lines += ["## Absent stages", ""] + [f"- {s}" for s in absent] + [""]
        files.append(self.store.write_text("report", "report.md", "\n".join(lines)))
        self.store.finish_stage("report", files, inputs=present)
        self.logger.info(f"Report written with {len(present)} stage(s), {len(absent)} absent")
        return {"present": present, "absent": absent, "files": files}

    def run(self, stage: str) -> Any:
        if stage not in STAGES:
            raise ValueError(f"unknown stage {stage!r}, expected one of {STAGES}")
        self.logger.info(f"Running stage '{stage}'")
        return getattr(self, stage.replace("-", "_"))()


def _omega_limits(window: Optional[Tuple[float, float]]) -> Optional[Tuple[float, float]]:
    """Display range covering both traces of the Hawking window and the QNM region."""
    if window is None:
        return None
    top = 3.0 * window[1]
    return (-top, top)
