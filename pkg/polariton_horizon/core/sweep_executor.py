"""Parallel executor for probe-frequency sweeps."""

import asyncio
import logging
from concurrent.futures import Executor, ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from tenacity import Retrying, retry_if_exception_type, stop_after_attempt

from ..models import ProbeSpec
from .gpe_engine import (
    BackgroundState,
    DriveRamp,
    FieldHistory,
    NoConvergence,
    default_record_stride,
    default_time_step,
    probe_drive,
    run_with_probe,
)
from .model import ChannelLabel, LocalHydro, NoPropagatingChannel, channel_map
from .scatter_analysis import (
    ChannelAmplitudes,
    EnergyBalance,
    ScatterSweepResult,
    SpectrumMap,
    channel_spectra,
    energy_balance_check,
    extract_channel_amplitudes,
)

logger = logging.getLogger(__name__)


class RunStatus(str, Enum):
    PENDING = "pending"
    COMPLETED = "completed"
    GAP = "gap"


@dataclass
class SweepContext:
    """Everything a worker needs to run one probe frequency."""

    background: BackgroundState
    upstream: LocalHydro
    downstream: LocalHydro
    omega_min: float
    omega_record_max: float  # 1/ps, highest frequency the record stride must resolve
    probe: ProbeSpec
    probe_center: float  # μm
    regions: Dict[str, Tuple[float, float]] = field(default_factory=dict)
    x_ref: float = 0.0  # μm, phase reference for channel amplitudes
    box: int = 3
    linearized: bool = False
    retries: int = 3
    balance_tolerance: float = 0.05
    loss_distance: float = 100.0

    @property
    def probe_amplitude(self) -> float:
        return self.probe.amplitude_fraction * self.background.pump.F_up


@dataclass
class ProbeRunOutcome:
    """Result of one probe frequency; a gap keeps the error instead of amplitudes."""

    index: int
    omega: float
    status: RunStatus = RunStatus.PENDING
    amplitudes: Optional[ChannelAmplitudes] = None
    balance: Optional[EnergyBalance] = None
    error: Optional[str] = None
    attempts: int = 0
    relax_time: Optional[float] = None

    def mark_completed(self, amplitudes: ChannelAmplitudes, balance: EnergyBalance) -> None:
        self.status = RunStatus.COMPLETED
        self.amplitudes = amplitudes
        self.balance = balance

    def mark_gap(self, error: str) -> None:
        self.status = RunStatus.GAP
        self.error = error


def probe_wavevector(omega: float, upstream: LocalHydro, downstream: LocalHydro) -> float:
    """Bogoliubov k of the upstream ``in`` channel at ω."""
    channels = channel_map(omega, upstream, downstream, require_upstream=True)
    incoming = channels.get(ChannelLabel.IN)
    if incoming is None:
        raise NoPropagatingChannel(omega, upstream.rest_gap)
    return incoming.k


def _probe_history(context: SweepContext, omega: float,
                   outcome: ProbeRunOutcome) -> FieldHistory:
    """Inject, relax and record one probe; relaxation failures escalate the relax time."""
    background = context.background
    k_pr = probe_wavevector(omega, context.upstream, context.downstream)
    drive = probe_drive(background.grid, center=context.probe_center, width=context.probe.width,
                        k=background.pump.k_up + k_pr, omega=omega,
                        amplitude=context.probe_amplitude,
                        ramp=DriveRamp(duration=context.probe.turn_on))
    dt = background.grid.dt or default_time_step(background.grid, background.params)
    stride = default_record_stride(dt, context.omega_record_max)

    history = None
    for attempt in Retrying(stop=stop_after_attempt(context.retries),
                            retry=retry_if_exception_type(NoConvergence), reraise=True):
        with attempt:
            n = attempt.retry_state.attempt_number
            relax = context.probe.relax_time * n
            outcome.attempts = n
            outcome.relax_time = relax
            if n > 1:
                logger.info(f"Probe ω={omega:.4g}/ps: retrying with relax time {relax:.0f} ps")
            history = run_with_probe(background, drive, relax_time=relax,
                                     record_time=context.probe.record_time,
                                     record_stride=stride, omega_min=context.omega_min,
                                     tol=context.probe.periodicity_tol,
                                     linearized=context.linearized)
    return history.demodulated(background)


def probe_history(context: SweepContext, omega: float) -> FieldHistory:
    """Demodulated record of a single probe run."""
    return _probe_history(context, omega, ProbeRunOutcome(index=0, omega=omega))


def probe_spectra(context: SweepContext, omega: float,
                  regions: Optional[Dict[str, Tuple[float, float]]] = None,
                  history: Optional[FieldHistory] = None) -> Dict[str, SpectrumMap]:
    """Spectral maps of a single probe run, for display."""
    if history is None:
        history = probe_history(context, omega)
    return channel_spectra(history, regions or context.regions,
                           reference=context.probe_amplitude, x_ref=context.x_ref)


def execute_probe_run(context: SweepContext, index: int, omega: float) -> ProbeRunOutcome:
    """Run one probe frequency end to end: inject, relax, record, extract.

    Relaxation failures are retried with a longer relaxation time on each
    attempt; the last NoConvergence propagates.
    """
    outcome = ProbeRunOutcome(index=index, omega=omega)
    channels = channel_map(omega, context.upstream, context.downstream, require_upstream=True)
    history = _probe_history(context, omega, outcome)
    maps = channel_spectra(history, context.regions, reference=context.probe_amplitude,
                           x_ref=context.x_ref)
    amplitudes = extract_channel_amplitudes(maps, channels, omega, box=context.box)
    gamma = 0.0 if context.linearized else context.background.params.gamma
    balance = energy_balance_check(amplitudes, channels, gamma, distance=context.loss_distance,
                                   tolerance=context.balance_tolerance)
    outcome.mark_completed(amplitudes, balance)
    return outcome


class ParallelSweepExecutor:
    """Runs a probe sweep with one task per frequency.

    With ``max_workers == 1`` every run happens in the calling process.
    """

    def __init__(self, context: SweepContext, max_workers: int = 1):
        self.context = context
        self.max_workers = max(1, max_workers)
        self.logger = logging.getLogger(__name__)
        self.logger.info(f"Sweep executor initialized with {self.max_workers} worker(s)")

    async def run(self, omega_grid: Sequence[float]) -> ScatterSweepResult:
        """Execute all frequencies and collate them sorted by ω."""
        start_time = datetime.now()
        omegas = np.asarray(sorted(omega_grid), dtype=float)
        self.logger.info(f"Sweep started: {omegas.size} probe frequencies "
                         f"in [{omegas[0]:.4g}, {omegas[-1]:.4g}]/ps")

        executor: Optional[Executor] = None
        if self.max_workers > 1:
            executor = ProcessPoolExecutor(max_workers=self.max_workers)
        try:
            tasks = [self._run_safe(executor, i, float(w)) for i, w in enumerate(omegas)]
            results = await asyncio.gather(*tasks, return_exceptions=True)
        finally:
            if executor is not None:
                executor.shutdown(wait=True)

        outcomes: List[ProbeRunOutcome] = []
        for i, result in enumerate(results):
            if isinstance(result, BaseException):
                outcome = ProbeRunOutcome(index=i, omega=float(omegas[i]))
                outcome.mark_gap(repr(result))
                outcomes.append(outcome)
            else:
                outcomes.append(result)

        completed = sum(1 for o in outcomes if o.status == RunStatus.COMPLETED)
        duration = (datetime.now() - start_time).total_seconds()
        self.logger.info(f"Sweep finished in {duration:.1f}s: {completed} completed, "
                         f"{len(outcomes) - completed} gaps")
        return collate(omegas, outcomes)

    async def _run_safe(self, executor: Optional[Executor], index: int,
                        omega: float) -> ProbeRunOutcome:
        """Run one frequency, turning any failure into a gap record."""
        try:
            if executor is None:
                return execute_probe_run(self.context, index, omega)
            loop = asyncio.get_running_loop()
            return await loop.run_in_executor(executor, execute_probe_run, self.context,
                                              index, omega)
        except Exception as e:
            self.logger.warning(f"Probe ω={omega:.4g}/ps omitted: {e}")
            outcome = ProbeRunOutcome(index=index, omega=omega)
            outcome.mark_gap(f"{type(e).__name__}: {e}")
            return outcome


def collate(omegas: np.ndarray, outcomes: Sequence[ProbeRunOutcome]) -> ScatterSweepResult:
    """Merge outcomes into one sweep result, gaps kept as explicit nulls."""
    ordered = sorted(outcomes, key=lambda o: o.omega)
    return ScatterSweepResult(
        omega_grid=np.asarray([o.omega for o in ordered]),
        entries=[o.amplitudes if o.status == RunStatus.COMPLETED else None for o in ordered],
        errors={i: o.error for i, o in enumerate(ordered) if o.error},
        balances=[o.balance for o in ordered],
        metadata={"attempts": [o.attempts for o in ordered]},
    )


def run_sweep(context: SweepContext, omega_grid: Sequence[float],
              max_workers: int = 1) -> ScatterSweepResult:
    """Synchronous entry point around ParallelSweepExecutor."""
    return asyncio.run(ParallelSweepExecutor(context, max_workers=max_workers).run(omega_grid))
