"""Windowed spectra, channel extraction, flux balance and the resonance fit."""

import numpy as np
import pytest

from polariton_horizon.core.gpe_engine import FieldHistory
from polariton_horizon.core.model import (
    Channel,
    ChannelLabel,
    ChannelSet,
    Direction,
    Regime,
    Side,
)
from polariton_horizon.core.scatter_analysis import (
    ChannelAmplitudes,
    ChannelOffGrid,
    FitDiverged,
    PeakNotResolved,
    RegionTooNarrow,
    ScatterSweepResult,
    breit_wigner,
    breit_wigner_fit,
    energy_balance_check,
    extract_channel_amplitudes,
    hann_box_gain,
    probe_frequency_grid,
    regime_counts,
    window_modulation,
    windowed_spectrum,
)

N_X, DX = 128, 0.5
N_T, DT = 256, 0.5
K_IN = 2 * np.pi * 10 / (N_X * DX)
K_HR = -2 * np.pi * 20 / (N_X * DX)
OMEGA = 2 * np.pi * 12 / (N_T * DT)


def _history(components):
    """Superpose a·e^{i(kx − ωt)} for (a, k, ω) in ``components``."""
    x = DX * np.arange(N_X)
    times = 3.0 + DT * np.arange(N_T)
    frames = np.zeros((N_T, N_X), dtype=complex)
    for a, k, omega in components:
        frames += a * np.exp(1j * (k * x[None, :] - omega * times[:, None]))
    return FieldHistory(times=times, x=x, frames=frames, omega_p=0.0, dt_record=DT,
                        kind="probe")


def _channel(label, k, v_g, side=Side.UPSTREAM, direction=Direction.OUTGOING, sign=1):
    return Channel(label=label, k=k, norm_sign=sign, group_velocity=v_g, side=side,
                   direction=direction)


def _upstream_channels():
    return ChannelSet(omega=OMEGA, regime=Regime.HAWKING_WINDOW, channels=[
        _channel(ChannelLabel.IN, K_IN, 1.0, direction=Direction.INCOMING),
        _channel(ChannelLabel.HR, K_HR, -1.0),
    ])


def test_hann_box_gain():
    assert hann_box_gain(1) == 1.0
    assert hann_box_gain(3) == pytest.approx(2.25)


def test_on_bin_components_are_recovered_exactly():
    a_in, a_hr, a_conj = 0.7 * np.exp(0.3j), 0.4 * np.exp(-1.1j), 0.2 * np.exp(2.0j)
    history = _history([(a_in, K_IN, OMEGA), (a_hr, K_HR, OMEGA), (a_conj, -K_HR, -OMEGA)])
    spectrum = windowed_spectrum(history, (0.0, 64.0))
    amplitudes = extract_channel_amplitudes(spectrum, _upstream_channels(), OMEGA)

    assert amplitudes.get("in") == pytest.approx(a_in, abs=1e-10)
    assert amplitudes.get("HR") == pytest.approx(a_hr, abs=1e-10)
    assert amplitudes.get("HR*") == pytest.approx(a_conj, abs=1e-10)
    assert abs(amplitudes.get("in*")) < 1e-10
    # channels absent from the set are closed
    assert amplitudes.get("dn") is None
    assert not amplitudes.present("down")


def test_phases_follow_the_reference_point():
    a_in = 0.5 + 0.0j
    history = _history([(a_in, K_IN, OMEGA)])
    spectrum = windowed_spectrum(history, (0.0, 64.0), x_ref=12.5)
    amplitudes = extract_channel_amplitudes(spectrum, _upstream_channels(), OMEGA)
    assert amplitudes.get("in") == pytest.approx(a_in * np.exp(1j * K_IN * 12.5), abs=1e-10)


def test_probe_normalization_divides_by_the_reference():
    history = _history([(0.6, K_IN, OMEGA)])
    spectrum = windowed_spectrum(history, (0.0, 64.0), reference=0.3)
    amplitudes = extract_channel_amplitudes(spectrum, _upstream_channels(), OMEGA)
    assert abs(amplitudes.get("in")) == pytest.approx(2.0, rel=1e-10)

    scaled = windowed_spectrum(history, (0.0, 64.0), normalization="max")
    assert np.max(scaled.amplitude) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        windowed_spectrum(history, (0.0, 64.0), normalization="peak")


def test_narrow_region_is_rejected():
    with pytest.raises(RegionTooNarrow) as info:
        windowed_spectrum(_history([(1.0, K_IN, OMEGA)]), (0.0, 10.0))
    assert info.value.n_points < 64


def test_channel_off_the_map():
    spectrum = windowed_spectrum(_history([(1.0, K_IN, OMEGA)]), (0.0, 64.0))
    channels = ChannelSet(omega=OMEGA, regime=Regime.ABOVE_WINDOW, channels=[
        _channel(ChannelLabel.IN, 40.0, 1.0, direction=Direction.INCOMING)])
    with pytest.raises(ChannelOffGrid):
        extract_channel_amplitudes(spectrum, channels, OMEGA)


def test_stationary_response_is_insensitive_to_record_length():
    history = _history([(0.7, K_IN, OMEGA), (0.4, K_HR, OMEGA)])
    modulation = window_modulation(history, {"upstream": (0.0, 64.0)}, _upstream_channels(),
                                   OMEGA, reference=None)
    assert modulation < 1e-8


def _balance_inputs():
    channels = ChannelSet(omega=0.6, regime=Regime.HAWKING_WINDOW, channels=[
        _channel(ChannelLabel.IN, 0.3, 1.0, direction=Direction.INCOMING),
        _channel(ChannelLabel.HR, -0.5, -1.0),
        _channel(ChannelLabel.DOWN, 0.2, 1.0, side=Side.DOWNSTREAM),
        _channel(ChannelLabel.DN, 1.5, 1.0, side=Side.DOWNSTREAM, sign=-1),
    ])
    amplitudes = ChannelAmplitudes(omega_pr=0.6, regime=Regime.HAWKING_WINDOW, amplitudes={
        "in": 1.0 + 0j, "HR": 0.8 + 0j, "down": 0.8j, "dn": 0j, "dn*": np.sqrt(0.28) + 0j,
    })
    return amplitudes, channels


def test_energy_balance_with_conjugate_traces():
    amplitudes, channels = _balance_inputs()
    balance = energy_balance_check(amplitudes, channels, gamma=0.01, distance=100.0)
    assert balance.flux_in == pytest.approx(1.0)
    assert balance.flux_out_positive == pytest.approx(1.28)
    assert balance.flux_out_negative == pytest.approx(-0.28)
    assert balance.imbalance == pytest.approx(0.0, abs=1e-12)
    assert balance.gain == pytest.approx(1.28)
    assert balance.passes
    assert balance.loss_budget == pytest.approx(1.0 - np.exp(-1.0))


def test_energy_balance_without_conjugate_traces_misses_the_negative_norm():
    amplitudes, channels = _balance_inputs()
    balance = energy_balance_check(amplitudes, channels, gamma=0.0, use_conjugate=False)
    assert balance.imbalance == pytest.approx(0.28)
    assert not balance.passes
    assert balance.loss_budget == 0.0


OMEGA_QNM, GAMMA_QNM = 1.0, 0.05
T_BG, ALPHA = 0.2 + 0.1j, 0.03 * np.exp(0.4j)


def test_breit_wigner_fit_recovers_a_synthetic_resonance():
    omega = np.linspace(0.8, 1.2, 41)
    t = breit_wigner(omega, OMEGA_QNM, GAMMA_QNM, T_BG, ALPHA)
    fit = breit_wigner_fit(omega, t)
    assert fit.Omega_qnm == pytest.approx(OMEGA_QNM, abs=1e-5)
    assert fit.Gamma_qnm == pytest.approx(GAMMA_QNM, rel=1e-3)
    assert fit.t_bg == pytest.approx(T_BG, abs=1e-5)
    assert fit.residual < 1e-4
    assert fit.phase_slip == pytest.approx(np.pi - 0.1, abs=1e-2)
    assert fit.phase_slip_ok
    assert fit.record()["Q"] == pytest.approx(OMEGA_QNM / GAMMA_QNM, rel=1e-3)


def test_breit_wigner_fit_skips_gaps():
    omega = np.linspace(0.8, 1.2, 41)
    t = list(breit_wigner(omega, OMEGA_QNM, GAMMA_QNM, T_BG, ALPHA))
    t[3] = None
    t[30] = np.nan
    fit = breit_wigner_fit(omega, t)
    assert fit.n_samples == 39
    assert fit.Omega_qnm == pytest.approx(OMEGA_QNM, abs=1e-5)


def test_magnitude_fit():
    omega = np.linspace(0.8, 1.2, 41)
    t = breit_wigner(omega, OMEGA_QNM, GAMMA_QNM, 0.05 + 0j, 0.03 + 0j)
    fit = breit_wigner_fit(omega, np.abs(t), mode="magnitude")
    assert fit.Omega_qnm == pytest.approx(OMEGA_QNM, abs=1e-3)
    assert fit.Gamma_qnm == pytest.approx(GAMMA_QNM, rel=1e-2)
    assert fit.phase_slip is None


def test_fit_needs_enough_samples():
    omega = np.linspace(0.9, 1.1, 5)
    with pytest.raises(PeakNotResolved):
        breit_wigner_fit(omega, breit_wigner(omega, OMEGA_QNM, GAMMA_QNM, T_BG, ALPHA))
    with pytest.raises(ValueError):
        breit_wigner_fit(np.linspace(0.8, 1.2, 41), np.ones(41), mode="phase")


def test_unresolved_resonance():
    omega = np.linspace(0.8, 1.2, 41)
    t = breit_wigner(omega, OMEGA_QNM, 0.004, T_BG, 0.002)
    with pytest.raises((PeakNotResolved, FitDiverged)):
        breit_wigner_fit(omega, t)


def test_probe_frequency_grid_is_denser_near_the_resonance():
    grid = probe_frequency_grid(omega_min=0.5, omega_qnm=0.6, gamma_qnm=0.01)
    assert np.all(np.diff(grid) > 0)
    assert grid[0] > 0.5
    assert grid[-1] == pytest.approx(0.9)
    near = np.count_nonzero(np.abs(grid - 0.6) <= 0.05)
    far = np.count_nonzero((grid > 0.75) & (grid <= 0.85))
    assert near > 2 * far
    with pytest.raises(ValueError):
        probe_frequency_grid(omega_min=1.0, omega_qnm=0.6, gamma_qnm=0.01)


def _entry(omega, t_down):
    return ChannelAmplitudes(omega_pr=omega, regime=Regime.HAWKING_WINDOW,
                             amplitudes={"in": 2.0 + 0j, "down": t_down, "HR": 0.5 + 0j,
                                         "dn": None})


def test_sweep_result_rows_and_gaps():
    result = ScatterSweepResult(omega_grid=np.array([0.5, 0.6, 0.7]),
                                entries=[_entry(0.5, 1.0j), None, _entry(0.7, 0.5 + 0j)],
                                errors={1: "NoConvergence"})
    assert result.gaps == [0.6]
    np.testing.assert_allclose(result.T_down[[0, 2]], [0.5, 0.25])
    assert np.isnan(result.T_down[1])
    assert result.T_complex[0] == pytest.approx(0.5j)
    rows = result.rows()
    assert [row["gap_flag"] for row in rows] == [0, 1, 0]
    assert np.isnan(rows[0]["abs_dn"])
    assert rows[2]["R_HR"] == pytest.approx(0.25)
    assert regime_counts(result)["hawking_window"] == 2


def test_sweep_frequencies_must_increase():
    with pytest.raises(ValueError):
        ScatterSweepResult(omega_grid=np.array([0.6, 0.5]), entries=[None, None])
