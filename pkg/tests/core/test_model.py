"""Analytic checks of the equation of state, local hydrodynamics and channel kinematics."""

import numpy as np
import pytest

from polariton_horizon.core.model import (
    ChannelLabel,
    Direction,
    GappedRegionError,
    NoPropagatingChannel,
    NotTranscritical,
    Regime,
    bistability_turning_points,
    branch_roots,
    calibrate_pump,
    channel_map,
    dispersion_lab_frame,
    effective_detuning,
    equation_of_state_roots,
    frequency_window,
    homogeneous_field,
    local_hydro,
    mach_profile,
    metric_at,
    negative_branch_max,
    pump_intensity,
    s_curve,
)
from polariton_horizon.models import HBAR, PolaritonParams, rate_from_uev


def test_unit_conversions(params):
    assert params.gamma == pytest.approx(47e-3 / HBAR)
    assert rate_from_uev(47.0) == pytest.approx(params.gamma)
    assert params.detuning == pytest.approx((1473.85 - 1473.36) / HBAR)
    assert params.hbar_over_mass == pytest.approx(HBAR / (5e-35 * 6.241509074e33))


def test_turning_points_are_stationary_points_of_the_s_curve(params):
    v0 = params.velocity(0.27)
    points = bistability_turning_points(v0, params)
    assert points is not None and len(points) == 2
    g, gamma = params.g, params.gamma
    delta = float(effective_detuning(v0, params))
    for point in points:
        n = point.n0
        slope = 3 * g**2 * n**2 - 4 * g * delta * n + delta**2 + gamma**2 / 4
        assert abs(slope) < 1e-8 * delta**2
        assert point.intensity == pytest.approx(float(pump_intensity(n, v0, params)), rel=1e-12)
    # local maximum of |F|² at the lower density, minimum at the higher one
    assert points[0].n0 < points[1].n0
    assert points[0].intensity > points[1].intensity


def test_turning_points_match_a_numeric_scan(params):
    v0 = params.velocity(0.27)
    points = bistability_turning_points(v0, params)
    n0, intensity = s_curve(v0, params, n_points=200001)
    slope = np.diff(intensity)
    flips = np.where(np.sign(slope[1:]) != np.sign(slope[:-1]))[0] + 1
    assert len(flips) == 2
    spacing = n0[1] - n0[0]
    for point, index in zip(points, flips):
        assert abs(point.n0 - n0[index]) <= 2 * spacing


def test_monostable_below_threshold():
    params = PolaritonParams(hbar_omega_p=1473.37)
    assert bistability_turning_points(0.0, params) is None


def test_three_roots_inside_the_bistable_range(params):
    v0 = params.velocity(0.27)
    low_turn, high_turn = bistability_turning_points(v0, params)
    F = np.sqrt(0.5 * (low_turn.intensity + high_turn.intensity))
    roots = equation_of_state_roots(F, v0, params)
    assert len(roots) == 3
    for n in roots:
        assert float(pump_intensity(n, v0, params)) == pytest.approx(F**2, rel=1e-9)
    assert equation_of_state_roots(0.0, v0, params) == [0.0]
    with pytest.raises(ValueError):
        equation_of_state_roots(-1.0, v0, params)


def test_homogeneous_field_carries_the_requested_density(params):
    v0 = params.velocity(0.27)
    psi = homogeneous_field(250.0, v0, params, pump_phase=0.3)
    assert abs(psi) ** 2 == pytest.approx(250.0, rel=1e-12)


def test_rest_gap_equals_driven_gap(params):
    delta = params.detuning
    n0 = 2.0 * delta / params.g
    hydro = local_hydro(n0, 0.0, params)
    gn = params.g * n0
    assert hydro.rest_gap == pytest.approx(np.sqrt((gn - delta) * (3 * gn - delta)), rel=1e-12)
    assert hydro.c_B == pytest.approx(np.sqrt(params.hbar_over_mass * (2 * gn - delta)), rel=1e-12)
    plus, minus = dispersion_lab_frame(0.0, hydro)
    assert plus == pytest.approx(hydro.rest_gap)
    assert minus == pytest.approx(-hydro.rest_gap)


def test_gapped_region_is_rejected(params):
    with pytest.raises(GappedRegionError) as info:
        local_hydro(0.1 * params.detuning / params.g, 0.0, params)
    assert info.value.radicand < 0


def test_mach_profile_is_nan_where_undefined(params):
    n0 = np.array([0.1, 2.0]) * params.detuning / params.g
    mach = mach_profile(n0, np.array([0.5, 0.5]), params)
    assert np.isnan(mach[0]) and np.isfinite(mach[1])


def test_frequency_window_and_regimes(flows):
    upstream, downstream = flows
    assert upstream.mach < 1 < downstream.mach
    omega_min, omega_max = frequency_window(upstream, downstream)
    assert 0 < omega_min < omega_max
    assert omega_max == pytest.approx(negative_branch_max(downstream))
    k = np.linspace(-5, 5, 200001)
    assert np.max(dispersion_lab_frame(k, downstream)[1]) <= omega_max + 1e-9


def test_subsonic_downstream_is_not_transcritical(flows):
    upstream, _ = flows
    with pytest.raises(NotTranscritical):
        frequency_window(upstream, upstream)


def _scan_roots(omega, hydro):
    k = np.linspace(-10, 10, 400001)
    count = 0
    for branch in dispersion_lab_frame(k, hydro):
        diff = branch - omega
        count += int(np.count_nonzero(np.sign(diff[1:]) != np.sign(diff[:-1])))
    return count


def test_hawking_window_has_three_in_three_out(flows):
    upstream, downstream = flows
    omega_min, omega_max = frequency_window(upstream, downstream)
    rng = np.random.default_rng(7)
    for omega in rng.uniform(omega_min, omega_max, 25):
        channels = channel_map(float(omega), upstream, downstream)
        if channels.band_edges:
            continue
        assert channels.regime == Regime.HAWKING_WINDOW
        assert {c.label for c in channels.incoming} == {ChannelLabel.IN, ChannelLabel.P,
                                                        ChannelLabel.D}
        assert {c.label for c in channels.outgoing} == {ChannelLabel.HR, ChannelLabel.DOWN,
                                                        ChannelLabel.DN}
        assert channels.get(ChannelLabel.DN).norm_sign == -1
        assert _scan_roots(omega, upstream) + _scan_roots(omega, downstream) == 6


def test_above_window_only_positive_norm(flows):
    upstream, downstream = flows
    _, omega_max = frequency_window(upstream, downstream)
    rng = np.random.default_rng(11)
    for omega in rng.uniform(1.05 * omega_max, 3.0 * omega_max, 25):
        channels = channel_map(float(omega), upstream, downstream)
        assert channels.regime == Regime.ABOVE_WINDOW
        assert len(channels.incoming) == 2 and len(channels.outgoing) == 2
        assert all(c.norm_sign == 1 for c in channels.channels)
        assert _scan_roots(omega, upstream) + _scan_roots(omega, downstream) == 4


def test_channels_lie_on_the_dispersion(flows):
    upstream, downstream = flows
    omega_min, omega_max = frequency_window(upstream, downstream)
    omega = 0.5 * (omega_min + omega_max)
    channels = channel_map(omega, upstream, downstream)
    for channel in channels.channels:
        hydro = upstream if channel.side.value == "upstream" else downstream
        plus, minus = dispersion_lab_frame(channel.k, hydro)
        value = plus if channel.norm_sign > 0 else minus
        assert value == pytest.approx(omega, abs=1e-8)
        moving_right = channel.group_velocity > 0
        if channel.direction == Direction.INCOMING:
            assert moving_right == (channel.side.value == "upstream")


def test_below_gap_only_downstream_channels(flows):
    upstream, downstream = flows
    omega = 0.5 * upstream.rest_gap
    channels = channel_map(omega, upstream, downstream)
    assert channels.regime == Regime.BELOW_WINDOW
    assert all(c.side.value == "downstream" for c in channels.channels)
    with pytest.raises(NoPropagatingChannel):
        channel_map(omega, upstream, downstream, require_upstream=True)
    with pytest.raises(ValueError):
        channel_map(-1.0, upstream, downstream)


def test_branch_roots_are_sorted_and_tagged(flows):
    _, downstream = flows
    roots = branch_roots(0.5 * negative_branch_max(downstream), downstream)
    assert [k for k, _ in roots] == sorted(k for k, _ in roots)
    assert {sign for _, sign in roots} == {1, -1}


def test_metric_signature_flips_at_the_horizon(flows):
    upstream, downstream = flows
    assert metric_at(upstream).g_tt > 0
    assert metric_at(downstream).g_tt < 0
    assert metric_at(downstream).g_tx == -downstream.v0
    assert metric_at(downstream).g_xx == -1.0


def test_calibrated_pump(params):
    pump, calibration = calibrate_pump(params, 0.27, 0.539, 393.0)
    v_up = params.velocity(0.27)
    upper = bistability_turning_points(v_up, params)[-1]
    assert pump.F_up**2 == pytest.approx(upper.intensity * 1.0008, rel=1e-12)
    assert len(equation_of_state_roots(pump.F_up, v_up, params)) == 3
    assert calibration.n_up > upper.n0
    target = local_hydro(calibration.n_down_target, 2.07, params)
    assert target.c_B == pytest.approx(0.81, rel=1e-9)
    assert pump.x_switch == 393.0

    unsupported, calibration = calibrate_pump(params, 0.27, 0.539, 393.0, supported=False)
    assert unsupported.F_down == 0.0
    assert not unsupported.supported
    assert calibration.c_B_target is None
