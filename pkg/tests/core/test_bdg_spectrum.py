"""BdG operator assembly, norm classification and QNM selection."""

import numpy as np
import pytest

from conftest import (
    REDUCED_DEFECT,
    REDUCED_GRID,
    REDUCED_PLATEAUS,
    horizon_qnm,
    plateaus,
    transcritical_background,
)
from polariton_horizon.core.bdg_spectrum import (
    BdgMode,
    MultipleQnmCandidates,
    NoQnmFound,
    NormClass,
    assemble_bdg,
    biorthogonality_error,
    circular_distance,
    diagonalize,
    find_qnm,
    first_derivative,
    first_derivative_symbol,
    mode_table,
    operator_from_profiles,
    periodic_gradient,
    second_derivative,
    second_derivative_symbol,
)
from polariton_horizon.core.model import effective_detuning, frequency_window
from polariton_horizon.models import AnalysisSpec, DefectPotential, mev_from_rate


def _plane_wave(n, h, m):
    x = h * np.arange(n)
    k = 2.0 * np.pi * m / (n * h)
    return x, k, np.exp(1j * k * x)


@pytest.mark.parametrize("m", [0, 1, 5, 11])
def test_stencils_act_through_their_symbols(m):
    n, h = 32, 0.7
    _, k, wave = _plane_wave(n, h, m)
    np.testing.assert_allclose(first_derivative(n, h) @ wave,
                               1j * first_derivative_symbol(k, h) * wave, atol=1e-12)
    np.testing.assert_allclose(second_derivative(n, h) @ wave,
                               -second_derivative_symbol(k, h) * wave, atol=1e-12)


def test_periodic_gradient_vanishes_on_constants():
    assert not np.any(periodic_gradient(np.full(16, 3.5), 0.5))
    x = 2.0 * np.pi * np.arange(64) / 64
    np.testing.assert_allclose(periodic_gradient(np.sin(x), x[1]), np.cos(x), atol=1e-5)


def test_homogeneous_spectrum_matches_the_discrete_dispersion(params):
    n, h, v0 = 32, 1.0, 0.3
    delta = float(effective_detuning(v0, params))
    n0 = 1.2 * delta / params.g
    gn = params.g * n0
    op = operator_from_profiles(np.full(n, n0), np.full(n, v0), h, params)
    omegas = np.linalg.eigvals(op.matrix)

    k = 2.0 * np.pi * np.fft.fftfreq(n, d=h)
    A = 0.5 * params.hbar_over_mass * second_derivative_symbol(k, h) + 2 * gn - delta
    root = np.sqrt(A**2 - gn**2)
    drift = v0 * first_derivative_symbol(k, h)
    expected = np.sort(np.concatenate([drift + root, drift - root]))

    assert np.max(np.abs(omegas.imag)) < 1e-9
    np.testing.assert_allclose(np.sort(omegas.real), expected, atol=1e-9)


def test_subsonic_homogeneous_modes_split_into_positive_and_negative_norm(params):
    n, v0 = 32, 0.3
    delta = float(effective_detuning(v0, params))
    op = operator_from_profiles(np.full(n, 1.2 * delta / params.g), np.full(n, v0), 1.0, params)
    modes = diagonalize(op)
    assert len(modes) == 2 * n
    counts = {kind: sum(m.classification == kind for m in modes) for kind in NormClass}
    assert counts[NormClass.POSITIVE] == n
    assert counts[NormClass.NEGATIVE] == n
    assert counts[NormClass.ZERO] == 0
    for mode in modes:
        assert (mode.norm > 0) == (mode.omega.real > 0)
    assert [m.omega.real for m in modes] == sorted(m.omega.real for m in modes)


def _modulated_operator(params, n=8):
    x = np.arange(n) * 1.5
    phase = 2.0 * np.pi * x / (n * 1.5)
    v0 = 0.3 + 0.05 * np.sin(phase)
    delta = float(effective_detuning(0.3, params))
    n0 = 1.2 * delta / params.g * (1.0 + 0.1 * np.cos(phase))
    return operator_from_profiles(n0, v0, 1.5, params, x=x)


def test_left_and_right_eigenvectors_are_biorthogonal(params):
    assert biorthogonality_error(_modulated_operator(params)) < 1e-8


def test_spectrum_is_symmetric_under_omega_to_minus_conjugate(params):
    modes = diagonalize(_modulated_operator(params))
    for mode in modes:
        partner = modes[mode.partner]
        assert abs(partner.omega + np.conj(mode.omega)) < 1e-8


def test_assemble_on_a_background(uniform_background):
    op = assemble_bdg(uniform_background)
    n = uniform_background.grid.n_points
    assert op.matrix.shape == (2 * n, 2 * n)
    assert op.horizon_x is None
    assert op.period == pytest.approx(uniform_background.grid.length)
    assert op.gamma == uniform_background.params.gamma


def _mode(omega, center, kind=NormClass.ZERO):
    return BdgMode(omega=omega, u=np.zeros(4), v=np.zeros(4), norm=0.0, center=center,
                   localization=5.0, classification=kind)


def test_find_qnm_keeps_the_decaying_zero_norm_mode_at_the_horizon():
    gamma = 0.07
    modes = [
        _mode(0.60 - 0.01j, 100.0),
        _mode(0.60 + 0.01j, 100.0),  # growing twin
        _mode(0.62 - 0.02j, 300.0),  # far from the horizon
        _mode(0.65 - 0.01j, 104.0, NormClass.POSITIVE),
        _mode(0.90 - 0.01j, 104.0),  # outside the window
    ]
    estimate = find_qnm(modes, (0.5, 0.7), horizon_x=105.0, gamma=gamma)
    assert estimate.Omega_qnm == pytest.approx(0.60)
    assert estimate.Gamma_radiative == pytest.approx(0.02)
    assert estimate.Gamma_qnm == pytest.approx(0.02 + gamma)
    assert estimate.Q == pytest.approx(0.60 / 0.09)
    record = estimate.record()
    assert record["Omega_qnm_meV"] == pytest.approx(mev_from_rate(0.60))
    assert record["window_per_ps"] == [0.5, 0.7]


def test_find_qnm_wraps_distances_on_a_periodic_window():
    modes = [_mode(0.6 - 0.01j, 395.0)]
    estimate = find_qnm(modes, (0.5, 0.7), horizon_x=5.0, gamma=0.0, period=400.0)
    assert estimate.mode.center == 395.0
    with pytest.raises(NoQnmFound):
        find_qnm(modes, (0.5, 0.7), horizon_x=5.0, gamma=0.0)


def test_find_qnm_failures():
    with pytest.raises(NoQnmFound):
        find_qnm([_mode(0.6 - 0.01j, 100.0, NormClass.NEGATIVE)], (0.5, 0.7), 100.0, 0.0)
    with pytest.raises(MultipleQnmCandidates) as info:
        find_qnm([_mode(0.6 - 0.01j, 100.0), _mode(0.65 - 0.02j, 110.0)], (0.5, 0.7),
                 105.0, 0.0)
    assert len(info.value.candidates) == 2


def test_circular_distance():
    assert circular_distance(1.0, 399.0, 400.0) == pytest.approx(2.0)
    assert circular_distance(100.0, 150.0, 400.0) == pytest.approx(50.0)


def test_mode_table_adds_back_the_intrinsic_loss():
    rows = mode_table([_mode(0.6 - 0.01j, 100.0)], gamma=0.08)
    assert rows[0]["im_omega_meV"] == pytest.approx(mev_from_rate(-0.01))
    assert rows[0]["im_omega_total_meV"] == pytest.approx(mev_from_rate(-0.05))
    assert rows[0]["classification"] == "zero"


def test_homogeneous_fluid_has_no_resonance(uniform_background, flows):
    _, omega_max = frequency_window(*flows)
    op = assemble_bdg(uniform_background)
    modes = diagonalize(op)
    assert not any(m.classification == NormClass.ZERO for m in modes)
    with pytest.raises(NoQnmFound):
        find_qnm(modes, (omega_max, 3.0 * omega_max), horizon_x=50.0,
                 gamma=uniform_background.params.gamma, period=op.period)


@pytest.fixture(scope="module")
def reduced_background():
    return transcritical_background(REDUCED_GRID, REDUCED_DEFECT)


def test_reduced_grid_resonance_sits_at_the_horizon(reduced_background):
    _, omega_max = frequency_window(*plateaus(reduced_background, REDUCED_PLATEAUS))
    qnm = horizon_qnm(reduced_background, REDUCED_PLATEAUS)
    assert qnm.mode.classification == NormClass.ZERO
    assert qnm.Omega_qnm > omega_max
    assert qnm.Gamma_radiative >= 0
    assert circular_distance(qnm.mode.center, reduced_background.horizon_x,
                             REDUCED_GRID.length) <= AnalysisSpec().horizon_distance


def test_reduced_grid_without_the_defect_has_no_resonance():
    flat = REDUCED_DEFECT.model_copy(update={"depth": 0.0})
    background = transcritical_background(REDUCED_GRID, flat, require_horizon=False)
    with pytest.raises(NoQnmFound):
        horizon_qnm(background, REDUCED_PLATEAUS)


@pytest.mark.slow
def test_default_flow_has_one_resonance_above_the_window(default_background, default_qnm):
    _, omega_max = frequency_window(*plateaus(default_background))
    gamma = default_background.params.gamma
    # find_qnm raises on zero or several candidates
    assert omega_max < default_qnm.Omega_qnm < AnalysisSpec().qnm_cutoff_factor * omega_max
    assert default_qnm.mode.classification == NormClass.ZERO
    assert abs(default_qnm.mode.center - default_background.horizon_x) <= 20.0
    assert default_qnm.Gamma_qnm / 2 == pytest.approx(gamma / 2, rel=0.5)


@pytest.mark.slow
def test_removing_the_defect_removes_the_resonance():
    background = transcritical_background(defect=DefectPotential(depth=0.0),
                                          require_horizon=False)
    with pytest.raises(NoQnmFound):
        horizon_qnm(background)


@pytest.mark.slow
def test_resonance_survives_without_downstream_support(unsupported_background, default_qnm):
    assert unsupported_background.pump.F_down == 0.0
    qnm = horizon_qnm(unsupported_background)
    assert qnm.Omega_qnm == pytest.approx(default_qnm.Omega_qnm, rel=0.1)
