import numpy as np
import pytest

from src.engine.kotani import (
    check_identity_i,
    check_identity_ii,
    check_identity_iv,
    check_thouless,
    estimate_w,
    herglotz_average,
    jump_blocks,
    kotani_report,
    orbit_sample,
    partial_sum_inequality,
    trace_green,
    u_monotonicity,
    u_values,
)
from src.engine.model import reference_config, sample_realization

Z = 0.3 + 0.5j


@pytest.fixture
def free_sample(free_l2):
    return orbit_sample(free_l2, Z, 200)


def test_orbit_sample_drops_warmup(free_l2, free_sample):
    assert free_sample.realization.n_cells == 200
    assert free_sample.realization.first_cell == 51
    assert free_sample.plus.log_alpha.shape == (200,)


def test_free_kotani_functionals(free_sample):
    L = 2
    for sign in (1, -1):
        w = estimate_w(free_sample, sign)
        assert w.mean == pytest.approx(1j * Z * L, abs=1e-10)


def test_free_trace_green(free_sample, free_l2):
    trace = trace_green(free_sample, free_l2)
    assert trace.mean == pytest.approx(2j, abs=1e-10)


def test_free_herglotz_average(free_sample, free_l2):
    for sign in (1, -1):
        value = herglotz_average(free_sample, free_l2, sign)
        assert value.mean == pytest.approx(2 * 2 * Z.imag, abs=1e-10)


def test_free_identity_i(free_sample):
    check = check_identity_i(free_sample)
    assert check.passed
    assert check.residual == pytest.approx(0.0, abs=1e-12)


def test_free_u_values():
    np.testing.assert_allclose(u_values(1j * np.eye(3)), 0.5)


def test_u_values_are_descending(rng):
    A = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    M = 0.3 * (A + A.conj().T) + 1j * (np.eye(3) + 0.1 * A @ A.conj().T)
    values = u_values(M)
    assert np.all(np.diff(values) <= 0)
    assert np.all((values > 0) & (values <= 0.5 + 1e-12))


def test_jump_blocks(coupled_l2):
    real = sample_realization(coupled_l2, 4, seed=1)
    A, B, C, D = jump_blocks(real)
    np.testing.assert_array_equal(A, real.jumps[:, :2, :2])
    np.testing.assert_array_equal(D, real.jumps[:, 2:, 2:])
    assert B.shape == C.shape == (4, 2, 2)


def test_orbit_sample_arguments(free_l2):
    with pytest.raises(ValueError):
        orbit_sample(free_l2, 0.3, 100)
    with pytest.raises(ValueError):
        orbit_sample(free_l2, Z, 100, realization=sample_realization(free_l2, 120))
    with pytest.raises(ValueError):
        check_thouless(free_l2, 0.1 + 0.04j, 100, h=0.05)
    with pytest.raises(ValueError):
        partial_sum_inequality(free_l2, 0.0, 0.3, 3, 100)


def test_report_structure(free_l2):
    report = kotani_report(free_l2, Z, 200, seed=1)
    names = [check.name for check in report.checks]
    assert names == [
        "re_w_plus_equals_re_w_minus",
        "gamma_equals_minus_re_w_plus",
        "gamma_equals_minus_re_w_minus",
        "thouless_plus",
        "two_gamma_equals_herglotz_average_plus",
        "two_gamma_equals_herglotz_average_minus",
    ]
    assert report.checks[0].passed
    assert report.trace_green == pytest.approx((0.0, 2.0), abs=1e-10)
    dumped = report.model_dump(mode="json")
    assert dumped["z"] == [Z.real, Z.imag]


@pytest.mark.slow
@pytest.mark.parametrize("z", [0.3 + 0.4j, -0.5 + 0.2j])
def test_identities_on_coupled_ensemble(z):
    config = reference_config("coupled-l2", seed=5)
    report = kotani_report(config, z, 50_000)
    for check in report.checks:
        assert check.units < 3, check


@pytest.mark.slow
def test_identities_on_three_channels():
    config = reference_config("coupled-l3", seed=5)
    sample = orbit_sample(config, 0.1 + 0.3j, 50_000)
    assert check_identity_i(sample).passed
    for check in check_identity_ii(config, 0.1 + 0.3j, 50_000, sample=sample):
        assert check.passed, check
    for check in check_identity_iv(config, 0.1 + 0.3j, 50_000, sample=sample):
        assert check.passed, check


@pytest.mark.slow
@pytest.mark.parametrize("k", [1, 2])
def test_partial_sum_inequality(k):
    config = reference_config("coupled-l2", seed=5)
    check = partial_sum_inequality(config, 0.2, 0.2, k, 50_000)
    assert check.passed, check


@pytest.mark.slow
def test_u_monotonicity():
    config = reference_config("coupled-l2", seed=5)
    estimates = u_monotonicity(config, 0.2, [0.1, 0.2, 0.4], 1, 50_000)
    for low, high in zip(estimates, estimates[1:]):
        assert high.mean - low.mean > -3 * np.hypot(low.stderr, high.stderr)
