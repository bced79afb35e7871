import numpy as np
import pytest
import scipy.linalg

from src.engine.algebra import structure_constants
from src.engine.exceptions import StructureError, TransferOverflowError
from src.engine.model import reference_config, sample_realization, sample_two_sided
from src.engine.transfer import (
    TransferMatrix,
    TransferProvider,
    cell_propagator,
    cell_propagators,
    compose,
    gram_integral,
    inverse_via_symmetry,
    stream_propagators,
    symplectic_defect,
    transfer,
    trs_defect,
    wronskian_defect,
)

Z = 0.3 + 0.2j


def test_free_propagator_is_rotation(free_l2):
    J = structure_constants(2).J
    real = sample_realization(free_l2, 7)
    T = transfer(real, free_l2, Z)
    np.testing.assert_allclose(T.M, scipy.linalg.expm(-7 * Z * J), atol=1e-12)
    assert T.span == pytest.approx((0.0, 7.0))


def test_single_cell_matches_stack(coupled_l2):
    real = sample_realization(coupled_l2, 3, seed=2)
    stack = cell_propagators(real, coupled_l2, Z)
    single = cell_propagator((real.lambdas[1], real.potentials[1]), coupled_l2, Z)
    np.testing.assert_allclose(single.M, stack[1], atol=1e-12)


def test_composition_matches_transfer(coupled_l2):
    real = sample_realization(coupled_l2, 6, seed=2)
    first = transfer(real.cells(1, 3), coupled_l2, Z)
    second = transfer(real.cells(4, 6), coupled_l2, Z)
    whole = transfer(real, coupled_l2, Z)
    np.testing.assert_allclose(compose(second, first).M, whole.M, rtol=1e-11)


def test_compose_rejects_mismatches():
    eye = np.eye(4, dtype=complex)
    a = TransferMatrix(eye, Z, (0.0, 1.0))
    with pytest.raises(StructureError):
        compose(TransferMatrix(eye, Z, (2.0, 3.0)), a)
    with pytest.raises(StructureError):
        compose(TransferMatrix(eye, Z + 1, (1.0, 2.0)), a)


def test_real_energy_preserves_form(coupled_l2):
    real = sample_realization(coupled_l2, 20, seed=4)
    assert symplectic_defect(transfer(real, coupled_l2, 0.4)) < 1e-12


def test_time_reversal_relation(coupled_l2):
    real = sample_realization(coupled_l2, 20, seed=4)
    T = transfer(real, coupled_l2, Z)
    T_conj = transfer(real, coupled_l2, np.conj(Z))
    assert trs_defect(T, T_conj) < 1e-10 * np.linalg.norm(T.M)


def test_time_reversal_relation_fails_without_symmetry(broken_l2):
    real = sample_realization(broken_l2, 20, seed=4)
    T = transfer(real, broken_l2, Z)
    T_conj = transfer(real, broken_l2, np.conj(Z))
    assert trs_defect(T, T_conj) > 1e-3


def test_inverse_via_symmetry(coupled_l2):
    real = sample_realization(coupled_l2, 10, seed=4)
    T = transfer(real, coupled_l2, Z)
    inverse = inverse_via_symmetry(transfer(real, coupled_l2, np.conj(Z)))
    np.testing.assert_allclose(inverse.M @ T.M, np.eye(4), atol=1e-9)
    assert inverse.span == (T.span[1], T.span[0])


def test_wronskian_identity(coupled_l2):
    real = sample_realization(coupled_l2, 5, seed=8)
    gram, _, _ = gram_integral(real, coupled_l2, Z, 0.1 + 0.5j, 5)
    defect = wronskian_defect(real, coupled_l2, Z, 0.1 + 0.5j, 5)
    assert defect < 1e-9 * (1 + np.linalg.norm(gram))


def test_gram_of_free_solution(free_l1):
    real = sample_realization(free_l1, 3)
    z = 0.5j
    gram, _, _ = gram_integral(real, free_l1, z, z, 3)
    # singular values e^{±x/2}
    expected = 2 * np.sinh(3.0)
    assert np.trace(gram).real == pytest.approx(expected, rel=1e-10)


def test_stream_matches_materialized(coupled_l2):
    real = sample_realization(coupled_l2, 1500, seed=3)
    streamed = np.concatenate(list(stream_propagators(coupled_l2, Z, 1500, seed=3)))
    np.testing.assert_allclose(streamed, cell_propagators(real, coupled_l2, Z))


def test_overflow_is_reported():
    gapped = reference_config("gapped-l2")
    real = sample_realization(gapped, 1000)
    with pytest.raises(TransferOverflowError):
        transfer(real, gapped, 0.0)


def test_provider_right_of_origin(coupled_l2):
    real = sample_two_sided(coupled_l2, 10, seed=5)
    provider = TransferProvider(real, coupled_l2)
    right = transfer(real.cells(1, 4), coupled_l2, Z)
    np.testing.assert_allclose(provider(real.origin + 4, Z), right.M, rtol=1e-11)
    np.testing.assert_allclose(provider(real.origin, Z), np.eye(4), atol=1e-15)


def test_provider_partial_cell_continuity(coupled_l2):
    real = sample_two_sided(coupled_l2, 10, seed=5)
    provider = TransferProvider(real, coupled_l2)
    x = real.origin + 2.5
    a, b = provider(x - 1e-9, Z), provider(x + 1e-9, Z)
    np.testing.assert_allclose(a, b, atol=1e-7)


def test_provider_left_of_origin(coupled_l2):
    real = sample_two_sided(coupled_l2, 10, seed=5)
    provider = TransferProvider(real, coupled_l2)
    forward = transfer(real.cells(-2, 0), coupled_l2, Z)
    np.testing.assert_allclose(
        provider(real.origin - 3, Z) @ forward.M, np.eye(4), atol=1e-9
    )


def test_provider_without_origin_jump(coupled_l2):
    real = sample_two_sided(coupled_l2, 10, seed=5)
    with_jump = TransferProvider(real, coupled_l2)
    without = TransferProvider(real, coupled_l2, include_origin_jump=False)
    x = real.origin - 0.5
    np.testing.assert_allclose(
        with_jump(x, Z), without(x, Z) @ np.linalg.inv(real.jumps[9]), atol=1e-9
    )


def test_provider_needs_origin(coupled_l2):
    real = sample_realization(coupled_l2, 5, first_cell=5)
    with pytest.raises(StructureError):
        TransferProvider(real, coupled_l2)
    provider = TransferProvider(sample_two_sided(coupled_l2, 3), coupled_l2)
    with pytest.raises(ValueError):
        provider(10.0, Z)
