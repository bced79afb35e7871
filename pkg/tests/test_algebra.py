import numpy as np
import pytest

from src.engine.algebra import (
    cayley_transform_V,
    channel_count,
    check_group_membership,
    exterior_power_norm,
    hermitian_basis,
    kdu_decompose,
    kramers_partner,
    lie_basis,
    matrix_exponential,
    sample_lie_element,
    structure_constants,
    to_conjugated_rep,
    to_original_rep,
    trs_defect_of,
)
from src.engine.exceptions import SingularityError, StructureError


def _member(rng, L, factors=3, scale=0.5):
    J = structure_constants(L).J
    M = np.eye(2 * L, dtype=complex)
    for W in sample_lie_element(rng, L, scale, size=factors):
        M = matrix_exponential(J @ W) @ M
    return M


@pytest.mark.parametrize("L", [1, 2, 3])
def test_structure_constants(L):
    sc = structure_constants(L)
    eye = np.eye(2 * L)
    np.testing.assert_allclose(sc.J @ sc.J, -eye, atol=1e-15)
    np.testing.assert_allclose(sc.J.T @ sc.J, eye, atol=1e-15)
    np.testing.assert_allclose(sc.A_cayley.conj().T @ sc.A_cayley, eye, atol=1e-14)
    assert np.allclose(sc.S.imag, 0)


def test_channel_count_rejects_odd_dimension():
    with pytest.raises(StructureError):
        channel_count(np.eye(3))


@pytest.mark.parametrize("L", [1, 2, 3, 4])
def test_lie_basis_dimension_and_symmetry(L):
    basis = lie_basis(L)
    assert len(basis) == L * (2 * L - 1)
    assert max(trs_defect_of(W) for W in basis) < 1e-12
    assert len(hermitian_basis(L)) == 4 * L * L


def test_single_channel_potentials_are_scalar():
    (W,) = lie_basis(1)
    np.testing.assert_allclose(W, W[0, 0] * np.eye(2), atol=1e-14)


@pytest.mark.parametrize("L", [1, 2, 3])
def test_exponentials_are_group_members(rng, L):
    M = _member(rng, L)
    report = check_group_membership(M, tol=1e-10 * np.linalg.norm(M) ** 2)
    assert report.is_member


def test_non_member_is_rejected(rng):
    M = _member(rng, 2)
    M[0, 0] += 0.1
    assert not check_group_membership(M).is_member


def test_representations_round_trip(rng):
    M = _member(rng, 2)
    np.testing.assert_allclose(to_original_rep(to_conjugated_rep(M)), M, atol=1e-12)
    report = check_group_membership(
        to_conjugated_rep(M), "conjugated", tol=1e-10 * np.linalg.norm(M) ** 2
    )
    assert report.is_member


def test_broken_samples_are_hermitian_only(rng):
    W = sample_lie_element(rng, 2, 1.0, time_reversal=False)
    np.testing.assert_allclose(W, W.conj().T, atol=1e-14)
    assert trs_defect_of(W) > 1e-3


def test_truncated_sampling_stays_inside(rng):
    basis = lie_basis(2)
    draws = sample_lie_element(rng, 2, 1.0, truncate=1.0, size=200)
    coords = np.einsum("kab,mab->mk", basis.conj(), draws).real
    assert np.all(np.abs(coords) <= 1.0 + 1e-12)


def test_cayley_transform_reconstructs_jump(rng):
    L = 2
    J = structure_constants(L).J
    V = sample_lie_element(rng, L, 0.5)
    V_hat = cayley_transform_V(V)
    t = J.T @ V_hat / 2
    eye = np.eye(2 * L)
    np.testing.assert_allclose(
        (eye + t) @ np.linalg.inv(eye - t), matrix_exponential(J @ V), atol=1e-12
    )
    assert trs_defect_of(V_hat) < 1e-11


def test_cayley_transform_undefined_at_minus_one():
    V = np.pi * np.eye(4)
    with pytest.raises(SingularityError):
        cayley_transform_V(V)


def test_kramers_partner_is_antiunitary_pairing(rng):
    v = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    w = kramers_partner(v)
    assert abs(np.vdot(v, w)) < 1e-12
    np.testing.assert_allclose(kramers_partner(w), -v, atol=1e-12)


@pytest.mark.parametrize("L", [1, 2, 3, 4])
def test_kdu_reconstruction(rng, L):
    M = to_conjugated_rep(_member(rng, L))
    kdu = kdu_decompose(M)
    np.testing.assert_allclose(kdu.K @ kdu.D @ kdu.U, M, atol=1e-9 * np.linalg.norm(M))
    for factor in (kdu.K, kdu.U):
        np.testing.assert_allclose(
            factor.conj().T @ factor, np.eye(2 * L), atol=1e-9
        )
        assert check_group_membership(factor, "conjugated", tol=1e-9).is_member
    assert len(kdu.a) == L // 2
    assert np.all(kdu.a >= 1 - 1e-9)
    assert np.all(np.diff(kdu.a) <= 1e-9)

    diagonal = np.diag(kdu.D)
    np.testing.assert_allclose(kdu.D, np.diag(diagonal), atol=1e-14)
    expected = np.concatenate([kdu.a, kdu.a, 1 / kdu.a, 1 / kdu.a, np.ones(L % 2 * 2)])
    np.testing.assert_allclose(
        np.sort(diagonal.real), np.sort(expected), rtol=1e-9, atol=1e-12
    )
    np.testing.assert_allclose(
        np.sort(np.linalg.svd(M, compute_uv=False)), np.sort(expected), rtol=1e-8
    )


def test_kdu_rejects_non_member(rng):
    M = to_conjugated_rep(_member(rng, 2))
    M[1, 2] += 0.5
    with pytest.raises(StructureError):
        kdu_decompose(M)


@pytest.mark.parametrize("L", [2, 3, 4])
def test_exterior_power_norm_of_members(rng, L):
    M = to_conjugated_rep(_member(rng, L))
    a = kdu_decompose(M).a
    inverse = np.linalg.inv(M)
    for p in range(1, L // 2 + 1):
        norm = exterior_power_norm(M, p)
        assert norm == pytest.approx(np.prod(a[:p] ** 2), rel=1e-9)
        assert norm * exterior_power_norm(inverse, p) >= 1 - 1e-12
    assert exterior_power_norm(np.eye(2 * L), L // 2) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        exterior_power_norm(M, 0)
    with pytest.raises(ValueError):
        exterior_power_norm(M, L // 2 + 1)


def test_exterior_power_norm_needs_a_kramers_level():
    with pytest.raises(ValueError):
        exterior_power_norm(np.eye(2, dtype=complex), 1)
