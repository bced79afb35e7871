import numpy as np
import pytest

from src.engine.algebra import (
    cayley_transform_V,
    matrix_exponential,
    sample_lie_element,
    structure_constants,
)
from src.engine.exceptions import LagrangianError, TRSViolationError
from src.engine.green import (
    AveragedGreenMatrix,
    averaged_green,
    averaged_green_stack,
    green_kernel,
    half_line_kernel,
    imaginary_part,
    kramers_block,
    lambda_integral,
    min_imaginary_eigenvalue,
    perturbed_green,
    point_density,
    rank_one_like_check,
    singular_point_green,
    spectral_density,
    transport_green,
    trs_green_defect,
    warmup_cells,
)
from src.engine.model import sample_realization, sample_two_sided
from src.engine.transfer import TransferProvider
from src.engine.weyl import m_matrix, moebius_jump_inverse

Z = 0.3 + 0.5j


@pytest.fixture
def weyl_pair(coupled_l2):
    real = sample_two_sided(coupled_l2, 400, seed=21)
    M_plus = m_matrix(real, coupled_l2, Z, 1)
    M_minus = m_matrix(real, coupled_l2, Z, -1)
    return real, M_plus, M_minus


def test_free_averaged_green():
    G = averaged_green(1j * np.eye(2), 1j * np.eye(2), Z)
    np.testing.assert_allclose(G.G, 0.5j * np.eye(4), atol=1e-15)
    assert np.trace(G.G) == pytest.approx(2j)
    assert point_density(G) == pytest.approx(1 / (2 * np.pi))


def test_stack_matches_single(weyl_pair):
    _, M_plus, M_minus = weyl_pair
    single = averaged_green(M_plus, M_minus, Z).G
    stacked = averaged_green_stack(M_plus.M[None], M_minus.M[None])[0]
    np.testing.assert_allclose(stacked, single, atol=1e-13)


def test_averaged_green_is_herglotz(weyl_pair):
    _, M_plus, M_minus = weyl_pair
    assert min_imaginary_eigenvalue(averaged_green(M_plus, M_minus, Z)) > 0


def test_averaged_green_time_reversal(weyl_pair):
    _, M_plus, M_minus = weyl_pair
    G = averaged_green(M_plus, M_minus, Z)
    assert trs_green_defect(G) < 1e-6
    for k in range(2):
        assert kramers_block(G, k, tol=1e-6).imag > 0


def test_kramers_block_rejects_broken_symmetry():
    G = np.diag([1j, 2j, 3j, 4j])
    with pytest.raises(TRSViolationError):
        kramers_block(G, 0)


def test_kernel_jump_and_average_at_origin(weyl_pair, coupled_l2):
    real, M_plus, M_minus = weyl_pair
    provider = TransferProvider(real, coupled_l2)
    x0 = real.origin
    above = green_kernel(M_plus, M_minus, provider, x0, x0, Z, branch=1)
    below = green_kernel(M_plus, M_minus, provider, x0, x0, Z, branch=-1)
    J = structure_constants(2).J
    np.testing.assert_allclose(above - below, J, atol=1e-9)
    np.testing.assert_allclose(
        (above + below) / 2, averaged_green(M_plus, M_minus, Z).G, atol=1e-9
    )


def test_kernel_needs_branch_on_diagonal(weyl_pair, coupled_l2):
    real, M_plus, M_minus = weyl_pair
    provider = TransferProvider(real, coupled_l2)
    with pytest.raises(ValueError):
        green_kernel(M_plus, M_minus, provider, real.origin, real.origin, Z)


def test_covariance_along_x(weyl_pair, coupled_l2):
    real, M_plus, M_minus = weyl_pair
    provider = TransferProvider(real, coupled_l2)
    x = real.origin + 2.37
    above = green_kernel(M_plus, M_minus, provider, x, x, Z, branch=1)
    below = green_kernel(M_plus, M_minus, provider, x, x, Z, branch=-1)
    moved = transport_green(
        averaged_green(M_plus, M_minus, Z), provider(x, Z), provider(x, np.conj(Z))
    )
    np.testing.assert_allclose((above + below) / 2, moved.G, atol=1e-8)


def test_kernel_symmetry_under_adjoint(weyl_pair, coupled_l2):
    real, M_plus, M_minus = weyl_pair
    provider = TransferProvider(real, coupled_l2)
    x, y = real.origin + 1.3, real.origin - 0.6
    upper = green_kernel(M_plus, M_minus, provider, x, y, Z)
    lower_conj = green_kernel(
        M_plus.M.conj().T, M_minus.M.conj().T, provider, y, x, np.conj(Z)
    )
    np.testing.assert_allclose(upper, lower_conj.conj().T, atol=1e-8)


def test_half_line_kernel_boundary_planes(weyl_pair, coupled_l2):
    real, M_plus, _ = weyl_pair
    provider = TransferProvider(real, coupled_l2)
    x0 = real.origin
    for gamma in (np.zeros((2, 2)), 0.5 * np.eye(2)):
        K = half_line_kernel(M_plus, provider, gamma, x0 + 1.0, x0 + 2.0, Z)
        assert np.all(np.isfinite(K))
    with pytest.raises(LagrangianError):
        half_line_kernel(M_plus, provider, 1j * np.eye(2), x0 + 1.0, x0 + 2.0, Z)
    with pytest.raises(ValueError):
        half_line_kernel(M_plus, provider, np.zeros((2, 2)), x0 - 1.0, x0 + 2.0, Z)


def test_singular_point_formulas_share_imaginary_part(rng):
    V = sample_lie_element(rng, 2, 0.5)
    M_plus, M_before = 1j * np.eye(2), 1j * np.eye(2)
    G0 = averaged_green(M_plus, M_before, Z)
    cayley = perturbed_green(G0, V)
    limits = singular_point_green(M_plus, M_before, V, Z)
    assert cayley.at == limits.at == "singular"
    np.testing.assert_allclose(
        imaginary_part(cayley.G), imaginary_part(limits.G), atol=1e-10
    )


def test_perturbed_green_imaginary_part_congruence(weyl_pair, rng):
    _, M_plus, M_minus = weyl_pair
    G0 = averaged_green(M_plus.M, M_minus.M, Z)
    eye = np.eye(4)
    for V in sample_lie_element(rng, 2, 0.5, size=100):
        G_V = perturbed_green(G0, V).G
        B = np.linalg.inv(eye + cayley_transform_V(V) @ G0.G)
        congruence = B.conj().T @ imaginary_part(G0.G) @ B
        assert np.linalg.norm(imaginary_part(G_V) - congruence) < 1e-11


def test_singular_point_imaginary_part_from_right_limit(rng):
    V = sample_lie_element(rng, 2, 0.5)
    J = structure_constants(2).J
    T = matrix_exponential(J @ V)
    M_plus = 1j * np.eye(2)
    M_before = 1j * np.eye(2) + 0.1 * np.array([[1, 0.2], [0.2, -1]])
    M_after = moebius_jump_inverse(M_before, V, -1)
    G_V = singular_point_green(M_plus, M_before, V, Z)
    G_right = averaged_green(M_plus, M_after, Z)
    eye = np.eye(4)
    expected = 0.25 * (eye + T) @ imaginary_part(G_right.G) @ (eye + T).conj().T
    np.testing.assert_allclose(imaginary_part(G_V.G), expected, atol=1e-10)


def test_cayley_singular_potential_falls_back():
    V = np.pi * np.eye(4)
    G0 = averaged_green(1j * np.eye(2), 1j * np.eye(2), Z)
    G = perturbed_green(G0, V)
    assert G.at == "singular"
    assert np.all(np.isfinite(G.G))


def test_rank_one_like_formulas(weyl_pair):
    _, M_plus, M_minus = weyl_pair
    G = AveragedGreenMatrix(averaged_green(M_plus, M_minus, Z).G, Z)
    report = rank_one_like_check(G, 0.7, 0)
    assert report.diagonal_residual < 1e-8
    assert report.off_diagonal_residual < 1e-8
    assert report.partner_diagonal_residual < 1e-8


@pytest.mark.parametrize("g", [0.3 + 0.7j, -1.2 + 0.05j, 2.0j])
def test_lambda_integral(g):
    assert lambda_integral(g) == pytest.approx(np.pi, abs=1e-4)


def test_lambda_integral_needs_upper_half_plane():
    with pytest.raises(ValueError):
        lambda_integral(0.3 - 0.1j)


def test_warmup_cells():
    assert warmup_cells(0.5j) == 50
    assert warmup_cells(0.125j) == 160


def test_free_spectral_density(free_l2):
    real = sample_realization(free_l2, 300)
    estimate = spectral_density(real, free_l2, 0.4, 0.5)
    assert estimate.mean == pytest.approx(1 / (2 * np.pi), abs=1e-10)


def test_spectral_density_rejects_short_realization(free_l2):
    real = sample_realization(free_l2, 60)
    with pytest.raises(ValueError):
        spectral_density(real, free_l2, 0.0, 0.5)
    with pytest.raises(ValueError):
        spectral_density(real, free_l2, 0.0, 0.0)
