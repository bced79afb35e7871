import numpy as np
import pytest

from src.engine.exceptions import LagrangianError
from src.engine.green import spectral_density, warmup_cells
from src.engine.model import reference_config, sample_realization
from src.engine.oracle import (
    Eigenvalue,
    boundary_function,
    boundary_value_problem,
    default_plane,
    eigenphase_matrix,
    eigenvalues_in_window,
    histogram_density,
    ids_histogram,
    smoothed_count_density,
)


def _free_problem(config, X):
    return boundary_value_problem(sample_realization(config, X), config, X)


def test_default_plane_is_lagrangian():
    Phi = default_plane(3)
    assert Phi.shape == (6, 3)
    np.testing.assert_array_equal(Phi[:3], np.eye(3))


def test_non_lagrangian_plane_is_rejected(free_l2):
    real = sample_realization(free_l2, 10)
    bad = np.vstack([np.eye(2), 1j * np.eye(2)])
    with pytest.raises(LagrangianError):
        boundary_value_problem(real, free_l2, 10, phi_start=bad)
    with pytest.raises(ValueError):
        boundary_value_problem(real, free_l2, 11)


def test_eigenphase_matrix_is_unitary(coupled_l2):
    real = sample_realization(coupled_l2, 20, seed=3)
    bvp = boundary_value_problem(real, coupled_l2, 20)
    V = eigenphase_matrix(bvp, np.array([-0.3, 0.1, 0.8]))
    for U in V:
        np.testing.assert_allclose(U.conj().T @ U, np.eye(2), atol=1e-10)


def _assert_roots_are_eigenvalues(bvp, eigs):
    V = eigenphase_matrix(bvp, np.array([e.energy for e in eigs]))
    for U in V:
        assert np.min(np.abs(np.angle(np.linalg.eigvals(U)))) < 1e-6


@pytest.mark.parametrize("name", ["coupled-l2", "coupled-l3"])
def test_long_disordered_interval(name):
    config = reference_config(name, seed=5)
    X = 200
    bvp = boundary_value_problem(sample_realization(config, X, 5), config, X)
    eigs = eigenvalues_in_window(bvp, (-0.3, 0.3))
    assert eigs
    assert all(e.multiplicity >= 1 for e in eigs)
    _assert_roots_are_eigenvalues(bvp, eigs)


@pytest.mark.slow
def test_long_disordered_interval_full_window():
    config = reference_config("coupled-l2", seed=0)
    X = 200
    for r in range(3):
        bvp = boundary_value_problem(sample_realization(config, X, r), config, X)
        eigs = eigenvalues_in_window(bvp, (-2.0, 2.0))
        _assert_roots_are_eigenvalues(bvp, eigs)


def test_free_boundary_function(free_l1):
    X = 10
    bvp = _free_problem(free_l1, X)
    energies = np.linspace(0.0, 0.5, 11)
    values, _ = boundary_function(bvp, energies)
    np.testing.assert_allclose(np.abs(values), np.abs(np.sin(energies * X)), atol=1e-10)


def test_free_single_channel_eigenvalues(free_l1):
    X = 10
    eigs = eigenvalues_in_window(_free_problem(free_l1, X), (-1.0, 1.0))
    expected = np.pi * np.arange(-3, 4) / X
    np.testing.assert_allclose([e.energy for e in eigs], expected, atol=1e-9)
    assert all(e.multiplicity == 1 for e in eigs)


def test_kramers_double_roots_are_found(free_l2):
    X = 10
    eigs = eigenvalues_in_window(_free_problem(free_l2, X), (-1.0, 1.0))
    expected = np.pi * np.arange(-3, 4) / X
    np.testing.assert_allclose([e.energy for e in eigs], expected, atol=1e-6)
    assert all(e.multiplicity == 2 for e in eigs)


def test_empty_window(free_l1):
    with pytest.raises(ValueError):
        eigenvalues_in_window(_free_problem(free_l1, 10), (1.0, 1.0))


def test_free_histogram_matches_free_density(free_l1):
    centers, density = ids_histogram(free_l1, 200, 1, (-1.0, 1.0), 4)
    np.testing.assert_allclose(centers, [-0.75, -0.25, 0.25, 0.75])
    np.testing.assert_allclose(density, 1 / (2 * np.pi), rtol=0.05)


def test_histogram_counts_multiplicities():
    eigs = [Eigenvalue(0.1, 2), Eigenvalue(0.6, 1), Eigenvalue(3.0, 1)]
    centers, density = histogram_density(eigs, (0.0, 1.0), 2, L=1, X=10)
    np.testing.assert_allclose(centers, [0.25, 0.75])
    np.testing.assert_allclose(density, [2 / (2 * 10 * 0.5), 1 / (2 * 10 * 0.5)])


def test_smoothed_density_of_uniform_levels():
    X = 100
    levels = np.pi * np.arange(-95, 96) / X
    energies = np.array([-1.0, 0.0, 1.0])
    density = smoothed_count_density(levels, energies, 0.1, 1, X, (-3.0, 3.0))
    np.testing.assert_allclose(density, 1 / (2 * np.pi), rtol=0.02)
    with pytest.raises(ValueError):
        smoothed_count_density(levels, energies, 0.0, 1, X, (-3.0, 3.0))


@pytest.mark.slow
def test_counts_agree_with_green_density():
    config = reference_config("coupled-l2", seed=9)
    X, eps, window = 400, 0.1, (-1.5, 1.5)
    eigs = []
    for r in range(10):
        real = sample_realization(config, X, 9 + r)
        eigs += eigenvalues_in_window(boundary_value_problem(real, config, X), window)
    energies = np.array([-0.5, 0.0, 0.5])
    smoothed = smoothed_count_density(eigs, energies, eps, 2, X, window, 10)
    warmup = warmup_cells(eps * 1j)
    real = sample_realization(config, 20_000 + 2 * warmup, 9)
    for E, value in zip(energies, smoothed, strict=True):
        density = spectral_density(real, config, E, eps, warmup).mean
        assert abs(value - density) < 0.1 * density
