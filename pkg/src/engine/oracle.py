"""Finite-interval eigenvalues from the boundary-plane intersection condition.

E is an eigenvalue of the operator on [x₀, x₀ + X] with Lagrangian boundary
planes Φ₀, Φ_X exactly when T^E Φ₀ meets Φ_X, i.e. when the unitary
V(E) = u(Φ_X)* u(T^E Φ₀) has eigenvalue 1. With eigenphases θ_l of V,
r(E) = Π sin(θ_l/2), phase-normalized through the unwrapped arg det V, is
real-analytic in E and vanishes exactly there.
"""

import logging
from typing import NamedTuple

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .algebra import matrix_exponential, structure_constants
from .exceptions import LagrangianError
from .model import DisorderConfig, Realization, cell_grid, sample_realization
from .transfer import piece_generators
from .weyl import lagrangian_unitary

logger = logging.getLogger("engine.oracle")

LAGRANGIAN_TOL = 1e-12
ROOT_ACCEPT = 1e-10
ROOT_SUSPECT = 1e-3
PHASE_TOL = 1e-6
REORTHO_EVERY = 5


class BoundaryValueProblem(NamedTuple):
    """Cells first..first + X − 1 of a realization with boundary planes."""

    realization: Realization
    config: DisorderConfig
    X: int
    phi_start: np.ndarray
    phi_end: np.ndarray


class Eigenvalue(NamedTuple):
    energy: float
    multiplicity: int


def default_plane(L: int) -> np.ndarray:
    """(1; 0): Lagrangian and not invariant under time reversal."""
    return np.vstack([np.eye(L), np.zeros((L, L))]).astype(complex)


def _check_plane(Phi: np.ndarray, L: int, where: str):
    J = structure_constants(L).J
    defect = np.linalg.norm(Phi.conj().T @ J @ Phi)
    if Phi.shape != (2 * L, L) or defect > LAGRANGIAN_TOL:
        raise LagrangianError(f"{where} is not a Lagrangian plane: defect {defect:.3e}")


def boundary_value_problem(
    realization: Realization,
    config: DisorderConfig,
    X: int,
    phi_start: np.ndarray | None = None,
    phi_end: np.ndarray | None = None,
) -> BoundaryValueProblem:
    if not 1 <= X <= realization.n_cells:
        raise ValueError(f"X must lie in [1, {realization.n_cells}], got {X}")
    L = config.L
    phi_start = default_plane(L) if phi_start is None else np.asarray(phi_start, complex)
    phi_end = default_plane(L) if phi_end is None else np.asarray(phi_end, complex)
    _check_plane(phi_start, L, "phi_start")
    _check_plane(phi_end, L, "phi_end")
    segment = realization.cells(realization.first_cell, realization.first_cell + X - 1)
    return BoundaryValueProblem(segment, config, X, phi_start, phi_end)


def _images(bvp: BoundaryValueProblem, energies: np.ndarray) -> np.ndarray:
    """Orthonormal frames of T^E Φ₀ for a vector of real energies, shape
    (m, 2L, L).

    The frame is propagated cell by cell and re-orthonormalized every
    REORTHO_EVERY cells, so directions that grow more slowly than the top
    ones are kept. The last jump sits at the right end x₀ + X and is left
    out: the boundary condition acts on the solution just inside the
    interval.
    """
    grid = cell_grid(bvp.config)
    pieces = bvp.realization.piece_values(bvp.config)
    J = structure_constants(bvp.config.L).J
    Y = np.broadcast_to(bvp.phi_start, (len(energies), *bvp.phi_start.shape)).copy()
    for i in range(bvp.X):
        for p, width in enumerate(grid.widths):
            base = piece_generators(pieces[i, p][None], np.array([width]), 0.0)[0]
            generators = base - (width * energies)[:, None, None] * J
            Y = matrix_exponential(generators) @ Y
        if i < bvp.X - 1:
            Y = bvp.realization.jumps[i] @ Y
        if (i + 1) % REORTHO_EVERY == 0:
            Y = np.linalg.qr(Y)[0]
    return np.linalg.qr(Y)[0]


def eigenphase_matrix(bvp: BoundaryValueProblem, energies: np.ndarray) -> np.ndarray:
    """V(E) = u(Φ_X)* u(T^E Φ₀) for each energy."""
    u_end = lagrangian_unitary(bvp.phi_end)
    images = _images(bvp, np.atleast_1d(energies))
    return np.stack([u_end.conj().T @ lagrangian_unitary(Phi) for Phi in images])


def _raw_boundary_function(V: np.ndarray, reference_phase: np.ndarray) -> np.ndarray:
    L = V.shape[-1]
    phase = np.angle(np.linalg.det(V))
    phase = reference_phase + np.angle(np.exp(1j * (phase - reference_phase)))
    value = np.linalg.det(V - np.eye(L)) * np.exp(-0.5j * phase) / (2j) ** L
    return value.real, phase


def boundary_function(
    bvp: BoundaryValueProblem, energies: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """r(E) on an increasing grid, with arg det V unwrapped along the grid."""
    energies = np.asarray(energies, dtype=float)
    V = eigenphase_matrix(bvp, energies)
    phase = np.unwrap(np.angle(np.linalg.det(V)))
    L = V.shape[-1]
    value = np.linalg.det(V - np.eye(L)) * np.exp(-0.5j * phase) / (2j) ** L
    return value.real, phase


def eigenvalue_multiplicity(bvp: BoundaryValueProblem, E: float) -> int:
    """Number of eigenphases of V(E) at 0."""
    V = eigenphase_matrix(bvp, np.array([E]))[0]
    thetas = np.angle(np.linalg.eigvals(V))
    return max(1, int(np.sum(np.abs(thetas) < PHASE_TOL)))


def eigenvalues_in_window(
    bvp: BoundaryValueProblem,
    window: tuple[float, float],
    grid_step: float | None = None,
    refine_tol: float = 1e-12,
) -> list[Eigenvalue]:
    """Eigenvalues in [E_lo, E_hi] by scanning r(E) and refining brackets.

    Sign changes are refined with brentq. Grid minima of |r| without a sign
    change are refined with a bounded minimizer; they are accepted below
    ROOT_ACCEPT and reported as suspected misses above it.
    """
    lo, hi = window
    if not lo < hi:
        raise ValueError(f"empty window {window}")
    grid_step = 0.1 / bvp.X if grid_step is None else grid_step
    n_points = int(np.ceil((hi - lo) / grid_step)) + 1
    energies = np.linspace(lo, hi, n_points)
    values, phases = boundary_function(bvp, energies)
    scale = max(float(np.max(np.abs(values))), 1e-300)

    def evaluate(E: float, i: int) -> float:
        V = eigenphase_matrix(bvp, np.array([E]))
        return float(_raw_boundary_function(V, np.array([phases[i]]))[0][0])

    roots: list[float] = []
    for i in range(n_points - 1):
        a, b = values[i], values[i + 1]
        if a == 0:
            roots.append(energies[i])
        elif a * b < 0:
            roots.append(
                brentq(
                    evaluate, energies[i], energies[i + 1], args=(i,), xtol=refine_tol
                )
            )
    if values[-1] == 0:
        roots.append(energies[-1])

    magnitude = np.abs(values)
    for i in range(1, n_points - 1):
        if values[i - 1] * values[i] < 0 or values[i] * values[i + 1] < 0:
            continue
        if magnitude[i] > magnitude[i - 1] or magnitude[i] > magnitude[i + 1]:
            continue
        if magnitude[i] == 0:
            continue
        result = minimize_scalar(
            lambda E, i=i: abs(evaluate(E, i)),
            bounds=(energies[i - 1], energies[i + 1]),
            method="bounded",
            options={"xatol": refine_tol},
        )
        if result.fun < ROOT_ACCEPT * max(scale, 1.0):
            roots.append(float(result.x))
        elif result.fun < ROOT_SUSPECT * scale:
            logger.warning(
                "suspected missed eigenvalue near E=%.8f (|r| = %.3e); refine "
                "the grid",
                result.x,
                result.fun,
            )

    merged: list[float] = []
    for root in sorted(roots):
        if merged and root - merged[-1] < 1e-3 * grid_step:
            continue
        merged.append(root)
    roots = merged
    return [Eigenvalue(float(E), eigenvalue_multiplicity(bvp, E)) for E in roots]


def ids_histogram(
    config: DisorderConfig,
    X: int,
    n_realizations: int,
    window: tuple[float, float],
    bins: int,
    seed: int | None = None,
    grid_step: float | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalue counts per 2L components, unit length and unit energy.

    Returns (bin centers, density). Realization r uses seed `seed + r`.
    """
    seed = config.seed if seed is None else seed
    eigenvalues: list[Eigenvalue] = []
    for r in range(n_realizations):
        realization = sample_realization(config, X, seed + r)
        bvp = boundary_value_problem(realization, config, X)
        eigenvalues += eigenvalues_in_window(bvp, window, grid_step)
    return histogram_density(eigenvalues, window, bins, config.L, X, n_realizations)


def histogram_density(
    eigenvalues: list[Eigenvalue],
    window: tuple[float, float],
    bins: int,
    L: int,
    X: int,
    n_realizations: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """Multiplicity-weighted eigenvalue counts per 2L components, unit length
    and unit energy."""
    edges = np.linspace(window[0], window[1], bins + 1)
    counts = np.zeros(bins)
    for eig in eigenvalues:
        index = np.searchsorted(edges, eig.energy, side="right") - 1
        if index == bins and eig.energy == edges[-1]:
            index -= 1
        if 0 <= index < bins:
            counts[index] += eig.multiplicity
    width = edges[1] - edges[0]
    density = counts / (2 * L * X * width * n_realizations)
    return (edges[:-1] + edges[1:]) / 2, density


def smoothed_count_density(
    eigenvalues: list[Eigenvalue] | np.ndarray,
    energies: np.ndarray,
    eps: float,
    L: int,
    X: float,
    window: tuple[float, float],
    n_realizations: int = 1,
) -> np.ndarray:
    """Lorentzian-smoothed finite-volume density at `energies`.

    Eigenvalues outside `window` are replaced by a flat continuation at the
    mean in-window density, so points near the window edges are not biased
    low.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if len(eigenvalues) and isinstance(eigenvalues[0], Eigenvalue):
        weights = np.array([e.multiplicity for e in eigenvalues], dtype=float)
        positions = np.array([e.energy for e in eigenvalues])
    else:
        positions = np.asarray(eigenvalues, dtype=float)
        weights = np.ones_like(positions)
    lo, hi = window
    norm = 2 * L * X * n_realizations
    energies = np.asarray(energies, dtype=float)
    kernel = eps / np.pi / ((energies[:, None] - positions[None, :]) ** 2 + eps**2)
    inside = kernel @ weights / norm
    flat = weights.sum() / (norm * (hi - lo))
    outside_mass = 1 - (
        np.arctan((hi - energies) / eps) - np.arctan((lo - energies) / eps)
    ) / np.pi
    return inside + flat * outside_mass
