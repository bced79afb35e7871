"""Transfer matrices of the Dirac equation in propagator form.

The propagator solves ∂T = J(W - z)T, i.e. ∂T = J⁻¹(z - W)T. Every constant
profile piece of width w contributes exp(w J(W_p - z)) exactly; the jump
e^{JV_j} at the right end of cell j is applied right-continuously, so
T(x_j, ·) already contains it.
"""

import logging
from collections.abc import Iterator
from typing import NamedTuple

import numpy as np

from .algebra import matrix_exponential, structure_constants
from .exceptions import StructureError, TransferOverflowError
from .model import (
    DisorderConfig,
    Realization,
    cell_grid,
    iter_realization_blocks,
)

logger = logging.getLogger("engine.transfer")

OVERFLOW_NORM = 1e100
SPAN_TOL = 1e-12
GL_NODES = 8


class TransferMatrix(NamedTuple):
    """T^z(x, y) with span = (y, x)."""

    M: np.ndarray
    z: complex
    span: tuple[float, float]


def identity_transfer(L: int, z: complex, at: float = 0.0) -> TransferMatrix:
    return TransferMatrix(np.eye(2 * L, dtype=complex), complex(z), (at, at))


def _check_energy(z: complex) -> complex:
    z = complex(z)
    if not np.isfinite(z):
        raise ValueError(f"energy must be finite, got {z}")
    return z


def piece_generators(
    piece_values: np.ndarray, widths: np.ndarray, z: complex
) -> np.ndarray:
    """w_p J(W_p - z) for a stack of piece values (..., P, 2L, 2L)."""
    n = piece_values.shape[-1]
    J = structure_constants(n // 2).J
    shifted = piece_values - z * np.eye(n)
    return widths[:, None, None] * (J @ shifted)


def _ordered_product(stack: np.ndarray) -> np.ndarray:
    """stack[..., -1] @ ... @ stack[..., 0] along the piece axis (-3)."""
    result = stack[..., 0, :, :]
    for p in range(1, stack.shape[-3]):
        result = stack[..., p, :, :] @ result
    return result


def cell_propagators(
    realization: Realization, config: DisorderConfig, z: complex
) -> np.ndarray:
    """Stack (n, 2L, 2L) of propagators across each cell of the realization,
    jump included."""
    z = _check_energy(z)
    grid = cell_grid(config)
    generators = piece_generators(realization.piece_values(config), grid.widths, z)
    smooth = _ordered_product(matrix_exponential(generators))
    return realization.jumps @ smooth


def cell_propagator(
    cell: tuple[np.ndarray, np.ndarray],
    config: DisorderConfig,
    z: complex,
    start: float = 0.0,
) -> TransferMatrix:
    """Propagator across one unit cell given its (λ, V).

    The cell is taken to start at `start`; the result spans (start, start + 1).
    """
    lambdas, V = cell
    lambdas = np.asarray(lambdas, dtype=float).reshape(1, config.K)
    V = np.asarray(V, dtype=complex)
    J = structure_constants(config.L).J
    single = Realization(
        1, lambdas, V[None], matrix_exponential(J @ V)[None], 0.0
    )
    M = cell_propagators(single, config, z)[0]
    return TransferMatrix(M, complex(z), (start, start + 1.0))


def compose(T1: TransferMatrix, T2: TransferMatrix) -> TransferMatrix:
    """T1·T2, where T2 runs first."""
    if T1.z != T2.z:
        raise StructureError(f"energy mismatch: {T1.z} vs {T2.z}")
    if abs(T1.span[0] - T2.span[1]) > SPAN_TOL * (1 + abs(T2.span[1])):
        raise StructureError(
            f"span mismatch: T1 starts at {T1.span[0]}, T2 ends at {T2.span[1]}"
        )
    return TransferMatrix(T1.M @ T2.M, T1.z, (T2.span[0], T1.span[1]))


def _accumulate(stack: np.ndarray, start: np.ndarray, first_cell: int):
    T = start
    for i, cell in enumerate(stack):
        T = cell @ T
        norm = np.linalg.norm(T)
        if not np.isfinite(norm) or norm > OVERFLOW_NORM:
            raise TransferOverflowError(first_cell + i)
    return T


def transfer(
    realization: Realization,
    config: DisorderConfig,
    z: complex,
    n_cells: int | None = None,
) -> TransferMatrix:
    """Ordered product over the first n_cells cells of the realization."""
    z = _check_energy(z)
    n_cells = realization.n_cells if n_cells is None else n_cells
    if not 0 <= n_cells <= realization.n_cells:
        raise ValueError(
            f"n_cells = {n_cells} outside [0, {realization.n_cells}]"
        )
    start = realization.left_edge(realization.first_cell)
    if n_cells == 0:
        return identity_transfer(config.L, z, start)
    sub = realization.cells(
        realization.first_cell, realization.first_cell + n_cells - 1
    )
    M = _accumulate(
        cell_propagators(sub, config, z),
        np.eye(2 * config.L, dtype=complex),
        realization.first_cell,
    )
    return TransferMatrix(M, z, (start, realization.left_edge(sub.last_cell + 1)))


def stream_propagators(
    config: DisorderConfig,
    z: complex,
    n_cells: int,
    first_cell: int = 1,
    seed: int | None = None,
) -> Iterator[np.ndarray]:
    """Cell propagator stacks, one per sampling block, without materializing
    the whole realization."""
    for part in iter_realization_blocks(config, n_cells, seed, first_cell):
        yield cell_propagators(part, config, z)


def _partial_cell(
    piece_values: np.ndarray,
    config: DisorderConfig,
    z: complex,
    t0: float,
    t1: float,
) -> np.ndarray:
    """Smooth propagation inside one cell from local position t0 to t1."""
    grid = cell_grid(config)
    lo = np.clip(grid.edges[:-1], t0, t1)
    hi = np.clip(grid.edges[1:], t0, t1)
    widths = hi - lo
    T = np.eye(2 * config.L, dtype=complex)
    if not np.any(widths > 0):
        return T
    factors = matrix_exponential(piece_generators(piece_values, widths, z))
    for p in np.flatnonzero(widths > 0):
        T = factors[p] @ T
    return T


class TransferProvider:
    """x, z ↦ T^z(x, x₀) for a two-sided realization, x₀ the origin.

    For x < x₀ the matrix is T^z(x₀, x)⁻¹. The jump sitting at x₀ belongs to
    the left half-line; `include_origin_jump=False` leaves it out, which is
    what a propagator started just before x₀ needs.
    """

    def __init__(
        self,
        realization: Realization,
        config: DisorderConfig,
        include_origin_jump: bool = True,
    ):
        if not realization.first_cell <= 1 <= realization.last_cell + 1:
            raise StructureError(
                "realization must reach the origin: cells "
                f"{realization.first_cell}..{realization.last_cell}"
            )
        self.realization = realization
        self.config = config
        self.include_origin_jump = include_origin_jump
        self._J = structure_constants(config.L).J
        self._cache: dict[complex, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}

    def _tables(self, z: complex):
        """Prefix products to the right of x₀ and suffix products to its left."""
        if z in self._cache:
            return self._cache[z]
        real = self.realization
        stack = cell_propagators(real, self.config, z)
        pieces = real.piece_values(self.config)
        if not self.include_origin_jump and real.first_cell <= 0 <= real.last_cell:
            i0 = -real.first_cell
            smooth = _partial_cell(pieces[i0], self.config, z, 0.0, 1.0)
            stack = stack.copy()
            stack[i0] = smooth
        n = 2 * self.config.L
        right = [np.eye(n, dtype=complex)]
        for j in range(max(real.first_cell, 1), real.last_cell + 1):
            right.append(stack[j - real.first_cell] @ right[-1])
        # left[k] = T(x₀, left edge of cell 1 - k)
        left = [np.eye(n, dtype=complex)]
        for j in range(min(real.last_cell, 0), real.first_cell - 1, -1):
            left.append(left[-1] @ stack[j - real.first_cell])
        self._cache[z] = (np.array(right), np.array(left), pieces)
        return self._cache[z]

    def _forward(self, x: float, z: complex) -> np.ndarray:
        """T^z(x, x₀) for x >= x₀."""
        real = self.realization
        right, _, pieces = self._tables(z)
        j = real.cell_of(x)
        t = x - real.left_edge(j)
        full = right[j - 1]
        if t == 0.0:
            return full
        partial = _partial_cell(pieces[j - real.first_cell], self.config, z, 0.0, t)
        return partial @ full

    def _backward(self, x: float, z: complex) -> np.ndarray:
        """T^z(x₀, x) for x < x₀."""
        real = self.realization
        _, left, pieces = self._tables(z)
        j = real.cell_of(x)
        t = x - real.left_edge(j)
        if t == 0.0:
            return left[1 - j]
        rest = _partial_cell(pieces[j - real.first_cell], self.config, z, t, 1.0)
        if j != 0 or self.include_origin_jump:
            rest = real.jumps[j - real.first_cell] @ rest
        return left[-j] @ rest

    def __call__(self, x: float, z: complex) -> np.ndarray:
        z = _check_energy(z)
        real = self.realization
        lo = real.left_edge(real.first_cell)
        hi = real.left_edge(real.last_cell + 1)
        if not lo <= x <= hi:
            raise ValueError(f"x = {x} outside covered range [{lo}, {hi}]")
        if x >= real.origin:
            if x == hi:
                return self._tables(z)[0][-1]
            return self._forward(x, z)
        inverse = self._backward(x, np.conj(z))
        return self._J.conj().T @ inverse.conj().T @ self._J


def inverse_via_symmetry(companion: TransferMatrix) -> TransferMatrix:
    """(T^z)⁻¹ = J*(T^{z̄})*J from the companion T^{z̄} over the same span."""
    J = structure_constants(companion.M.shape[0] // 2).J
    M = J.conj().T @ companion.M.conj().T @ J
    y, x = companion.span
    return TransferMatrix(M, np.conj(companion.z), (x, y))


def trs_defect(T: TransferMatrix, T_conj: TransferMatrix) -> float:
    """‖J* conj(T^z) J − T^{z̄}‖_F."""
    J = structure_constants(T.M.shape[0] // 2).J
    return float(np.linalg.norm(J.conj().T @ T.M.conj() @ J - T_conj.M))


def symplectic_defect(T: TransferMatrix | np.ndarray) -> float:
    """‖T*JT − J‖ / ‖T‖²."""
    M = T.M if isinstance(T, TransferMatrix) else np.asarray(T)
    J = structure_constants(M.shape[0] // 2).J
    return float(np.linalg.norm(M.conj().T @ J @ M - J) / np.linalg.norm(M, 2) ** 2)


def _gram_pass(
    realization: Realization,
    config: DisorderConfig,
    z: complex,
    zeta: complex,
    n_cells: int,
    level: int,
    n_nodes: int,
):
    grid = cell_grid(config)
    n = 2 * config.L
    nodes, weights = np.polynomial.legendre.leggauss(n_nodes)
    nodes, weights = (nodes + 1) / 2, weights / 2
    Tz = np.eye(n, dtype=complex)
    Tw = np.eye(n, dtype=complex)
    gram = np.zeros((n, n), dtype=complex)
    sub = 2**level
    pieces = realization.piece_values(config)
    for i in range(n_cells):
        for p, width in enumerate(grid.widths):
            h = width / sub
            Gz = piece_generators(pieces[i, p][None], np.array([h]), z)[0]
            Gw = piece_generators(pieces[i, p][None], np.array([h]), zeta)[0]
            Ez = matrix_exponential(nodes[:, None, None] * Gz)
            Ew = matrix_exponential(nodes[:, None, None] * Gw)
            step_z = matrix_exponential(Gz)
            step_w = matrix_exponential(Gw)
            for _ in range(sub):
                at_z = Ez @ Tz
                at_w = Ew @ Tw
                gram += h * np.einsum(
                    "k,kba,kbc->ac", weights, at_z.conj(), at_w
                )
                Tz = step_z @ Tz
                Tw = step_w @ Tw
        Tz = realization.jumps[i] @ Tz
        Tw = realization.jumps[i] @ Tw
    return gram, Tz, Tw


def gram_integral(
    realization: Realization,
    config: DisorderConfig,
    z: complex,
    zeta: complex,
    n_cells: int,
    rtol: float = 1e-13,
    max_level: int = 4,
    n_nodes: int = GL_NODES,
):
    """∫ T^z(x)* T^ζ(x) dx over the first n_cells cells.

    Gauss-Legendre nodes on every piece, halving the sub-pieces until two
    successive levels agree. Returns (integral, T^z, T^ζ) at the right end.
    """
    if not 0 < n_cells <= realization.n_cells:
        raise ValueError(f"n_cells = {n_cells} outside [1, {realization.n_cells}]")
    previous = None
    for level in range(max_level + 1):
        gram, Tz, Tw = _gram_pass(
            realization, config, z, zeta, n_cells, level, n_nodes
        )
        if previous is not None:
            change = np.linalg.norm(gram - previous)
            if change <= rtol * max(np.linalg.norm(gram), 1.0):
                break
        previous = gram
    else:
        logger.debug("gram integral stopped at level %d", max_level)
    return gram, Tz, Tw


def wronskian_defect(
    realization: Realization,
    config: DisorderConfig,
    z: complex,
    zeta: complex,
    n_cells: int,
) -> float:
    """‖T^z* J T^ζ − J − (ζ − z̄)∫T^z*T^ζ‖_F at the right end of n_cells."""
    gram, Tz, Tw = gram_integral(realization, config, z, zeta, n_cells)
    J = structure_constants(config.L).J
    defect = Tz.conj().T @ J @ Tw - J - (zeta - np.conj(z)) * gram
    return float(np.linalg.norm(defect))
