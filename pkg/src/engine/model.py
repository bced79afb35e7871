"""Random ensemble of point-scatterer and profile disorder on the lattice ℤ + s.

Cell j covers [j - 1 - s, j - s). Inside it the smooth potential is
Σ_k λ_{j,k} W_k(x + s - j + 1) with piecewise-constant profiles W_k on
[0, 1); at its right end x_j = j - s sits the jump e^{J V_j}. The origin of
a realization is x₀ = -s, the left edge of cell 1; cells with index <= 0
describe the left half-line.
"""

import logging
from typing import Literal, NamedTuple

import numpy as np
from pydantic import BaseModel, Field, PrivateAttr, model_validator

from .algebra import (
    matrix_exponential,
    sample_lie_element,
    structure_constants,
    trs_defect_of,
)
from .exceptions import StructureError

logger = logging.getLogger("engine.model")

BLOCK_SIZE = 1024
STRUCTURE_TOL = 1e-12

_TAG_LAMBDA = 1
_TAG_POTENTIAL = 2
_TAG_OFFSET = 3

ComplexEntry = tuple[float, float]


def matrix_from_entries(entries: list[ComplexEntry], L: int) -> np.ndarray:
    """2L×2L matrix from a row-major list of [re, im] pairs."""
    n = 2 * L
    if len(entries) != n * n:
        raise ValueError(f"expected {n * n} [re, im] entries, got {len(entries)}")
    flat = np.asarray(entries, dtype=float)
    return (flat[:, 0] + 1j * flat[:, 1]).reshape(n, n)


def entries_from_matrix(W: np.ndarray) -> list[ComplexEntry]:
    return [(float(w.real), float(w.imag)) for w in np.asarray(W).ravel()]


def _check_potential_value(W: np.ndarray, time_reversal: bool, where: str):
    if time_reversal:
        defect = trs_defect_of(W)
    else:
        defect = float(np.linalg.norm(W - W.conj().T))
    if defect > STRUCTURE_TOL:
        kind = "time-reversal" if time_reversal else "hermiticity"
        raise ValueError(f"{where}: {kind} defect {defect:.2e}")


class PotentialProfile(BaseModel):
    """Piecewise-constant profile on [0, 1)."""

    values: list[list[ComplexEntry]]
    widths: list[float]

    @model_validator(mode="after")
    def _check_pieces(self) -> "PotentialProfile":
        if len(self.values) != len(self.widths) or not self.widths:
            raise ValueError("profile needs one value per width")
        if any(w <= 0 for w in self.widths):
            raise ValueError("profile widths must be positive")
        if abs(sum(self.widths) - 1.0) > 1e-12:
            raise ValueError(f"profile widths sum to {sum(self.widths)}, not 1")
        return self

    def matrices(self, L: int) -> np.ndarray:
        return np.stack([matrix_from_entries(v, L) for v in self.values])

    def edges(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.widths)])


class LambdaDistribution(BaseModel):
    """Law of the coupling vector λ ∈ ℝ^K."""

    kind: Literal["uniform", "gaussian", "atoms"] = "uniform"
    low: float = -1.0
    high: float = 1.0
    mean: float = 0.0
    std: float = Field(1.0, ge=0)
    atoms: list[list[float]] = []
    weights: list[float] | None = None

    @model_validator(mode="after")
    def _check_law(self) -> "LambdaDistribution":
        if self.kind == "uniform" and not self.low < self.high:
            raise ValueError(f"uniform law needs low < high ({self.low}, {self.high})")
        if self.kind == "atoms":
            _check_atoms(len(self.atoms), self.weights)
        return self

    def sample(self, rng: np.random.Generator, size: int, K: int) -> np.ndarray:
        if K == 0:
            return np.zeros((size, 0))
        if self.kind == "uniform":
            return rng.uniform(self.low, self.high, size=(size, K))
        if self.kind == "gaussian":
            return rng.normal(self.mean, self.std, size=(size, K))
        index = rng.choice(len(self.atoms), size=size, p=_probabilities(self))
        return np.asarray(self.atoms, dtype=float)[index]


class PotentialDistribution(BaseModel):
    """Law of the singular potential V."""

    kind: Literal["zero", "atoms", "gaussian"] = "zero"
    scale: float = Field(0.0, ge=0)
    truncate: bool = False
    atoms: list[list[ComplexEntry]] = []
    weights: list[float] | None = None

    @model_validator(mode="after")
    def _check_law(self) -> "PotentialDistribution":
        if self.kind == "atoms":
            _check_atoms(len(self.atoms), self.weights)
        return self

    def atom_matrices(self, L: int) -> np.ndarray:
        return np.stack([matrix_from_entries(a, L) for a in self.atoms])

    def sample(
        self,
        rng: np.random.Generator,
        size: int,
        L: int,
        time_reversal: bool = True,
    ) -> np.ndarray:
        n = 2 * L
        if self.kind == "zero":
            return np.zeros((size, n, n), dtype=complex)
        if self.kind == "atoms":
            index = rng.choice(len(self.atoms), size=size, p=_probabilities(self))
            return self.atom_matrices(L)[index]
        return sample_lie_element(
            rng,
            L,
            self.scale,
            truncate=4.0 if self.truncate else None,
            time_reversal=time_reversal,
            size=size,
        )


def _check_atoms(n_atoms: int, weights: list[float] | None):
    if n_atoms == 0:
        raise ValueError("atom law needs at least one atom")
    if weights is not None:
        if len(weights) != n_atoms:
            raise ValueError(f"{len(weights)} weights for {n_atoms} atoms")
        if any(w < 0 for w in weights) or sum(weights) <= 0:
            raise ValueError("atom weights must be non-negative, not all zero")


def _probabilities(law: LambdaDistribution | PotentialDistribution):
    if law.weights is None:
        return None
    weights = np.asarray(law.weights, dtype=float)
    return weights / weights.sum()


class CellGrid(NamedTuple):
    """Merged piece grid of all profiles on [0, 1).

    `values[k, p]` is profile k on piece p.
    """

    widths: np.ndarray
    edges: np.ndarray
    values: np.ndarray


class DisorderConfig(BaseModel):
    """Ensemble definition, serialized as JSON."""

    L: int = Field(ge=1, le=8)
    K: int = Field(0, ge=0)
    profiles: list[PotentialProfile] = []
    lambda_dist: LambdaDistribution = LambdaDistribution()
    v_dist: PotentialDistribution = PotentialDistribution()
    seed: int = Field(0, ge=0, lt=2**64)
    fix_offset: bool = False
    time_reversal: bool = True

    _grid: CellGrid | None = PrivateAttr(default=None)

    @model_validator(mode="after")
    def _check_structure(self) -> "DisorderConfig":
        if len(self.profiles) != self.K:
            raise ValueError(f"K = {self.K} but {len(self.profiles)} profiles given")
        for k, profile in enumerate(self.profiles):
            for p, W in enumerate(profile.matrices(self.L)):
                _check_potential_value(
                    W, self.time_reversal, f"profiles[{k}].values[{p}]"
                )
        if self.K and self.lambda_dist.kind == "atoms":
            for atom in self.lambda_dist.atoms:
                if len(atom) != self.K:
                    raise ValueError(f"lambda atom {atom} has length != K = {self.K}")
        if self.v_dist.kind == "atoms":
            for i, V in enumerate(self.v_dist.atom_matrices(self.L)):
                _check_potential_value(
                    V, self.time_reversal, f"v_dist.atoms[{i}]"
                )
        return self


def cell_grid(config: DisorderConfig) -> CellGrid:
    """Common refinement of the profile piece grids (cached on the config)."""
    if config._grid is not None:
        return config._grid
    n = 2 * config.L
    if config.K == 0:
        grid = CellGrid(
            np.ones(1), np.array([0.0, 1.0]), np.zeros((0, 1, n, n), complex)
        )
    else:
        breaks = np.unique(np.concatenate([p.edges() for p in config.profiles]))
        keep = np.concatenate([[True], np.diff(breaks) > 1e-12])
        edges = breaks[keep]
        edges[-1] = 1.0
        midpoints = (edges[:-1] + edges[1:]) / 2
        values = np.empty((config.K, len(midpoints), n, n), dtype=complex)
        for k, profile in enumerate(config.profiles):
            index = np.searchsorted(profile.edges(), midpoints, side="right") - 1
            values[k] = profile.matrices(config.L)[index]
        grid = CellGrid(np.diff(edges), edges, values)
    config._grid = grid
    return grid


class Realization(NamedTuple):
    """Cells first_cell .. first_cell + n - 1 of one disorder sample.

    `jumps` holds e^{J V_j}; `offset` is s.
    """

    first_cell: int
    lambdas: np.ndarray
    potentials: np.ndarray
    jumps: np.ndarray
    offset: float

    @property
    def n_cells(self) -> int:
        return len(self.potentials)

    @property
    def last_cell(self) -> int:
        return self.first_cell + self.n_cells - 1

    @property
    def origin(self) -> float:
        return -self.offset

    def left_edge(self, cell: int) -> float:
        return cell - 1 - self.offset

    def cell_of(self, x: float) -> int:
        u = x + self.offset
        nearest = round(u)
        if abs(u - nearest) <= 1e-12 * max(1.0, abs(u)):
            # cell boundaries are hit up to roundoff in x + s
            return int(nearest) + 1
        return int(np.floor(u)) + 1

    def cells(self, first: int, last: int) -> "Realization":
        """Sub-realization with cells first..last (inclusive)."""
        if first < self.first_cell or last > self.last_cell or last < first:
            raise StructureError(
                f"cells {first}..{last} outside "
                f"{self.first_cell}..{self.last_cell}"
            )
        i, j = first - self.first_cell, last - self.first_cell + 1
        return Realization(
            first,
            self.lambdas[i:j],
            self.potentials[i:j],
            self.jumps[i:j],
            self.offset,
        )

    def piece_values(self, config: DisorderConfig) -> np.ndarray:
        """Smooth potential per cell and piece, shape (n, P, 2L, 2L)."""
        grid = cell_grid(config)
        if config.K == 0:
            n = 2 * config.L
            return np.zeros((self.n_cells, len(grid.widths), n, n), complex)
        return np.einsum("jk,kpab->jpab", self.lambdas, grid.values)


def _zigzag(block: int) -> int:
    return 2 * block if block >= 0 else -2 * block - 1


def _block_rng(seed: int, tag: int, block: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence([seed, tag, _zigzag(block)])
    )


def _sample_block(config: DisorderConfig, seed: int, block: int):
    lambdas = config.lambda_dist.sample(
        _block_rng(seed, _TAG_LAMBDA, block), BLOCK_SIZE, config.K
    )
    potentials = config.v_dist.sample(
        _block_rng(seed, _TAG_POTENTIAL, block),
        BLOCK_SIZE,
        config.L,
        config.time_reversal,
    )
    return lambdas, potentials


def sample_offset(config: DisorderConfig, seed: int | None = None) -> float:
    if config.fix_offset:
        return 0.0
    seed = config.seed if seed is None else seed
    return float(_block_rng(seed, _TAG_OFFSET, 0).uniform())


def iter_realization_blocks(
    config: DisorderConfig,
    n_cells: int,
    seed: int | None = None,
    first_cell: int = 1,
):
    """Yield consecutive sub-realizations aligned to sampling blocks."""
    seed = config.seed if seed is None else seed
    offset = sample_offset(config, seed)
    J = structure_constants(config.L).J
    cell, last = first_cell, first_cell + n_cells - 1
    while cell <= last:
        block = (cell - 1) // BLOCK_SIZE
        start = (cell - 1) - block * BLOCK_SIZE
        stop = min(BLOCK_SIZE, start + last - cell + 1)
        lambdas, potentials = _sample_block(config, seed, block)
        potentials = potentials[start:stop]
        yield Realization(
            cell,
            lambdas[start:stop],
            potentials,
            matrix_exponential(J @ potentials),
            offset,
        )
        cell += stop - start


def sample_realization(
    config: DisorderConfig,
    n_cells: int,
    seed: int | None = None,
    first_cell: int = 1,
) -> Realization:
    """Cells first_cell .. first_cell + n_cells - 1 of the sample `seed`.

    Every cell depends only on (seed, cell index), so overlapping requests
    agree cell by cell.
    """
    if n_cells < 1:
        raise ValueError(f"n_cells must be positive, got {n_cells}")
    parts = list(iter_realization_blocks(config, n_cells, seed, first_cell))
    return Realization(
        first_cell,
        np.concatenate([p.lambdas for p in parts]),
        np.concatenate([p.potentials for p in parts]),
        np.concatenate([p.jumps for p in parts]),
        parts[0].offset,
    )


def sample_two_sided(
    config: DisorderConfig, n_cells: int, seed: int | None = None
) -> Realization:
    """n_cells on each side of the origin (cells -n+1 .. n)."""
    return sample_realization(config, 2 * n_cells, seed, first_cell=1 - n_cells)


def potential_at(
    realization: Realization, config: DisorderConfig, x: float
) -> np.ndarray:
    """Smooth part of the potential at x (jumps live in the transfer module)."""
    j = realization.cell_of(x)
    if not realization.first_cell <= j <= realization.last_cell:
        raise ValueError(
            f"x = {x} outside realization coverage "
            f"[{realization.left_edge(realization.first_cell)}, "
            f"{realization.left_edge(realization.last_cell + 1)})"
        )
    n = 2 * config.L
    if config.K == 0:
        return np.zeros((n, n), dtype=complex)
    grid = cell_grid(config)
    local = x + realization.offset - j + 1
    piece = int(np.searchsorted(grid.edges, local, side="right")) - 1
    piece = min(max(piece, 0), len(grid.widths) - 1)
    lambdas = realization.lambdas[j - realization.first_cell]
    return np.tensordot(lambdas, grid.values[:, piece], axes=1)


def _coupled_block(L: int) -> np.ndarray:
    """Deterministic time-reversal symmetric profile value coupling all
    channels."""
    P = np.diag([0.5 * (-1) ** j * (j + 1) / L for j in range(L)]).astype(complex)
    R = np.zeros((L, L), dtype=complex)
    for j in range(L - 1):
        P[j, j + 1] = 0.3 + 0.2j
        P[j + 1, j] = 0.3 - 0.2j
    for j in range(L):
        for k in range(j + 1, L):
            R[j, k] = 0.4 + 0.1j * (k - j)
            R[k, j] = -R[j, k]
    return np.block([[P, R], [R.conj().T, P.conj()]])


def _single_piece(W: np.ndarray) -> PotentialProfile:
    return PotentialProfile(values=[entries_from_matrix(W)], widths=[1.0])


def gapped_value(L: int = 2, mass: float = 1.0) -> np.ndarray:
    """Mass term anticommuting with J; spectrum has the gap (-mass, mass)."""
    if L != 2:
        raise ValueError("the gapped reference model is defined for L = 2")
    sigma_y = np.array([[0, -1j], [1j, 0]])
    zero = np.zeros((2, 2))
    return mass * np.block([[sigma_y, zero], [zero, -sigma_y]])


def _free(L: int, seed: int) -> DisorderConfig:
    return DisorderConfig(L=L, seed=seed, fix_offset=True)


def _coupled(L: int, seed: int) -> DisorderConfig:
    return DisorderConfig(
        L=L,
        K=1,
        profiles=[_single_piece(_coupled_block(L))],
        lambda_dist=LambdaDistribution(kind="uniform", low=-1.0, high=1.0),
        v_dist=PotentialDistribution(kind="gaussian", scale=0.5),
        seed=seed,
    )


def _gapped(seed: int) -> DisorderConfig:
    return DisorderConfig(
        L=2,
        K=1,
        profiles=[_single_piece(gapped_value())],
        lambda_dist=LambdaDistribution(kind="atoms", atoms=[[1.0]]),
        seed=seed,
        fix_offset=True,
    )


def _abelian(seed: int) -> DisorderConfig:
    P = np.diag([1.0, -0.5]).astype(complex)
    W = np.block([[P, np.zeros((2, 2))], [np.zeros((2, 2)), P]])
    return DisorderConfig(
        L=2,
        K=1,
        profiles=[_single_piece(W)],
        lambda_dist=LambdaDistribution(kind="uniform", low=-1.0, high=1.0),
        seed=seed,
    )


REFERENCE_ENSEMBLES = {
    "free-l1": lambda seed: _free(1, seed),
    "free-l2": lambda seed: _free(2, seed),
    "free-l3": lambda seed: _free(3, seed),
    "coupled-l2": lambda seed: _coupled(2, seed),
    "coupled-l3": lambda seed: _coupled(3, seed),
    "gapped-l2": _gapped,
    "abelian-l2": _abelian,
}


def reference_config(name: str, seed: int = 0) -> DisorderConfig:
    if name not in REFERENCE_ENSEMBLES:
        raise KeyError(f"Reference ensemble '{name}' not defined")
    return REFERENCE_ENSEMBLES[name](seed)
