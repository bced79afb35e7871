"""Structured linear algebra for SO*(2L) and its conjugated form.

Matrices act on 2L-component vectors split into two L-blocks. J is the
symplectic form [[0, -1], [1, 0]] in those blocks. Transfer matrices at real
energy live in SO*(2L) = {M*JM = J, MᵗM = 1}; conjugating with the Cayley
basis change gives the equivalent group {M*JM = J, MᵗSM = S} in which the
KDU (polar-type) decomposition is built.
"""

import logging
from functools import lru_cache
from typing import Literal, NamedTuple

import numpy as np
import scipy.linalg

from .exceptions import SingularityError, StructureError

logger = logging.getLogger("engine.algebra")

Representation = Literal["original", "conjugated"]

# Relative gap under which eigenvalues of M*M count as one Kramers cluster.
KDU_GROUPING_TOL = 1e-8
CAYLEY_TOL = 1e-8


class StructureConstants(NamedTuple):
    """Fixed matrices of the 2L-dimensional problem."""

    L: int
    J: np.ndarray
    A_cayley: np.ndarray
    S: np.ndarray


class MembershipReport(NamedTuple):
    wronskian_defect: float
    orthogonality_defect: float
    is_member: bool


class KDUDecomposition(NamedTuple):
    """M = K·D·U with K, U unitary group members and D positive diagonal.

    `a` holds a_1 >= ... >= a_d >= 1 where d = L // 2.
    """

    K: np.ndarray
    D: np.ndarray
    U: np.ndarray
    a: np.ndarray


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@lru_cache(maxsize=None)
def structure_constants(L: int) -> StructureConstants:
    if L < 1:
        raise ValueError(f"channel count must be positive, got {L}")
    eye = np.eye(L)
    zero = np.zeros((L, L))
    J = np.block([[zero, -eye], [eye, zero]]).astype(complex)

    d = L // 2
    I_d = np.eye(d)
    if L % 2 == 0:
        A = np.block([[I_d, I_d], [1j * I_d, -1j * I_d]]) / np.sqrt(2)
    else:
        A = np.zeros((L, L), dtype=complex)
        A[:d, :d] = I_d
        A[:d, d + 1 :] = I_d
        A[d, d] = np.sqrt(2)
        A[d + 1 :, :d] = 1j * I_d
        A[d + 1 :, d + 1 :] = -1j * I_d
        A /= np.sqrt(2)
    A_cayley = scipy.linalg.block_diag(A, A)
    S = A_cayley.T @ A_cayley
    # AᵗA is a real permutation-type matrix; drop the roundoff imaginary part
    S = np.round(S.real) + 0j
    return StructureConstants(L, _frozen(J), _frozen(A_cayley), _frozen(S))


def channel_count(M: np.ndarray) -> int:
    M = np.asarray(M)
    if M.ndim < 2 or M.shape[-1] != M.shape[-2] or M.shape[-1] % 2:
        raise StructureError(
            f"expected square matrices of even size, got shape {M.shape}"
        )
    return M.shape[-1] // 2


def to_conjugated_rep(M: np.ndarray) -> np.ndarray:
    A = structure_constants(channel_count(M)).A_cayley
    return A.conj().T @ M @ A


def to_original_rep(M: np.ndarray) -> np.ndarray:
    A = structure_constants(channel_count(M)).A_cayley
    return A @ M @ A.conj().T


def check_group_membership(
    M: np.ndarray, rep: Representation = "original", tol: float = 1e-10
) -> MembershipReport:
    """Frobenius defects of the two defining relations of the group."""
    M = np.asarray(M, dtype=complex)
    sc = structure_constants(channel_count(M))
    J = sc.J
    wronskian = np.linalg.norm(M.conj().T @ J @ M - J)
    if rep == "original":
        orthogonality = np.linalg.norm(M.T @ M - np.eye(2 * sc.L))
    elif rep == "conjugated":
        orthogonality = np.linalg.norm(M.T @ sc.S @ M - sc.S)
    else:
        raise ValueError(f"unknown representation '{rep}'")
    return MembershipReport(
        float(wronskian),
        float(orthogonality),
        bool(wronskian <= tol and orthogonality <= tol),
    )


def trs_defect_of(W: np.ndarray) -> float:
    """‖W − W*‖ + ‖J* conj(W) J − W‖ for a candidate potential value."""
    W = np.asarray(W, dtype=complex)
    J = structure_constants(channel_count(W)).J
    hermitian = np.linalg.norm(W - W.conj().T)
    reversal = np.linalg.norm(J.conj().T @ W.conj() @ J - W)
    return float(hermitian + reversal)


@lru_cache(maxsize=None)
def lie_basis(L: int) -> np.ndarray:
    """Real-orthonormal basis of {W hermitian : J* conj(W) J = W}.

    Returned as an array of shape (L(2L-1), 2L, 2L), computed as the
    nullspace of the linear constraint map on the 2n² real coordinates of
    W (n = 2L).
    """
    J = structure_constants(L).J
    n = 2 * L
    dim = 2 * n * n

    def constraints(W: np.ndarray) -> np.ndarray:
        parts = (W - W.conj().T, W - J.conj().T @ W.conj() @ J)
        flat = np.concatenate([p.ravel() for p in parts])
        return np.concatenate([flat.real, flat.imag])

    columns = []
    for k in range(dim):
        x = np.zeros(dim)
        x[k] = 1.0
        columns.append(constraints(_unflatten(x, n)))
    kernel = scipy.linalg.null_space(np.column_stack(columns), rcond=1e-10)

    if kernel.shape[1] != L * (2 * L - 1):
        raise StructureError(
            f"constraint nullspace has dimension {kernel.shape[1]}, "
            f"expected {L * (2 * L - 1)}"
        )
    basis = np.stack([_unflatten(kernel[:, k], n) for k in range(kernel.shape[1])])
    logger.debug("lie_basis(L=%d): %d elements", L, len(basis))
    return _frozen(basis)


def _unflatten(x: np.ndarray, n: int) -> np.ndarray:
    return (x[: n * n] + 1j * x[n * n :]).reshape(n, n)


@lru_cache(maxsize=None)
def hermitian_basis(L: int) -> np.ndarray:
    """Orthonormal basis of all hermitian 2L×2L matrices (no reversal)."""
    n = 2 * L
    basis = []
    for j in range(n):
        E = np.zeros((n, n), dtype=complex)
        E[j, j] = 1.0
        basis.append(E)
    for j in range(n):
        for k in range(j + 1, n):
            E = np.zeros((n, n), dtype=complex)
            E[j, k] = E[k, j] = 1 / np.sqrt(2)
            basis.append(E)
            E = np.zeros((n, n), dtype=complex)
            E[j, k] = -1j / np.sqrt(2)
            E[k, j] = 1j / np.sqrt(2)
            basis.append(E)
    return _frozen(np.stack(basis))


def sample_lie_element(
    rng: np.random.Generator,
    L: int,
    scale: float,
    truncate: float | None = None,
    time_reversal: bool = True,
    size: int | None = None,
) -> np.ndarray:
    """Gaussian element with standard deviation `scale` per coordinate.

    With `truncate` set, coordinates are redrawn until they lie within
    `truncate` standard deviations. With `time_reversal=False` the
    coordinates refer to `hermitian_basis` instead of `lie_basis`. A
    `size` returns a stack of independent draws.
    """
    if scale < 0:
        raise ValueError(f"scale must be non-negative, got {scale}")
    basis = lie_basis(L) if time_reversal else hermitian_basis(L)
    shape = (len(basis),) if size is None else (size, len(basis))
    coords = rng.standard_normal(shape)
    if truncate is not None:
        outside = np.abs(coords) > truncate
        while outside.any():
            coords[outside] = rng.standard_normal(int(outside.sum()))
            outside = np.abs(coords) > truncate
    return np.tensordot(scale * coords, basis, axes=1)


def matrix_exponential(X: np.ndarray) -> np.ndarray:
    """exp(X) by Padé-13 scaling and squaring; accepts stacks (..., n, n)."""
    X = np.asarray(X, dtype=complex)
    if not np.all(np.isfinite(X)):
        raise ValueError("matrix_exponential: non-finite input")
    return scipy.linalg.expm(X)


def cayley_transform_V(V: np.ndarray) -> np.ndarray:
    """V̂ = 2J(e^{JV} + 1)⁻¹(e^{JV} − 1)."""
    V = np.asarray(V, dtype=complex)
    sc = structure_constants(channel_count(V))
    jump = matrix_exponential(sc.J @ V)
    eigenvalues = np.linalg.eigvals(jump)
    worst = eigenvalues[np.argmin(np.abs(eigenvalues + 1))]
    if abs(worst + 1) < CAYLEY_TOL:
        raise SingularityError(
            f"e^(JV) has eigenvalue {worst:.6g} at -1; Cayley transform "
            "undefined",
            value=complex(worst),
        )
    eye = np.eye(2 * sc.L)
    return 2 * sc.J @ np.linalg.solve(jump + eye, jump - eye)


def kramers_partner(v: np.ndarray) -> np.ndarray:
    """θv = J S conj(v), the antiunitary pairing of the conjugated group."""
    sc = structure_constants(len(v) // 2)
    return sc.J @ sc.S @ np.conj(v)


def kdu_decompose(
    M: np.ndarray, tol: float = KDU_GROUPING_TOL
) -> KDUDecomposition:
    """Structured polar decomposition of a member of the conjugated group.

    Eigenvectors of M*M are collected into quadruples (v, S v̄, J v, J S v̄)
    whose eigenvalues are (a², a⁻², a⁻², a²); the quadruples form the
    columns of U* and D = diag(a, a⁻¹, a⁻¹, a) in the block pattern of the
    group (with a middle entry 1 per block for odd L).
    """
    M = np.asarray(M, dtype=complex)
    L = channel_count(M)
    scale = max(1.0, float(np.linalg.norm(M)) ** 2)
    membership = check_group_membership(M, "conjugated", tol=1e-8 * scale)
    if not membership.is_member:
        raise StructureError(
            "kdu_decompose needs a group member: defects "
            f"{membership.wronskian_defect:.2e}, "
            f"{membership.orthogonality_defect:.2e}"
        )
    sc = structure_constants(L)
    J, S = sc.J, sc.S
    d = L // 2

    P = M.conj().T @ M
    P = (P + P.conj().T) / 2
    eigenvalues, vectors = np.linalg.eigh(P)
    upper = eigenvalues > 1 + tol * np.maximum(1.0, eigenvalues)
    lower = eigenvalues < 1 - tol
    unit = ~(upper | lower)
    if upper.sum() != lower.sum() or upper.sum() % 2:
        raise StructureError(
            f"M*M spectrum not Kramers paired: {upper.sum()} above 1, "
            f"{lower.sum()} below 1"
        )

    v_list, a_list = _upper_pairs(P, vectors[:, upper])
    n_unit_pairs = d - len(v_list)
    w = _plus_i_space(J, vectors[:, unit])
    for i in range(n_unit_pairs):
        v_list.append((w[:, 2 * i] + S @ np.conj(w[:, 2 * i + 1])) / np.sqrt(2))
        a_list.append(1.0)

    first_block = list(v_list)
    if L % 2:
        # the leftover +i vector gives the S-conjugation fixed middle column
        middle = w[:, 2 * n_unit_pairs]
        first_block.append((middle + S @ np.conj(middle)) / np.sqrt(2))
    first_block += [S @ np.conj(v) for v in v_list]
    U_star = np.column_stack(first_block + [J @ c for c in first_block])

    a = np.asarray(a_list)
    middle_value = [1.0] if L % 2 else []
    block = np.concatenate([a, middle_value, 1 / a])
    D = np.diag(np.concatenate([block, 1 / block])).astype(complex)

    K = M @ U_star / np.diag(D)
    return KDUDecomposition(K, D, U_star.conj().T, a)


def _upper_pairs(
    P: np.ndarray, basis: np.ndarray
) -> tuple[list[np.ndarray], list[float]]:
    """Greedy (v, θv) extraction from the eigenspace with eigenvalues > 1."""
    v_list: list[np.ndarray] = []
    a_list: list[float] = []
    while basis.shape[1] >= 2:
        restricted = basis.conj().T @ P @ basis
        _, y = np.linalg.eigh((restricted + restricted.conj().T) / 2)
        v = basis @ y[:, -1]
        v /= np.linalg.norm(v)
        partner = kramers_partner(v)
        v_list.append(v)
        a_list.append(float(np.sqrt(np.real(v.conj() @ P @ v))))

        pair = np.column_stack([v, partner / np.linalg.norm(partner)])
        remainder = basis - pair @ (pair.conj().T @ basis)
        keep = basis.shape[1] - 2
        if keep == 0:
            break
        left, _, _ = np.linalg.svd(remainder, full_matrices=False)
        basis = left[:, :keep]
    return v_list, a_list


def _plus_i_space(J: np.ndarray, basis: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the +i eigenspace of J restricted to `basis`."""
    if basis.shape[1] == 0:
        return basis
    restricted = basis.conj().T @ (-1j * J) @ basis
    values, y = np.linalg.eigh((restricted + restricted.conj().T) / 2)
    return basis @ y[:, values > 0]


def exterior_power_norm(M: np.ndarray, p: int) -> float:
    """Operator norm of the 2p-th exterior power: product of the top 2p
    singular values, a_1²⋯a_p² for group members. 1 <= p <= L // 2."""
    M = np.asarray(M, dtype=complex)
    d = channel_count(M) // 2
    if not 1 <= p <= d:
        raise ValueError(f"p must lie in [1, {d}], got {p}")
    singular_values = np.linalg.svd(M, compute_uv=False)
    return float(np.prod(singular_values[: 2 * p]))
