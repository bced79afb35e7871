"""Weyl disks, Weyl-Titchmarsh matrices and their transport along x.

Planes are written as (1; ±M) with the upper L rows first. M₊ belongs to
solutions square integrable at +∞ and M₋ to those at -∞; both are
matrix-Herglotz (Im M / Im z > 0).
"""

import logging
import math
from typing import Literal, NamedTuple

import numpy as np
from scipy.integrate import solve_ivp

from .algebra import channel_count, matrix_exponential, structure_constants
from .exceptions import (
    ConvergenceError,
    DiskNotFormedError,
    LagrangianError,
    SingularityError,
    StructureError,
    TransportError,
)
from .model import DisorderConfig, Realization, cell_grid
from .transfer import (
    TransferMatrix,
    TransferProvider,
    _partial_cell,
    cell_propagators,
    piece_generators,
)

logger = logging.getLogger("engine.weyl")

Sign = Literal[1, -1]

DEFAULT_TOL = 1e-8
SINGULAR_TOL = 1e-12
LAGRANGIAN_TOL = 1e-10


class WeylDisk(NamedTuple):
    """Disk {S + R^{1/2} U (−R^{z̄})^{1/2} : U*U ≤ 1} at position x."""

    center: np.ndarray
    radius_plus: np.ndarray
    radius_minus: np.ndarray
    x: float
    z: complex


class MMatrix(NamedTuple):
    """Weyl-Titchmarsh matrix with the disk radius reached when it was
    computed (0 when it came from transport)."""

    M: np.ndarray
    sign: int
    z: complex
    radius: float = 0.0


class HerglotzReport(NamedTuple):
    min_eigenvalue: float
    residual: float | None


def _blocks(X: np.ndarray):
    L = X.shape[0] // 2
    return X[:L, :L], X[:L, L:], X[L:, :L], X[L:, L:]


def _plane(M: np.ndarray, sign: int) -> np.ndarray:
    L = M.shape[0]
    return np.vstack([np.eye(L, dtype=complex), sign * M])


def q_form(T: TransferMatrix | np.ndarray) -> np.ndarray:
    """Q = (1/i) T*JT."""
    M = T.M if isinstance(T, TransferMatrix) else np.asarray(T)
    J = structure_constants(M.shape[0] // 2).J
    Q = -1j * M.conj().T @ J @ M
    return (Q + Q.conj().T) / 2


def _radial(Q: np.ndarray, sign: int) -> np.ndarray:
    Q11 = _blocks(Q)[0]
    eigenvalues = np.linalg.eigvalsh(sign * Q11)
    if eigenvalues[0] <= 0:
        raise DiskNotFormedError(float(eigenvalues[0]))
    return np.linalg.inv(Q11)


def weyl_disk(
    Q: np.ndarray,
    Q_conj: np.ndarray,
    x: float = math.nan,
    z: complex = math.nan,
    sign: Sign = 1,
) -> WeylDisk:
    """Radial and center operators from Q^z and Q^{z̄}.

    For the right half-line (sign +1) the upper-left block of Q^z has to be
    positive definite; on the left half-line it is negative definite.
    """
    R = _radial(Q, sign)
    R_conj = _radial(Q_conj, -sign)
    center = R @ _blocks(Q)[1]
    return WeylDisk(center, R, -R_conj, x, complex(z))


def weyl_disk_at(
    realization: Realization,
    config: DisorderConfig,
    z: complex,
    x_cells: int,
    include_origin_jump: bool = True,
) -> WeylDisk:
    """Disk at the cell boundary x₀ + x_cells (negative: left half-line)."""
    provider = TransferProvider(realization, config, include_origin_jump)
    x = realization.origin + x_cells
    sign = 1 if x_cells > 0 else -1
    return weyl_disk(
        q_form(provider(x, z)),
        q_form(provider(x, np.conj(z))),
        x,
        z,
        sign,
    )


def _rescaled(T: np.ndarray, log_scale: float):
    norm = np.linalg.norm(T)
    if not np.isfinite(norm) or norm == 0:
        raise SingularityError("transfer product lost finiteness during disk limit")
    return T / norm, log_scale + math.log(norm)


def _log_radial_norm(Q: np.ndarray, sign: int, log_scale: float) -> float | None:
    try:
        R = _radial(Q, sign)
    except DiskNotFormedError:
        return None
    return math.log(np.linalg.norm(R, 2)) - 2 * log_scale


def _side_stacks(
    realization: Realization,
    config: DisorderConfig,
    z: complex,
    sign: int,
    n_cells: int,
    include_origin_jump: bool,
):
    """Per-step factors moving the disk point one cell away from x₀.

    For sign +1 they multiply T(x, x₀) from the left; for sign −1 they
    multiply T(x₀, y) at z̄ from the right, and T(y, x₀) = J*(T^{z̄}(x₀, y))*J.
    """
    if sign == 1:
        first, last = 1, min(realization.last_cell, n_cells)
        if last < first:
            return np.zeros((0, 2 * config.L, 2 * config.L))
        return cell_propagators(realization.cells(first, last), config, z)
    first = max(realization.first_cell, 1 - n_cells)
    if first > 0:
        return np.zeros((0, 2 * config.L, 2 * config.L))
    sub = realization.cells(first, 0)
    stack = cell_propagators(sub, config, z)
    if not include_origin_jump:
        stack = stack.copy()
        pieces = sub.piece_values(config)
        stack[-1] = _partial_cell(pieces[-1], config, z, 0.0, 1.0)
    return stack[::-1]


def m_matrix(
    realization: Realization,
    config: DisorderConfig,
    z: complex,
    sign: Sign,
    x_max: float | None = None,
    tol: float = DEFAULT_TOL,
    include_origin_jump: bool = True,
) -> MMatrix:
    """M^z_± at the origin x₀ from the limit of the disk centers.

    M₊ = −(lim S)⁻¹ as x → +∞ and M₋ = (lim S)⁻¹ as x → −∞. Iteration stops
    once the radius sqrt(‖R^z‖‖R^{z̄}‖) drops below tol·(1 + ‖S‖). Im z < 0
    is reduced to z̄ through (M^z)* = M^{z̄}. The jump at x₀ is part of the
    left half-line; `include_origin_jump=False` evaluates M₋ just before it.
    """
    z = complex(z)
    if z.imag == 0:
        raise ValueError("m_matrix needs Im z != 0")
    if sign not in (1, -1):
        raise ValueError(f"sign must be +1 or -1, got {sign}")
    if z.imag < 0:
        upper = m_matrix(
            realization, config, np.conj(z), sign, x_max, tol, include_origin_jump
        )
        return MMatrix(upper.M.conj().T, sign, z, upper.radius)

    x_max = 200.0 / z.imag if x_max is None else x_max
    n_cells = int(math.ceil(x_max))
    J = structure_constants(config.L).J
    steps_z = _side_stacks(realization, config, z, sign, n_cells, include_origin_jump)
    steps_c = _side_stacks(
        realization, config, np.conj(z), sign, n_cells, include_origin_jump
    )
    n = 2 * config.L
    A, B = np.eye(n, dtype=complex), np.eye(n, dtype=complex)
    log_a = log_b = 0.0
    radius = math.inf
    center = None
    for step_z, step_c in zip(steps_z, steps_c, strict=True):
        if sign == 1:
            A, log_a = _rescaled(step_z @ A, log_a)
            B, log_b = _rescaled(step_c @ B, log_b)
            Tz, Tc = A, B
        else:
            # A = T^{z̄}(x₀, y), B = T^{z}(x₀, y)
            A, log_a = _rescaled(A @ step_c, log_a)
            B, log_b = _rescaled(B @ step_z, log_b)
            Tz = J.conj().T @ A.conj().T @ J
            Tc = J.conj().T @ B.conj().T @ J
        Qz, Qc = q_form(Tz), q_form(Tc)
        log_rz = _log_radial_norm(Qz, sign, log_a)
        log_rc = _log_radial_norm(Qc, -sign, log_b)
        if log_rz is None or log_rc is None:
            continue
        center = np.linalg.inv(_blocks(Qz)[0]) @ _blocks(Qz)[1]
        log_radius = 0.5 * (log_rz + log_rc)
        radius = math.exp(log_radius)
        if log_radius < math.log(tol * (1 + np.linalg.norm(center, 2))):
            break
    else:
        raise ConvergenceError(
            f"disk did not converge within {len(steps_z)} cells "
            f"(x_max = {x_max:.4g}, coverage {realization.first_cell}.."
            f"{realization.last_cell})",
            radius,
        )

    M = -np.linalg.inv(center) if sign == 1 else np.linalg.inv(center)
    report = herglotz_defect(MMatrix(M, sign, z))
    if report.min_eigenvalue <= 0:
        raise TransportError(
            f"M limit is not Herglotz: min eigenvalue {report.min_eigenvalue:.3e}"
        )
    logger.debug("m_matrix sign %+d z=%s radius %.2e", sign, z, radius)
    return MMatrix(M, sign, z, radius)


def riccati_rhs(M: np.ndarray, W: np.ndarray, z: complex, sign: int) -> np.ndarray:
    """∂M from ±∂M = (1, ±M)(W − z)(1; ±M)."""
    W11, W12, W21, W22 = _blocks(W)
    eye = np.eye(M.shape[0])
    value = (
        (W11 - z * eye)
        + sign * (W12 @ M + M @ W21)
        + M @ (W22 - z * eye) @ M
    )
    return sign * value


def riccati_flow(
    M0: MMatrix,
    W: np.ndarray,
    z: complex,
    dx: float,
    rtol: float = 1e-11,
    atol: float = 1e-12,
) -> MMatrix:
    """Integrate the matrix Riccati equation through a constant piece W.

    dx may be negative; M₊ is stable when integrated backwards and M₋ when
    integrated forwards.
    """
    L = channel_count(W)
    sign = M0.sign

    def rhs(_, y):
        M = y.reshape(L, L)
        return riccati_rhs(M, W, z, sign).ravel()

    if dx == 0:
        return MMatrix(M0.M.copy(), sign, complex(z))
    solution = solve_ivp(
        rhs,
        (0.0, dx),
        np.asarray(M0.M, dtype=complex).ravel(),
        method="DOP853",
        rtol=rtol,
        atol=atol,
    )
    if not solution.success:
        raise SingularityError(f"Riccati integration failed: {solution.message}")
    M = solution.y[:, -1].reshape(L, L)
    result = MMatrix(M, sign, complex(z))
    if herglotz_defect(result).min_eigenvalue <= 0:
        raise SingularityError("Riccati flow left the Siegel half-space")
    return result


def transport_piece(
    M: np.ndarray,
    W: np.ndarray,
    z: complex,
    dx: float,
    sign: int,
) -> tuple[np.ndarray, complex]:
    """Exact transport of the plane (1; ±M) through a constant piece.

    Returns the new M and ln det α, where exp(dx·J(W − z))(1; ±M) = (α; ±M'α).
    """
    E = matrix_exponential(piece_generators(W[None], np.array([dx]), z)[0])
    return transport_plane(M, E, sign)


def transport_plane(
    M: np.ndarray, T: np.ndarray, sign: int
) -> tuple[np.ndarray, complex]:
    """Image of the plane (1; ±M) under T, as (M', ln det α) with
    T(1; ±M) = (1; ±M')α."""
    image = T @ _plane(M, sign)
    L = M.shape[0]
    alpha, beta = image[:L], image[L:]
    phase, log_abs = np.linalg.slogdet(alpha)
    if phase == 0 or not np.isfinite(log_abs):
        raise SingularityError("plane transport produced a singular α block")
    M_new = sign * np.linalg.solve(alpha.T, beta.T).T
    return M_new, complex(log_abs + 1j * np.angle(phase))


class OrbitPath(NamedTuple):
    """M₊ or M₋ carried along a realization in its stable direction.

    `boundary[i]` is M at the left edge of the i-th cell (after the jump
    sitting there), with one extra entry for the right end. `anchors[i, p]`
    is M at the start of piece p (sign −1) or at its end (sign +1).
    `log_alpha[i]` is ln det of the forward α-cocycle across cell i, jump
    included, summed from principal-branch factors.
    """

    boundary: np.ndarray
    anchors: np.ndarray
    log_alpha: np.ndarray
    sign: int
    z: complex

    def window(self, start: int, stop: int) -> "OrbitPath":
        """Cells start..stop-1 of the path."""
        return OrbitPath(
            self.boundary[start : stop + 1],
            self.anchors[start:stop],
            self.log_alpha[start:stop],
            self.sign,
            self.z,
        )


ORBIT_CHUNK = 1024


def _check_herglotz_along(M: np.ndarray, z: complex, cell: int):
    im_part = (M - M.conj().T) / (2j * z.imag)
    smallest = np.linalg.eigvalsh(im_part)[0]
    if smallest <= 0:
        raise TransportError(
            f"M lost the Herglotz property at cell {cell} "
            f"(min eigenvalue {smallest:.3e})"
        )


def orbit_path(
    realization: Realization,
    config: DisorderConfig,
    z: complex,
    sign: Sign,
    seed: np.ndarray | None = None,
) -> OrbitPath:
    """Transport M₋ forward from the left end or M₊ backward from the right
    end of the realization, starting from `seed` (default i·1).

    Seed error contracts geometrically, so the first cells of the transport
    direction should be discarded as warm-up.
    """
    z = complex(z)
    if z.imag <= 0:
        raise ValueError("orbit transport needs Im z > 0")
    L, n = config.L, realization.n_cells
    grid = cell_grid(config)
    P = len(grid.widths)
    J = structure_constants(L).J
    M = 1j * np.eye(L, dtype=complex) if seed is None else np.array(seed, complex)
    boundary = np.empty((n + 1, L, L), dtype=complex)
    anchors = np.empty((n, P, L, L), dtype=complex)
    log_alpha = np.empty(n, dtype=complex)

    chunks = range(0, n, ORBIT_CHUNK)
    for start in chunks if sign == -1 else reversed(chunks):
        stop = min(start + ORBIT_CHUNK, n)
        sub = realization.cells(
            realization.first_cell + start, realization.first_cell + stop - 1
        )
        generators = piece_generators(sub.piece_values(config), grid.widths, z)
        if sign == -1:
            pieces = matrix_exponential(generators)
            order = range(stop - start)
        else:
            pieces = matrix_exponential(-generators)
            jumps_inverse = J.conj().T @ np.swapaxes(sub.jumps.conj(), -1, -2) @ J
            order = reversed(range(stop - start))
        for local in order:
            i = start + local
            if sign == -1:
                boundary[i] = M
                total = 0j
                for p in range(P):
                    anchors[i, p] = M
                    M, log_det = transport_plane(M, pieces[local, p], -1)
                    total += log_det
                M, log_det = transport_plane(M, sub.jumps[local], -1)
                log_alpha[i] = total + log_det
            else:
                boundary[i + 1] = M
                M, log_det = transport_plane(M, jumps_inverse[local], 1)
                total = -log_det
                for p in reversed(range(P)):
                    anchors[i, p] = M
                    M, log_det = transport_plane(M, pieces[local, p], 1)
                    total -= log_det
                log_alpha[i] = total
            _check_herglotz_along(M, z, realization.first_cell + i)
    if sign == -1:
        boundary[n] = M
    else:
        boundary[0] = M
    return OrbitPath(boundary, anchors, log_alpha, sign, z)


def cell_quadrature(
    paths: list[OrbitPath],
    realization: Realization,
    config: DisorderConfig,
    integrand,
    n_nodes: int = 8,
) -> np.ndarray:
    """∫ integrand(M_a(x), M_b(x), ...) dx over every cell of the paths.

    M at the Gauss-Legendre nodes of each piece is obtained by exact plane
    transport from the piece anchors. `integrand` receives one (m, L, L)
    stack per path and returns an (m, ...) array.
    """
    grid = cell_grid(config)
    nodes, weights = np.polynomial.legendre.leggauss(n_nodes)
    nodes, weights = (nodes + 1) / 2, weights / 2
    z = paths[0].z
    L = config.L
    totals = None
    for start in range(0, realization.n_cells, ORBIT_CHUNK):
        stop = min(start + ORBIT_CHUNK, realization.n_cells)
        sub = realization.cells(
            realization.first_cell + start, realization.first_cell + stop - 1
        )
        generators = piece_generators(sub.piece_values(config), grid.widths, z)
        chunk = None
        for p, width in enumerate(grid.widths):
            stacks = []
            for path in paths:
                offsets = nodes if path.sign == -1 else nodes - 1
                step = offsets[None, :, None, None] * generators[:, p, None]
                E = matrix_exponential(step)
                anchor = path.anchors[start:stop, p]
                planes = np.concatenate(
                    [
                        np.broadcast_to(np.eye(L), anchor.shape),
                        path.sign * anchor,
                    ],
                    axis=-2,
                )
                image = E @ planes[:, None]
                alpha, beta = image[..., :L, :], image[..., L:, :]
                M = path.sign * np.swapaxes(
                    np.linalg.solve(
                        np.swapaxes(alpha, -1, -2), np.swapaxes(beta, -1, -2)
                    ),
                    -1,
                    -2,
                )
                stacks.append(M.reshape(-1, L, L))
            values = np.asarray(integrand(*stacks))
            values = values.reshape((stop - start, n_nodes) + values.shape[1:])
            piece_total = width * np.tensordot(weights, values, axes=(0, 1))
            chunk = piece_total if chunk is None else chunk + piece_total
        totals = chunk if totals is None else np.concatenate([totals, chunk])
    return totals


def _jump_blocks(V: np.ndarray):
    J = structure_constants(channel_count(V)).J
    return _blocks(matrix_exponential(J @ np.asarray(V, dtype=complex)))


def _solve_right(numerator: np.ndarray, denominator: np.ndarray, what: str):
    if np.linalg.cond(denominator) > 1 / SINGULAR_TOL:
        raise SingularityError(f"{what}: Möbius denominator numerically singular")
    return np.linalg.solve(denominator.T, numerator.T).T


def moebius_jump(M_after: np.ndarray, V: np.ndarray, sign: int) -> np.ndarray:
    """Value just before a singular point from the value just after it.

    ±M_before = (−C* ± A*M)(D* ∓ B*M)⁻¹ with e^{JV} = [[A, B], [C, D]].
    """
    A, B, C, D = _jump_blocks(V)
    numerator = -C.conj().T + sign * A.conj().T @ M_after
    denominator = D.conj().T - sign * B.conj().T @ M_after
    return sign * _solve_right(numerator, denominator, "moebius_jump")


def moebius_jump_inverse(
    M_before: np.ndarray, V: np.ndarray, sign: int
) -> np.ndarray:
    """±M_after = (C ± D M_before)(A ± B M_before)⁻¹."""
    A, B, C, D = _jump_blocks(V)
    numerator = C + sign * D @ M_before
    denominator = A + sign * B @ M_before
    return sign * _solve_right(numerator, denominator, "moebius_jump_inverse")


def jump_factor(M_before: np.ndarray, V: np.ndarray, sign: int) -> np.ndarray:
    """α-cocycle factor A ± B·M_before of the jump."""
    A, B, _, _ = _jump_blocks(V)
    return A + sign * B @ M_before


def herglotz_defect(m: MMatrix, gram: np.ndarray | None = None) -> HerglotzReport:
    """Smallest eigenvalue of Im(M)/Im(z), and with `gram` = ∫T*T over the
    half-line the residual of Im M / Im z = ∫Φ*Φ for Φ = T(1; ±M)."""
    z = complex(m.z)
    if z.imag == 0:
        raise ValueError("Herglotz property needs Im z != 0")
    M = np.asarray(m.M)
    im_part = (M - M.conj().T) / (2j * z.imag)
    min_eigenvalue = float(np.linalg.eigvalsh(im_part)[0])
    residual = None
    if gram is not None:
        plane = _plane(M, m.sign)
        residual = float(np.linalg.norm(im_part - plane.conj().T @ gram @ plane))
    return HerglotzReport(min_eigenvalue, residual)


def lagrangian_unitary(Phi: np.ndarray, tol: float = LAGRANGIAN_TOL) -> np.ndarray:
    """Unitary chart u = (a − ib)(a + ib)⁻¹ of a Lagrangian plane (a; b).

    The plane is Lagrangian when Φ*JΦ = 0, i.e. a*b is hermitian. The chart
    depends only on the column span, so Φ is orthonormalized first; for an
    orthonormal Lagrangian frame a + ib is itself unitary.
    """
    Phi = np.asarray(Phi, dtype=complex)
    L = Phi.shape[1]
    if Phi.shape[0] != 2 * L:
        raise StructureError(f"plane must be 2L×L, got {Phi.shape}")
    Phi, R = np.linalg.qr(Phi)
    diagonal = np.abs(np.diag(R))
    if diagonal.min() <= SINGULAR_TOL * max(diagonal.max(), 1e-300):
        raise StructureError("plane columns are linearly dependent")
    J = structure_constants(L).J
    defect = np.linalg.norm(Phi.conj().T @ J @ Phi)
    if defect > tol:
        raise LagrangianError(f"plane is not Lagrangian: defect {defect:.3e}")
    a, b = Phi[:L], Phi[L:]
    return _solve_right(a - 1j * b, a + 1j * b, "lagrangian_unitary")
