"""Green kernels, averaged Green matrices and the spectral density.

Φ^z_±(x) = T^z(x, x₀)(1; ±M^z_±) are the half-line square integrable
solutions. With C = (−M₊ − M₋)⁻¹ the kernel of (H − z)⁻¹ is
Φ₊(x) C Φ^{z̄}₋(y)* for x < y and Φ₋(x) C Φ^{z̄}₊(y)* for x > y; its jump
across the diagonal is J.
"""

import logging
from typing import Literal, NamedTuple

import numpy as np
from scipy.integrate import quad

from .algebra import cayley_transform_V, matrix_exponential, structure_constants
from .exceptions import (
    LagrangianError,
    SingularityError,
    StructureError,
    TRSViolationError,
)
from .model import DisorderConfig, Realization
from .stats import Estimate, batch_means
from .transfer import TransferProvider
from .weyl import MMatrix, _plane, cell_quadrature, orbit_path

logger = logging.getLogger("engine.green")

KRAMERS_TOL = 1e-10
HERMITIAN_TOL = 1e-12
LAMBDA_CUTOFF = 1e3


class AveragedGreenMatrix(NamedTuple):
    """Ĝ^z at a point; `at` is "regular" or "singular" (then V is set)."""

    G: np.ndarray
    z: complex
    at: Literal["regular", "singular"] = "regular"
    V: np.ndarray | None = None


class RankOneLikeReport(NamedTuple):
    diagonal_residual: float
    off_diagonal_residual: float
    partner_diagonal_residual: float


def _as_array(M: MMatrix | np.ndarray) -> np.ndarray:
    return np.asarray(M.M if isinstance(M, MMatrix) else M, dtype=complex)


def kramers_pair(L: int, k: int) -> np.ndarray:
    """Ψ_k = (e_k, e_{k+L}) for 0 <= k < L."""
    if not 0 <= k < L:
        raise ValueError(f"k must lie in [0, {L}), got {k}")
    Psi = np.zeros((2 * L, 2))
    Psi[k, 0] = 1.0
    Psi[k + L, 1] = 1.0
    return Psi


def _coupling(M_plus: np.ndarray, M_minus: np.ndarray) -> np.ndarray:
    total = -M_plus - M_minus
    if np.linalg.cond(total) > 1e12:
        raise StructureError("−M₊ − M₋ is numerically singular")
    return np.linalg.inv(total)


def green_kernel(
    M_plus: MMatrix | np.ndarray,
    M_minus: MMatrix | np.ndarray,
    provider: TransferProvider,
    x: float,
    y: float,
    z: complex,
    branch: Literal[1, -1] | None = None,
) -> np.ndarray:
    """G^z(x, y) from the Weyl solutions at the origin of `provider`.

    On the diagonal `branch` picks the one-sided limit: +1 for x → y⁺,
    −1 for x → y⁻.
    """
    Mp, Mm = _as_array(M_plus), _as_array(M_minus)
    C = _coupling(Mp, Mm)
    if x == y:
        if branch is None:
            raise ValueError("the kernel jumps on the diagonal; pass branch=±1")
        above = branch == 1
    else:
        above = x > y
    Tx = provider(x, z)
    Ty = provider(y, np.conj(z))
    if above:
        left = Tx @ _plane(Mm, -1)
        right = Ty @ _plane(Mp.conj().T, 1)
    else:
        left = Tx @ _plane(Mp, 1)
        right = Ty @ _plane(Mm.conj().T, -1)
    return left @ C @ right.conj().T


def half_line_kernel(
    M_plus: MMatrix | np.ndarray,
    provider: TransferProvider,
    gamma: np.ndarray,
    x: float,
    y: float,
    z: complex,
    branch: Literal[1, -1] | None = None,
) -> np.ndarray:
    """Kernel of the half-line operator on [x₀, ∞) with boundary plane (1; γ).

    (1; γ) is Lagrangian exactly when γ is hermitian. The left Weyl solution
    is replaced by T(x)(1; γ), i.e. M₋ by −γ.
    """
    gamma = np.asarray(gamma, dtype=complex)
    defect = np.linalg.norm(gamma - gamma.conj().T)
    if defect > HERMITIAN_TOL * max(1.0, np.linalg.norm(gamma)):
        raise LagrangianError(
            f"boundary plane (1; γ) is not Lagrangian: ‖γ − γ*‖ = {defect:.3e}"
        )
    Mp = _as_array(M_plus)
    denominator = -Mp + gamma
    if np.linalg.cond(denominator) > 1e12:
        raise SingularityError("boundary plane resonates with M₊: −M₊ + γ singular")
    origin = provider.realization.origin
    if x < origin or y < origin:
        raise ValueError("half-line kernel lives on x, y >= x₀")
    return green_kernel(Mp, -gamma, provider, x, y, z, branch)


def averaged_green(
    M_plus: MMatrix | np.ndarray,
    M_minus: MMatrix | np.ndarray,
    z: complex,
) -> AveragedGreenMatrix:
    """Ĝ₀ = [[C, ½C(M₊−M₋)], [½(M₊−M₋)C, (M₊⁻¹+M₋⁻¹)⁻¹]]."""
    Mp, Mm = _as_array(M_plus), _as_array(M_minus)
    C = _coupling(Mp, Mm)
    difference = Mp - Mm
    lower = np.linalg.inv(np.linalg.inv(Mp) + np.linalg.inv(Mm))
    G = np.block([[C, 0.5 * C @ difference], [0.5 * difference @ C, lower]])
    result = AveragedGreenMatrix(G, complex(z))
    smallest = min_imaginary_eigenvalue(result)
    if smallest <= 0:
        logger.warning("averaged Green matrix not Herglotz: %.3e", smallest)
    return result


def averaged_green_stack(M_plus: np.ndarray, M_minus: np.ndarray) -> np.ndarray:
    """Vectorized Ĝ₀ for stacks (m, L, L) of M₊ and M₋."""
    C = np.linalg.inv(-M_plus - M_minus)
    difference = M_plus - M_minus
    lower = np.linalg.inv(np.linalg.inv(M_plus) + np.linalg.inv(M_minus))
    top = np.concatenate([C, 0.5 * C @ difference], axis=-1)
    bottom = np.concatenate([0.5 * difference @ C, lower], axis=-1)
    return np.concatenate([top, bottom], axis=-2)


def imaginary_part(G: np.ndarray) -> np.ndarray:
    return (G - np.swapaxes(G.conj(), -1, -2)) / 2j


def min_imaginary_eigenvalue(G: AveragedGreenMatrix | np.ndarray) -> float:
    G = G.G if isinstance(G, AveragedGreenMatrix) else G
    return float(np.linalg.eigvalsh(imaginary_part(G))[0])


def perturbed_green(
    G0: AveragedGreenMatrix, V: np.ndarray
) -> AveragedGreenMatrix:
    """Ĝ_V = [Ĝ₀⁻¹ + V̂]⁻¹ at a singular point.

    When e^{JV} has eigenvalue −1 the Cayley transform does not exist and
    the six-limit average of `singular_point_green_from` is used instead.
    """
    V = np.asarray(V, dtype=complex)
    try:
        V_hat = cayley_transform_V(V)
    except SingularityError as exc:
        logger.info("Cayley transform undefined (%s); using kernel limits", exc)
        return singular_point_green_from(G0, V)
    G = np.linalg.inv(np.linalg.inv(G0.G) + V_hat)
    return AveragedGreenMatrix(G, G0.z, "singular", V)


def singular_point_green_from(
    G0: AveragedGreenMatrix, V: np.ndarray
) -> AveragedGreenMatrix:
    """Average of the six directional limits of the perturbed kernel at a
    singular point, from the unperturbed Ĝ₀ at that point.

    The unperturbed one-sided limits are G₀(0±, 0) = Ĝ₀ ± ½J. The result
    has the same imaginary part as the Cayley formula; its hermitian part
    differs from it by ¼(T − T⁻¹)J, T = e^{JV}.
    """
    V = np.asarray(V, dtype=complex)
    n = V.shape[0]
    J = structure_constants(n // 2).J
    eye = np.eye(n)
    T = matrix_exponential(J @ V)
    T_inv = J.conj().T @ T.conj().T @ J
    below = G0.G - 0.5 * J
    above = G0.G + 0.5 * J
    K = np.linalg.solve(T @ below - above, eye - T)
    G1 = below + above @ K @ below
    G2 = G1 + J
    G3 = G2 @ T_inv.conj().T
    G4 = T_inv @ G3
    G5 = G4 - J
    G6 = G5 @ T.conj().T
    G = (G1 + G2 + 2 * G3 + G4 + G5 + 2 * G6) / 8
    return AveragedGreenMatrix(G, G0.z, "singular", V)


def singular_point_green(
    M_plus: MMatrix | np.ndarray,
    M_minus_before: MMatrix | np.ndarray,
    V: np.ndarray,
    z: complex,
) -> AveragedGreenMatrix:
    """Ĝ_V at a singular point carrying V, from M₊ there and M₋ just before
    the jump. Valid whether or not the Cayley transform of V exists."""
    return singular_point_green_from(averaged_green(M_plus, M_minus_before, z), V)


def transport_green(
    G: AveragedGreenMatrix, T: np.ndarray, T_conj: np.ndarray
) -> AveragedGreenMatrix:
    """Ĝ(x) = T^z(x, y) Ĝ(y) T^{z̄}(x, y)* between regular points."""
    return AveragedGreenMatrix(T @ G.G @ T_conj.conj().T, G.z)


def kramers_block(
    G: AveragedGreenMatrix | np.ndarray, k: int, tol: float = KRAMERS_TOL
) -> complex:
    """Scalar g with Ψ_k*ĜΨ_k = g·1₂."""
    G = G.G if isinstance(G, AveragedGreenMatrix) else np.asarray(G)
    Psi = kramers_pair(G.shape[0] // 2, k)
    block = Psi.T @ G @ Psi
    g = complex(np.trace(block) / 2)
    residual = np.linalg.norm(block - g * np.eye(2)) / max(abs(g), 1.0)
    if residual > tol:
        raise TRSViolationError(
            f"Kramers block {k} is not scalar: residual {residual:.3e}"
        )
    return g


def trs_green_defect(G: AveragedGreenMatrix | np.ndarray) -> float:
    """‖J*ĜJ − Ĝᵗ‖."""
    G = G.G if isinstance(G, AveragedGreenMatrix) else np.asarray(G)
    J = structure_constants(G.shape[0] // 2).J
    return float(np.linalg.norm(J.conj().T @ G @ J - G.T))


def rank_one_like_check(
    G_V: AveragedGreenMatrix, lam: float, k: int, partner: int | None = None
) -> RankOneLikeReport:
    """Compare Ĝ after adding λΨ_kΨ_k* to V̂ with the scalar formulas.

    Diagonal: e_k*Ĝ_λe_k = g/(1 + λg). Columns: Ĝ_λe_k = Ĝe_k/(1 + λg).
    Another diagonal entry l: e_l*Ĝ_λe_l = e_l*Ĝe_l − λ e_l*ĜΨΨ*Ĝe_l/(1 + λg).
    """
    G = G_V.G
    n = G.shape[0]
    L = n // 2
    Psi = kramers_pair(L, k)
    G_lam = np.linalg.inv(np.linalg.inv(G) + lam * Psi @ Psi.T)
    g = G[k, k]
    factor = 1 + lam * g
    diagonal = abs(G_lam[k, k] - g / factor)
    off_diagonal = float(np.linalg.norm(G_lam[:, k] - G[:, k] / factor))
    l = (k + 1) % L if partner is None else partner
    coupling = G[l, :] @ Psi @ Psi.T @ G[:, l]
    partner_residual = abs(G_lam[l, l] - (G[l, l] - lam * coupling / factor))
    return RankOneLikeReport(float(diagonal), off_diagonal, float(partner_residual))


def lambda_integral(g: complex, cutoff: float = LAMBDA_CUTOFF) -> float:
    """∫ Im(g/(1 + λg)) dλ over the real line, cut at ±cutoff plus the
    Lorentzian tail beyond it. Equals π for Im g > 0."""
    g = complex(g)
    if g.imag <= 0:
        raise ValueError(f"need Im g > 0, got {g}")
    peak = -g.real / abs(g) ** 2

    def integrand(lam):
        return (g / (1 + lam * g)).imag

    inside, _ = quad(
        integrand, -cutoff, cutoff, points=[peak], limit=400, epsabs=1e-12
    )
    tail = 2 * g.imag / (abs(g) ** 2 * cutoff)
    return float(inside + tail)


def point_density(G: AveragedGreenMatrix | np.ndarray) -> float:
    """(1/(2Lπ)) Tr Im Ĝ."""
    G = G.G if isinstance(G, AveragedGreenMatrix) else np.asarray(G)
    n = G.shape[-1]
    return float(np.trace(imaginary_part(G)).real / (n * np.pi))


def warmup_cells(z: complex) -> int:
    """Cells discarded at each end of an orbit seeded from i·1."""
    return max(50, int(np.ceil(20 / complex(z).imag)))


def spectral_density(
    realization: Realization,
    config: DisorderConfig,
    E: float,
    eps: float,
    warmup: int | None = None,
    n_nodes: int = 8,
) -> Estimate:
    """Orbit average of (1/(2Lπ)) Tr Im Ĝ^{E+iε}(x) over the realization.

    M₋ is carried forward and M₊ backward; `warmup` cells are dropped at each
    end. The error is the batch-means error over cells.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    z = complex(E, eps)
    warmup = warmup_cells(z) if warmup is None else warmup
    if realization.n_cells <= 2 * warmup:
        raise ValueError(
            f"realization of {realization.n_cells} cells is shorter than "
            f"twice the warm-up ({warmup})"
        )
    plus = orbit_path(realization, config, z, 1)
    minus = orbit_path(realization, config, z, -1)
    stop = realization.n_cells - warmup
    window = realization.cells(
        realization.first_cell + warmup, realization.first_cell + stop - 1
    )

    def density(M_plus, M_minus):
        G = averaged_green_stack(M_plus, M_minus)
        return np.trace(imaginary_part(G), axis1=-2, axis2=-1).real / (
            2 * config.L * np.pi
        )

    per_cell = cell_quadrature(
        [plus.window(warmup, stop), minus.window(warmup, stop)],
        window,
        config,
        density,
        n_nodes,
    )
    mean, stderr = batch_means(per_cell)
    return Estimate(float(mean), float(stderr))
