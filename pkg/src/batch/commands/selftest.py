import numpy as np

from src.batch.config import SelftestConfig
from src.batch.utils import run_tasks
from src.engine.algebra import (
    cayley_transform_V,
    check_group_membership,
    kdu_decompose,
    kramers_partner,
    matrix_exponential,
    sample_lie_element,
    structure_constants,
    to_conjugated_rep,
    trs_defect_of,
)

from .base_command import BaseCommand, CommandResult


def _random_member(rng: np.random.Generator, L: int, factors: int = 3) -> np.ndarray:
    """Product of exponentials exp(J W_i) of random time-reversal invariant W_i."""
    J = structure_constants(L).J
    M = np.eye(2 * L, dtype=complex)
    for W in sample_lie_element(rng, L, 0.5, size=factors):
        M = matrix_exponential(J @ W) @ M
    return M


def group_checks(L: int, seed: int) -> dict:
    """Property checks of the algebra layer for one random draw."""
    rng = np.random.default_rng([seed, L])
    sc = structure_constants(L)
    M = _random_member(rng, L)
    membership = check_group_membership(M, tol=SelftestConfig.membership_tol)
    scale = max(1.0, float(np.linalg.norm(M)) ** 2)

    M_conj = to_conjugated_rep(M)
    kdu = kdu_decompose(M_conj)
    reconstruction = np.linalg.norm(kdu.K @ kdu.D @ kdu.U - M_conj) / np.linalg.norm(
        M_conj
    )
    K_member = check_group_membership(kdu.K, "conjugated", SelftestConfig.kdu_tol)
    U_member = check_group_membership(kdu.U, "conjugated", SelftestConfig.kdu_tol)

    V = sample_lie_element(rng, L, 0.5)
    V_hat = cayley_transform_V(V)
    t = sc.J.conj().T @ V_hat / 2
    eye = np.eye(2 * L)
    cayley_residual = np.linalg.norm(
        (eye + t) @ np.linalg.inv(eye - t) - matrix_exponential(sc.J @ V)
    )

    v = rng.standard_normal(2 * L) + 1j * rng.standard_normal(2 * L)
    partner = kramers_partner(v)
    kramers_overlap = abs(np.vdot(v, partner)) / np.vdot(v, v).real
    kramers_square = np.linalg.norm(kramers_partner(partner) + v) / np.linalg.norm(v)

    checks = {
        "membership_wronskian": membership.wronskian_defect / scale,
        "membership_orthogonality": membership.orthogonality_defect / scale,
        "kdu_reconstruction": float(reconstruction),
        "kdu_K_member": K_member.wronskian_defect + K_member.orthogonality_defect,
        "kdu_U_member": U_member.wronskian_defect + U_member.orthogonality_defect,
        "cayley_reconstruction": float(cayley_residual),
        "cayley_trs": trs_defect_of(V_hat),
        "kramers_overlap": float(kramers_overlap),
        "kramers_square": float(kramers_square),
    }
    return {"L": L, "seed": seed, "checks": checks}


TOLERANCES = {
    "membership_wronskian": SelftestConfig.membership_tol,
    "membership_orthogonality": SelftestConfig.membership_tol,
    "kdu_reconstruction": SelftestConfig.kdu_tol,
    "kdu_K_member": SelftestConfig.kdu_tol,
    "kdu_U_member": SelftestConfig.kdu_tol,
    "cayley_reconstruction": SelftestConfig.cayley_tol,
    "cayley_trs": SelftestConfig.cayley_tol,
    "kramers_overlap": SelftestConfig.membership_tol,
    "kramers_square": SelftestConfig.membership_tol,
}


class SelftestCommand(BaseCommand):
    """Algebra property suite over random group elements"""

    name = "group-selftest"

    def execute(self) -> CommandResult:
        base = self.config.seed if self.spec.seed is None else self.spec.seed
        seeds = [base + r for r in range(SelftestConfig.n_seeds)]
        tasks = [(L, seed) for L in range(1, 5) for seed in seeds]

        records = run_tasks(
            lambda task: group_checks(*task), tasks, self.spec.threads, "Group selftest"
        )

        failures = []
        for record in records:
            for name, value in record["checks"].items():
                if not value <= TOLERANCES[name]:
                    failures.append(
                        {"L": record["L"], "seed": record["seed"],
                         "check": name, "value": value}
                    )
        worst = {
            name: max(r["checks"][name] for r in records) for name in TOLERANCES
        }
        for name, value in worst.items():
            self.logger.info("%s: worst %.3e (tol %.1e)", name, value, TOLERANCES[name])
        return CommandResult(records=records, failures=failures, seeds=seeds)
