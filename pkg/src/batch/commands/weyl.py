import numpy as np

from src.batch.config import ThresholdConfig, WeylConfig
from src.batch.utils import complex_pair, matrix_pairs, run_tasks
from src.engine.model import sample_two_sided
from src.engine.weyl import herglotz_defect, m_matrix

from .base_command import BaseCommand, CommandResult


def trs_m_residual(M: np.ndarray) -> float:
    """‖conj(M^z) + (M^{z̄})⁻¹‖ with M^{z̄} = (M^z)*."""
    return float(np.linalg.norm(M.conj() + np.linalg.inv(M.conj().T)))


class WeylCommand(BaseCommand):
    """Weyl-Titchmarsh matrices M± at the origin for a list of energies"""

    name = "weyl"

    def execute(self) -> CommandResult:
        z_values = self.spec.z_values()
        seeds = self.seeds()
        tasks = [(z, seed) for z in z_values for seed in seeds]

        def run(task):
            z, seed = task
            realization = sample_two_sided(self.config, self.spec.n_cells, seed)
            record = {"z": complex_pair(z), "seed": seed}
            for sign, label in ((1, "plus"), (-1, "minus")):
                m = m_matrix(realization, self.config, z, sign, tol=WeylConfig.tol)
                record[f"M_{label}"] = matrix_pairs(m.M)
                record[f"radius_{label}"] = m.radius
                record[f"herglotz_min_{label}"] = herglotz_defect(m).min_eigenvalue
                record[f"trs_residual_{label}"] = trs_m_residual(m.M)
            return record

        records = run_tasks(run, tasks, self.spec.threads, "Weyl matrices")
        failures = []
        for record in records:
            for label in ("plus", "minus"):
                if record[f"herglotz_min_{label}"] <= 0:
                    failures.append(
                        {"z": record["z"], "seed": record["seed"],
                         "check": f"herglotz_{label}"}
                    )
                if (
                    self.config.time_reversal
                    and record[f"trs_residual_{label}"] > ThresholdConfig.m_symmetry_tol
                ):
                    failures.append(
                        {"z": record["z"], "seed": record["seed"],
                         "check": f"trs_{label}",
                         "residual": record[f"trs_residual_{label}"]}
                    )
        return CommandResult(records=records, failures=failures, seeds=seeds)
