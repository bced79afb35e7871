import numpy as np

from src.batch.config import OracleConfig
from src.batch.utils import run_tasks
from src.engine.green import spectral_density, warmup_cells
from src.engine.model import sample_realization
from src.engine.oracle import (
    boundary_value_problem,
    eigenvalues_in_window,
    histogram_density,
    smoothed_count_density,
)

from .base_command import BaseCommand, CommandResult


class OracleCommand(BaseCommand):
    """Finite-interval eigenvalue counts against the Green-matrix density"""

    name = "oracle-compare"

    def execute(self) -> CommandResult:
        seeds = self.seeds()
        L, X, eps = self.config.L, OracleConfig.X, self.spec.epsilon
        window = OracleConfig.window

        def eigenvalues(seed):
            realization = sample_realization(self.config, X, seed)
            bvp = boundary_value_problem(realization, self.config, X)
            return eigenvalues_in_window(bvp, window)

        spectra = run_tasks(eigenvalues, seeds, self.spec.threads, "Eigenvalues")
        collected = [eig for spectrum in spectra for eig in spectrum]
        self.logger.info(
            "%d eigenvalues in %s over %d realizations",
            len(collected),
            window,
            len(seeds),
        )

        centers, histogram = histogram_density(
            collected, window, OracleConfig.bins, L, X, len(seeds)
        )
        smoothed = smoothed_count_density(
            collected, centers, eps, L, X, window, len(seeds)
        )

        warmup = warmup_cells(complex(0.0, eps))
        tasks = [(E, seed) for E in centers for seed in seeds]

        def density(task):
            E, seed = task
            realization = sample_realization(
                self.config, self.spec.n_cells + 2 * warmup, seed
            )
            return spectral_density(realization, self.config, E, eps, warmup)

        estimates = run_tasks(density, tasks, self.spec.threads, "Spectral density")

        rows, failures = [], []
        per_energy = len(seeds)
        for i, E in enumerate(centers):
            chunk = estimates[i * per_energy : (i + 1) * per_energy]
            mean = float(np.mean([e.mean for e in chunk]))
            stderr = float(np.sqrt(np.sum([e.stderr**2 for e in chunk])) / len(chunk))
            deviation = abs(smoothed[i] - mean) / max(abs(mean), 1e-12)
            rows.append([E, histogram[i], smoothed[i], mean, stderr, deviation])
            if deviation > OracleConfig.max_relative_deviation:
                failures.append(
                    {"E": float(E), "check": "relative_deviation", "value": deviation}
                )
        self.logger.info(
            "sup relative deviation %.4f (limit %.2f)",
            max((row[-1] for row in rows), default=0.0),
            OracleConfig.max_relative_deviation,
        )
        return CommandResult(
            header=["E", "histogram", "smoothed", "density", "stderr",
                    "relative_deviation"],
            rows=rows,
            failures=failures,
            seeds=seeds,
        )
