import numpy as np

from src.batch.utils import run_tasks
from src.engine.green import spectral_density, warmup_cells
from src.engine.model import sample_realization

from .base_command import BaseCommand, CommandResult


class DosCommand(BaseCommand):
    """ε-smoothed spectral density on an energy grid"""

    name = "dos"

    def execute(self) -> CommandResult:
        energies = self.spec.energies()
        seeds = self.seeds()
        eps = self.spec.epsilon
        warmup = warmup_cells(complex(0.0, eps))
        tasks = [(E, seed) for E in energies for seed in seeds]

        def run(task):
            E, seed = task
            realization = sample_realization(
                self.config, self.spec.n_cells + 2 * warmup, seed
            )
            return spectral_density(realization, self.config, E, eps, warmup)

        estimates = run_tasks(run, tasks, self.spec.threads, "Spectral density")

        rows = []
        per_energy = len(seeds)
        for i, E in enumerate(energies):
            chunk = estimates[i * per_energy : (i + 1) * per_energy]
            mean = float(np.mean([e.mean for e in chunk]))
            stderr = float(np.sqrt(np.sum([e.stderr**2 for e in chunk])) / len(chunk))
            rows.append([E, eps, mean, stderr])
            self.logger.info("E=%.4f density %.6f ± %.2e", E, mean, stderr)
        return CommandResult(
            header=["E", "epsilon", "density", "stderr"], rows=rows, seeds=seeds
        )
