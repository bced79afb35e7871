import numpy as np

from src.batch.config import ThresholdConfig
from src.batch.utils import run_tasks
from src.engine.lyapunov import (
    LyapunovSpectrum,
    lyapunov_spectrum,
    symmetry_diagnostics,
    vanishing_count,
)

from .base_command import BaseCommand, CommandResult


def combine_spectra(spectra: list[LyapunovSpectrum]) -> LyapunovSpectrum:
    """Mean over independent realizations with propagated errors."""
    gamma = np.mean([s.gamma for s in spectra], axis=0)
    stderr = np.sqrt(np.sum([s.stderr**2 for s in spectra], axis=0)) / len(spectra)
    n_cells = sum(s.n_cells for s in spectra)
    return LyapunovSpectrum(gamma, stderr, n_cells, spectra[0].z)


class LyapunovCommand(BaseCommand):
    """Lyapunov spectra on an energy grid"""

    name = "lyapunov"

    def execute(self) -> CommandResult:
        energies = self.spec.energies()
        seeds = self.seeds()
        tasks = [(E, seed) for E in energies for seed in seeds]

        def run(task):
            E, seed = task
            return lyapunov_spectrum(
                self.config,
                E,
                self.spec.n_cells,
                seed=seed,
                reortho_every=self.spec.reortho_every,
            )

        spectra = run_tasks(run, tasks, self.spec.threads, "Lyapunov spectra")

        n = 2 * self.config.L
        header = (
            ["E"]
            + [f"gamma_{l + 1}" for l in range(n)]
            + [f"stderr_{l + 1}" for l in range(n)]
        )
        rows, failures = [], []
        per_energy = len(seeds)
        for i, E in enumerate(energies):
            spectrum = combine_spectra(spectra[i * per_energy : (i + 1) * per_energy])
            k = vanishing_count(spectrum, ThresholdConfig.vanishing_confidence)
            rows.append([E, *spectrum.gamma, *spectrum.stderr])
            report = symmetry_diagnostics(spectrum)
            self.logger.info(
                "E=%.4f gamma=%s pairing %.2f units, reflection %.2f units, k=%d",
                E,
                np.array2string(spectrum.gamma, precision=5),
                report.pairing_units,
                report.reflection_units,
                k,
            )
            if not self.config.time_reversal:
                continue
            for name in ("pairing_units", "reflection_units"):
                units = getattr(report, name)
                if units >= ThresholdConfig.fail_units:
                    failures.append({"E": E, "check": name, "units": units})
        return CommandResult(header=header, rows=rows, failures=failures, seeds=seeds)
