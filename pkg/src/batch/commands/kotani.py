from src.batch.utils import run_tasks
from src.engine.kotani import kotani_report

from .base_command import BaseCommand, CommandResult


class KotaniCommand(BaseCommand):
    """Kotani identity suite for a list of complex energies"""

    name = "kotani"

    def execute(self) -> CommandResult:
        z_values = self.spec.z_values()
        seeds = self.seeds()
        tasks = [(z, seed) for z in z_values for seed in seeds]

        def run(task):
            z, seed = task
            return kotani_report(self.config, z, self.spec.n_cells, seed)

        reports = run_tasks(run, tasks, self.spec.threads, "Kotani identities")

        records, failures = [], []
        for (z, seed), report in zip(tasks, reports, strict=True):
            record = report.model_dump(mode="json")
            record["seed"] = seed
            records.append(record)
            for check in report.checks:
                self.logger.info(
                    "z=%s %s: %.2f units", z, check.name, check.units
                )
                if not check.passed:
                    failures.append(
                        {"z": [z.real, z.imag], "seed": seed,
                         "check": check.name, "units": check.units}
                    )
        return CommandResult(records=records, failures=failures, seeds=seeds)
