"""Batch front-end: `python -m src.batch.runner --config PATH --command NAME ...`"""

import argparse
import json
import logging
import sys
import time
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, Field, ValidationError, model_validator

from src.batch.commands import CommandManager, CommandResult
from src.batch.config import RunConfig
from src.batch.utils import (
    Manifest,
    emit_csv,
    emit_json,
    energy_grid,
    error_record,
    load_config,
    now,
    package_versions,
    parse_z_list,
    write_manifest,
)
from src.engine.exceptions import DiracSimError

logger = logging.getLogger("runner")

CommandName = Literal[
    "lyapunov", "weyl", "dos", "kotani", "group-selftest", "oracle-compare"
]

ENERGY_COMMANDS = ("lyapunov", "dos")
COMPLEX_COMMANDS = ("weyl", "kotani")


class RunSpec(BaseModel):
    command: CommandName
    config: str
    e_start: float = -1.0
    e_stop: float = 1.0
    e_count: int = Field(0, ge=0)
    z: list[tuple[float, float]] = []
    n_cells: int = Field(RunConfig.n_cells, ge=1)
    n_realizations: int = Field(RunConfig.n_realizations, ge=1)
    epsilon: float = Field(RunConfig.epsilon, gt=0)
    seed: int | None = Field(None, ge=0, lt=2**64)
    output_path: str = "output"
    threads: int = Field(RunConfig.threads, ge=1)
    reortho_every: int = Field(RunConfig.reortho_every, ge=1)

    @model_validator(mode="after")
    def _grids(self):
        if self.command in ENERGY_COMMANDS and self.e_count < 1:
            raise ValueError(f"'{self.command}' needs an energy grid (--e-count >= 1)")
        if self.command in COMPLEX_COMMANDS:
            if not self.z:
                raise ValueError(f"'{self.command}' needs a non-empty --z list")
            if any(im == 0 for _, im in self.z):
                raise ValueError("complex energies need a nonzero imaginary part")
            if self.command == "kotani" and any(im < 0 for _, im in self.z):
                raise ValueError("kotani needs energies in the upper half-plane")
        return self

    def energies(self) -> list[float]:
        return energy_grid(self.e_start, self.e_stop, self.e_count)

    def z_values(self) -> list[complex]:
        return [complex(re, im) for re, im in self.z]


def run(spec: RunSpec) -> int:
    """Execute one command, write results and manifest, return the exit status."""
    out = Path(spec.output_path)
    out.mkdir(parents=True, exist_ok=True)
    config = load_config(spec.config)

    start = time.time()
    try:
        result = CommandManager(spec, config).execute()
    except DiracSimError as e:
        logger.error("%s: %s", type(e).__name__, e)
        base = config.seed if spec.seed is None else spec.seed
        result = CommandResult(
            failures=[error_record(e)],
            seeds=[base + r for r in range(spec.n_realizations)],
        )
    wall_time = time.time() - start

    if result.records is not None:
        emit_json(out / "results.json", result.records)
    elif result.header is not None:
        emit_csv(out / "results.csv", result.header, result.rows)

    write_manifest(
        out / "manifest.json",
        Manifest(
            command=spec.command,
            created_at=now(),
            config=config.model_dump(mode="json"),
            config_source=spec.config,
            run=spec.model_dump(mode="json"),
            seeds=result.seeds,
            versions=package_versions(),
            wall_time=wall_time,
            failures=result.failures,
        ),
    )
    if result.failures:
        logger.error("%d assertion(s) failed; see manifest", len(result.failures))
        return 1
    return 0


def _report_validation(error: ValidationError) -> None:
    for item in error.errors():
        location = ".".join(str(part) for part in item["loc"]) or "<root>"
        logger.error("%s: %s", location, item["msg"])


def parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    """Parse command line arguments"""
    parser = argparse.ArgumentParser(
        description="Simulate and verify random Dirac operators with time reversal"
    )
    parser.add_argument(
        "--config",
        required=True,
        help="Ensemble JSON file or reference ensemble name",
    )
    parser.add_argument(
        "--command", required=True, choices=CommandManager.names()
    )
    parser.add_argument("--e-start", type=float, default=-1.0)
    parser.add_argument("--e-stop", type=float, default=1.0)
    parser.add_argument("--e-count", type=int, default=0)
    parser.add_argument(
        "--z", default="", help="Complex energies 're,im[;re,im...]'"
    )
    parser.add_argument("--cells", type=int, default=RunConfig.n_cells)
    parser.add_argument(
        "--realizations", type=int, default=RunConfig.n_realizations
    )
    parser.add_argument("--epsilon", type=float, default=RunConfig.epsilon)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument(
        "--threads",
        type=int,
        default=RunConfig.threads,
        help="Number of worker threads",
    )
    parser.add_argument("--out", default="output", help="Output directory")
    return parser.parse_args(argv)


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(format="%(asctime)s - %(levelname)s - %(message)s")
    args = parse_args(argv)
    try:
        z_list = parse_z_list(args.z)
    except ValueError as e:
        logger.error("malformed --z '%s': %s", args.z, e)
        return 2
    try:
        spec = RunSpec(
            command=args.command,
            config=args.config,
            e_start=args.e_start,
            e_stop=args.e_stop,
            e_count=args.e_count,
            z=[(z.real, z.imag) for z in z_list],
            n_cells=args.cells,
            n_realizations=args.realizations,
            epsilon=args.epsilon,
            seed=args.seed,
            output_path=args.out,
            threads=args.threads,
        )
        return run(spec)
    except ValidationError as e:
        _report_validation(e)
        return 2
    except json.JSONDecodeError as e:
        logger.error("config: %s at line %d column %d", e.msg, e.lineno, e.colno)
        return 2
    except FileNotFoundError as e:
        logger.error(str(e))
        return 2


if __name__ == "__main__":
    sys.exit(main())
