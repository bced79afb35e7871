import logging
import os
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Any, NamedTuple

from src.engine.model import DisorderConfig


class CommandResult(NamedTuple):
    """Table (header + rows) for CSV output, or records for JSON output."""

    header: list[str] | None = None
    rows: list[list[Any]] | None = None
    records: list[dict[str, Any]] | None = None
    failures: list[dict[str, Any]] = []
    seeds: list[int] = []


class BaseCommand(ABC):
    """Base class for batch commands"""

    name: str = "base"

    def __init__(self, spec, config: DisorderConfig):
        """
        Initialize a command run

        Args:
            spec: RunSpec with the run parameters
            config: validated ensemble definition
        """
        self.spec = spec
        self.config = config
        self._setup_logger(Path(spec.output_path))

    def _setup_logger(self, out: Path) -> None:
        """
        Log to <out>/logs/<name>.log and the console, for this command and
        for the engine modules it calls.

        Args:
            out: output directory of the run
        """
        self.logger = logging.getLogger(f"command.{self.name}")
        self.logger.setLevel(logging.INFO)

        engine_logger = logging.getLogger("engine")
        engine_logger.setLevel(logging.INFO)

        if self.logger.handlers:
            return

        file_formatter = logging.Formatter(
            "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
        )
        console_formatter = logging.Formatter(
            "%(asctime)s - %(levelname)s - %(message)s"
        )

        log_dir = out / "logs"
        os.makedirs(log_dir, exist_ok=True)

        file_handler = logging.FileHandler(
            log_dir / f"{self.name}.log", encoding="utf-8"
        )
        file_handler.setLevel(logging.INFO)
        file_handler.setFormatter(file_formatter)

        console_handler = logging.StreamHandler()
        console_handler.setLevel(logging.INFO)
        console_handler.setFormatter(console_formatter)

        for logger in (self.logger, engine_logger):
            logger.addHandler(file_handler)
            logger.addHandler(console_handler)
        self._handlers = [file_handler, console_handler]

    def close(self) -> None:
        """Detach this run's handlers so a later run can log elsewhere."""
        for handler in getattr(self, "_handlers", []):
            for logger in (self.logger, logging.getLogger("engine")):
                logger.removeHandler(handler)
            handler.close()

    def seeds(self) -> list[int]:
        """One seed per realization, counter-based from the run seed."""
        base = self.config.seed if self.spec.seed is None else self.spec.seed
        return [base + r for r in range(self.spec.n_realizations)]

    @abstractmethod
    def execute(self) -> CommandResult:
        """
        Run the computation

        Returns:
            CommandResult with the output table or records and any failed
            assertions
        """
        pass
