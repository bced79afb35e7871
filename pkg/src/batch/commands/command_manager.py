from src.engine.model import DisorderConfig

from .base_command import BaseCommand, CommandResult
from .dos import DosCommand
from .kotani import KotaniCommand
from .lyapunov import LyapunovCommand
from .oracle import OracleCommand
from .selftest import SelftestCommand
from .weyl import WeylCommand


class CommandManager:
    """Manager class for all batch commands"""

    # Available commands mapping
    _command_classes: dict[str, type[BaseCommand]] = {
        "lyapunov": LyapunovCommand,
        "weyl": WeylCommand,
        "dos": DosCommand,
        "kotani": KotaniCommand,
        "group-selftest": SelftestCommand,
        "oracle-compare": OracleCommand,
    }

    def __init__(self, spec, config: DisorderConfig):
        """
        Initialize the manager for one run

        Args:
            spec: RunSpec naming the command
            config: validated ensemble definition

        Raises:
            KeyError: If the command is not registered
        """
        if spec.command not in self._command_classes:
            raise KeyError(f"Command '{spec.command}' not supported")
        self.command = self._command_classes[spec.command](spec, config)

    @classmethod
    def names(cls) -> list[str]:
        return list(cls._command_classes)

    def execute(self) -> CommandResult:
        try:
            return self.command.execute()
        finally:
            self.command.close()
