"""Exception hierarchy for the numerical engine."""


class DiracSimError(Exception):
    """Base class for every error raised by the engine."""


class StructureError(DiracSimError, ValueError):
    """Dimension mismatch, non-member input or incompatible spans."""


class SingularityError(DiracSimError, ArithmeticError):
    """A matrix that must be inverted is numerically singular."""

    def __init__(self, message: str, *, value: complex | None = None,
                 cell: int | None = None):
        super().__init__(message)
        self.value = value
        self.cell = cell


class DiskNotFormedError(DiracSimError, ValueError):
    """The upper-left block of Q is not yet positive definite."""

    def __init__(self, min_eigenvalue: float):
        super().__init__(
            f"Weyl disk not formed: smallest eigenvalue {min_eigenvalue:.3e}"
        )
        self.min_eigenvalue = min_eigenvalue


class ConvergenceError(DiracSimError, RuntimeError):
    """Disk radius did not drop below tolerance within the allowed length."""

    def __init__(self, message: str, radius: float):
        super().__init__(f"{message} (radius {radius:.3e})")
        self.radius = radius


class TransferOverflowError(DiracSimError, OverflowError):
    """Raw transfer product left the representable range."""

    def __init__(self, n_cells: int):
        super().__init__(
            f"transfer product overflowed after {n_cells} cells; use the "
            "QR-accumulated path in engine.lyapunov"
        )
        self.n_cells = n_cells


class TransportError(DiracSimError, RuntimeError):
    """A transported M-matrix lost the Herglotz property."""


class LagrangianError(DiracSimError, ValueError):
    """A boundary plane is not Lagrangian."""


class TRSViolationError(DiracSimError, ValueError):
    """A quantity fails a time-reversal structure check."""
