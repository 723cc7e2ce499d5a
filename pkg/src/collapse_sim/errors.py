"""Exception types raised across the package."""


class CollapseSimError(Exception):
    """Base class for all package errors."""


class InvalidParameter(CollapseSimError, ValueError):
    pass


class UnknownPreset(CollapseSimError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "unknown preset"


class NotPositiveSemidefinite(CollapseSimError, ValueError):
    pass


class NumericalBlowup(CollapseSimError, ArithmeticError):
    """Pre-renormalization norm left the admissible window.

    ``step_index`` is attached by the trajectory driver when known.
    """

    def __init__(self, message, step_index=None, trajectory_index=None):
        super().__init__(message)
        self.step_index = step_index
        self.trajectory_index = trajectory_index

    def __str__(self):
        parts = [self.args[0]]
        if self.trajectory_index is not None:
            parts.append(f"trajectory={self.trajectory_index}")
        if self.step_index is not None:
            parts.append(f"step={self.step_index}")
        return " ".join(str(p) for p in parts)


class EnsembleFailure(CollapseSimError):
    """One or more trajectories of an ensemble failed."""

    def __init__(self, failures):
        self.failures = list(failures)
        idx = ", ".join(str(f.trajectory_index) for f in self.failures)
        super().__init__(f"{len(self.failures)} trajectories failed (indices: {idx})")


class DimensionMismatch(CollapseSimError, ValueError):
    pass


class KernelNotSmooth(CollapseSimError, ValueError):
    pass


class WrongRecordKind(CollapseSimError, ValueError):
    pass


class GridMismatch(CollapseSimError, ValueError):
    pass


class OutOfGridRange(CollapseSimError, ValueError):
    pass


class RecordValidationError(CollapseSimError, ValueError):
    """Experiment-record file failed validation; ``path`` is a JSON pointer."""

    def __init__(self, message, path=""):
        super().__init__(f"{path or '/'}: {message}")
        self.path = path
