"""Exception hierarchy shared by every part of the lab."""

from __future__ import annotations


class LabError(Exception):
    """Base class for all errors raised by rnn_cl_lab."""


class ConfigError(LabError):
    """Invalid, unknown or method-incompatible configuration."""


class GraphError(LabError):
    """Malformed computation graph (non-scalar loss, cycle)."""


class ShapeError(LabError):
    """Operands whose shapes do not fit the requested operation."""


class NonFiniteError(LabError):
    """A NaN or infinity showed up where finite numbers are required."""

    def __init__(self, message: str, view: str | None = None):
        super().__init__(message)
        self.view = view


class DivergenceError(LabError):
    """Training produced a non-finite loss."""

    def __init__(self, task_id: int, iteration: int, loss: float):
        super().__init__(f"loss became {loss} on task {task_id} at iteration {iteration}")
        self.task_id = task_id
        self.iteration = iteration
        self.loss = loss


class TaskError(LabError):
    """Unknown task id."""


class DataError(LabError):
    """Invalid data request (empty recall window, broken permutation, no samples)."""
