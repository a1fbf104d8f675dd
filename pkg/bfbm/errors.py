from typing import Optional


class LabError(Exception):
    """Base class for every error raised by the lab"""


class DomainError(LabError, ValueError):
    """A parameter lies outside the domain of the requested operation"""


class QuadratureError(LabError):
    """Adaptive quadrature did not reach its tolerance"""
    def __init__(self, message: str, estimate: Optional[float] = None, error: Optional[float] = None):
        super().__init__(message)
        self.estimate = estimate
        self.error = error


class TableTooShortError(LabError):
    """A renewal table does not reach the indices a computation needs"""


class FactorizationError(LabError):
    """Cholesky factorisation failed even after the largest jitter"""


class BudgetExceededError(LabError):
    """The estimated memory of a request exceeds what the machine can offer"""
    def __init__(self, message: str, estimated_bytes: int, available_bytes: int):
        super().__init__(message)
        self.estimated_bytes = estimated_bytes
        self.available_bytes = available_bytes


class UsageError(LabError):
    """Invalid command-line or configuration input"""
