"""
Error hierarchy shared by all goodness-of-fit apps.

Each class carries the exit code the `gof` command reports for it.
"""


class MinimaxGofError(Exception):
    """Base class for all library errors"""

    exit_code = 1


class DomainError(MinimaxGofError, ValueError):
    """An argument lies outside the domain of an operation"""

    exit_code = 2


class DegenerateSampleError(DomainError):
    """A sample cannot be normalized (e.g. all responses are zero)"""


class ResourceLimitError(MinimaxGofError):
    """An enumeration would exceed the configured index cap"""

    exit_code = 3

    def __init__(self, message, cap=None):
        super().__init__(message)
        self.cap = cap


class InfeasibleProblemError(MinimaxGofError):
    """The extremal problem has an empty constraint set"""

    exit_code = 4


class SimulationError(MinimaxGofError):
    """A Monte Carlo replication failed"""

    exit_code = 5

    def __init__(self, message, replication=None):
        super().__init__(message)
        self.replication = replication
