"""Exception types raised by the planner."""


class PlannerError(Exception):
    """Base class for domain errors (CLI exit code 1)."""


class SetTooLargeError(PlannerError):
    """Exhaustive GOSPA assignment requested for sets above the size limit."""


class DegeneratePosteriorError(PlannerError):
    """Every hypothesis (including 'no target') has zero likelihood."""


class HorizonError(PlannerError):
    """Planning horizon above the supported cap."""


class BudgetExceededError(PlannerError):
    """Enumeration or recursion would exceed the configured budget."""


class ConfigError(PlannerError):
    """Invalid scenario or configuration."""
