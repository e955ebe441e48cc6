"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Invalid argument values (negative rates, bad config, malformed specs)."""


class DimensionError(ValidationError):
    """Array shapes that do not agree."""


class TraceError(ValidationError):
    """Malformed or exhausted recharge traces."""


class BudgetExceeded(RuntimeError):
    """An enumeration was asked to search beyond its configured budget."""


class ConditionsNotMet(RuntimeError):
    """Closed-form preconditions do not hold; carries the failed condition."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


class InfeasibleLP(RuntimeError):
    """Linear program has no feasible point."""


class UnboundedLP(RuntimeError):
    """Linear program objective is unbounded below."""


class InvariantViolation(AssertionError):
    """A post-hoc result invariant (dominance, monotonicity) failed."""
