"""Exception hierarchy shared by every noirflow module."""


from dataclasses import dataclass


class NoirError(Exception):
    """Base class for all errors raised by noirflow."""


@dataclass(frozen=True)
class Violation:
    """One violated rule. ``node`` is 1-based, or None for whole-graph rules."""

    kind: str
    node: int | None
    message: str
    field: str | None = None

    def __str__(self):
        return f"{self.kind}: {self.message}"


class GraphError(NoirError):
    """Structured rejection of a network description.

    ``violations`` holds every problem found, not just the first one.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


class InvalidIndex(GraphError):
    def __init__(self, node, n):
        super().__init__([Violation("InvalidIndex", node, f"node {node} is outside 1..{n}")])


class RoutingError(NoirError):
    """Raised when outflow or tendency probabilities are malformed."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


class NonFinite(NoirError):
    pass


class DimensionMismatch(NoirError):
    pass


class IndexOutOfGrid(NoirError):
    pass


class SingularPhi22(NoirError):
    def __init__(self, cond):
        self.cond = cond
        super().__init__(f"co-state transition block is singular (condition estimate {cond:.3e})")


class ConnectivityRefused(NoirError):
    pass


class ParseError(NoirError):
    pass


class ValidationError(NoirError):
    """Scenario content failed a module-level validation.

    ``cause`` is the underlying module error and ``field`` the scenario path
    where it was detected.
    """

    def __init__(self, field, cause):
        self.field = field
        self.cause = cause
        super().__init__(f"{field}: {cause}")
