"""Exception hierarchy.

Every error carries enough context (operation, time, grid point) for the CLI
to report it without a traceback.
"""

from __future__ import annotations


class PshflowError(Exception):
    """Base class for all package errors."""


class InvariantViolation(PshflowError):
    """A field failed one of its structural invariants (Hermitian, positive, ...)."""

    def __init__(self, invariant: str, message: str, point=None, value=None):
        self.invariant = invariant
        self.point = point
        self.value = value
        super().__init__(f"[{invariant}] {message}")


class SingularMetric(InvariantViolation):
    def __init__(self, message: str, point=None, value=None):
        super().__init__("singular-metric", message, point, value)


class NotAMetricPower(InvariantViolation):
    """Raised when an (n-1,n-1)-form is not positive, so it has no (n-1)-th root."""

    def __init__(self, point, value):
        super().__init__(
            "not-a-metric-power",
            f"form is not positive at grid point {point} (smallest eigenvalue {value:.3e})",
            point,
            value,
        )


class PositivityLost(PshflowError):
    def __init__(self, t: float, point, value: float):
        self.t = t
        self.point = point
        self.value = value
        super().__init__(
            f"flow.rhs: tilde-omega lost positivity at t={t:.12g}, "
            f"grid point {point}, eigenvalue {value:.3e}"
        )


class SingularTimeReached(PshflowError):
    def __init__(self, t: float, dt: float, reason: str = ""):
        self.t = t
        self.dt = dt
        self.reason = reason
        super().__init__(f"flow.step: step size {dt:.3e} fell below dt_min at t={t:.12g} {reason}".rstrip())


class NonFinite(PshflowError):
    def __init__(self, t: float, where: str = "state"):
        self.t = t
        super().__init__(f"flow.step: non-finite values in {where} at t={t:.12g}")


class ConfigError(PshflowError):
    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        self.field = field
        self.line = line
        loc = []
        if line is not None:
            loc.append(f"line {line}")
        if field is not None:
            loc.append(f"field '{field}'")
        prefix = f"config ({', '.join(loc)}): " if loc else "config: "
        super().__init__(prefix + message)
