"""
Exception hierarchy shared by every package.

Input problems subclass ValueError, numerical/solver problems subclass
RuntimeError, so code written against builtin exceptions keeps working.
The CLI maps these onto exit codes (see main.py).
"""


class DdssError(Exception):
    """Base class of every error raised by this project."""


# ============================================================
# ----- INPUT / VALIDATION ERRORS -----
# ============================================================

class DimensionError(DdssError, ValueError):
    pass


class DimensionMismatch(DimensionError):
    pass


class NotPositiveDefinite(DdssError, ValueError):
    pass


class NotNegativeDefinite(DdssError, ValueError):
    pass


class DomainError(DdssError, ValueError):
    pass


class ExprSyntaxError(DdssError, ValueError):
    def __init__(self, message, offset):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class InvalidDelayBounds(DdssError, ValueError):
    pass


class NonPositiveGamma(DdssError, ValueError):
    pass


class AffineViolation(DdssError, ValueError):
    pass


class NotApplicable(DdssError, ValueError):
    pass


class ProblemFileError(DdssError, ValueError):
    def __init__(self, path, message):
        super().__init__(f"[{path}] {message}")
        self.path = path


class DelayOutOfBounds(DdssError, ValueError):
    pass


# ============================================================
# ----- NUMERICAL / SOLVER ERRORS -----
# ============================================================

class SolverError(DdssError, RuntimeError):
    pass


class Infeasible(DdssError, RuntimeError):
    def __init__(self, message, outcome=None):
        super().__init__(message)
        self.outcome = outcome


class InitializationFailed(Infeasible):
    pass


class IterationInfeasible(Infeasible):
    def __init__(self, message, last_state=None, last_certificate=None):
        super().__init__(message)
        self.last_state = last_state
        self.last_certificate = last_certificate


class SingularX(DdssError, RuntimeError):
    pass


class NonFiniteState(DdssError, RuntimeError):
    def __init__(self, time):
        super().__init__(f"state became non-finite at t={time:.6g}")
        self.time = time


class NonConvergent(DdssError, RuntimeError):
    pass
