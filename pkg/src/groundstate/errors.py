"""Exception hierarchy.

Every error carries the name of the operation that raised it so the CLI can
report which step failed.  ``ValidationError`` subclasses map to exit code 2,
``SolverError`` subclasses to exit code 3.
"""


class GroundstateError(Exception):
    """Base class for all package errors."""

    def __init__(self, message: str, op: str | None = None):
        self.op = op
        super().__init__(f"{op}: {message}" if op else message)


class ValidationError(GroundstateError, ValueError):
    pass


class SolverError(GroundstateError, RuntimeError):
    pass


# validation-type errors
class InvalidM(ValidationError):
    pass


class NoLocalMax(ValidationError):
    pass


class NotStableEndpoint(ValidationError):
    pass


class AsymmetricMesh(ValidationError):
    pass


class InterfaceMismatch(ValidationError):
    pass


class NoValidDelta(ValidationError):
    pass


class MissingBranch(ValidationError):
    pass


class ConfigError(ValidationError):
    pass


# solver-type errors
class DegenerateCritical(SolverError):
    pass


class EmptyResult(SolverError):
    pass


class StepStall(SolverError):
    pass


class BarrierViolation(SolverError):
    pass


class SingularJacobian(SolverError):
    pass


class MaxIterExceeded(SolverError):
    pass


class ConvergenceFailure(SolverError):
    pass


class EigensolverNoConvergence(SolverError):
    pass


class BarrierLost(SolverError):
    pass


class FlowDidNotReachConstant(SolverError):
    pass


class BranchLost(SolverError):
    pass
