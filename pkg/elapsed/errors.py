"""Exceptions raised by the laboratory.

Every error carries the process exit code the command line reports for it:
2 for configuration or caller misuse, 3 when a mathematical structure the
model guarantees is violated, 4 for numerical failures.
"""


class ElapsedError(Exception):
    exit_code = 4

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


# Caller misuse
class ConfigError(ElapsedError):
    exit_code = 2


class DomainError(ElapsedError):
    exit_code = 2


class NonSmoothModel(ElapsedError):
    exit_code = 2


class DiracNotDensity(ElapsedError):
    exit_code = 2


class KernelNotDensity(ElapsedError):
    exit_code = 2


class MassMismatch(ElapsedError):
    exit_code = 2


class MassNotZero(ElapsedError):
    exit_code = 2


class CFLViolation(ElapsedError):
    exit_code = 2


class WindowBelowFloor(ElapsedError):
    exit_code = 2


# Structure violations
class NoRootFound(ElapsedError):
    exit_code = 3


class KappaGeqOne(ElapsedError):
    exit_code = 3


class ContractionViolated(ElapsedError):
    exit_code = 3


class NegativeDensity(ElapsedError):
    exit_code = 3


# Numerical failures
class NoConvergence(ElapsedError):
    exit_code = 4


class QuadratureUnderflow(ElapsedError):
    exit_code = 4


class EigensolverFailure(ElapsedError):
    exit_code = 4


class ScanTooCoarseWarning(UserWarning):
    """Two roots of the steady-state equation fell in adjacent scan cells."""
