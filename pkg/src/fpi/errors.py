"""Exception hierarchy shared across the pipeline.

Parse/shape problems and verification-time obstructions are kept apart:
the former abort with a message, the latter are caught by the engine and
turned into an Unknown verdict with a machine-readable reason.
"""

from __future__ import annotations


class FpiError(Exception):
    """Base class for every error this package raises on purpose."""


class FpiSyntaxError(FpiError):
    """Lexical or grammatical error, carries file:line:col."""

    def __init__(self, message: str, filename: str = "<input>", line: int = 0, col: int = 0):
        self.filename = filename
        self.line = line
        self.col = col
        super().__init__(f"{filename}:{line}:{col}: {message}")


class GrammarViolation(FpiSyntaxError):
    """Structurally valid text that falls outside the accepted fragment
    (nested loops, assignment to a loop counter, bad loop header, ...)."""


class SpecViolation(FpiSyntaxError):
    """assume/assert formula outside the accepted fragment."""


class SsaUnsupported(FpiError):
    """Renaming would need a merge the fragment cannot express."""


class FpiRuntimeError(FpiError):
    """Base class for interpreter runtime errors."""

    def __init__(self, message: str, sid: int | None = None):
        self.sid = sid
        super().__init__(message)


class OutOfBounds(FpiRuntimeError):
    pass


class DivByZero(FpiRuntimeError):
    pass


class NegativeExponent(FpiRuntimeError):
    pass


class TransformError(FpiError):
    """Verification-time obstruction; `reason` feeds the Unknown verdict."""

    reason = "TransformError"


class NonConstantPeel(TransformError):
    reason = "NonConstantPeel"


class BranchNotStable(TransformError):
    reason = "BranchNotStable"


class UnhandledOperator(TransformError):
    reason = "UnhandledOperator"


class NoProgress(TransformError):
    """Weakest-precondition computation blocked by a loop it cannot cross."""

    reason = "NoProgressWP"


class EncodingUnsupported(TransformError):
    """Term shape the SMT encoding refuses (e.g. symbolic exponent)."""

    reason = "SolverUnknown"


class SolverFailure(FpiError):
    """The external solver crashed, timed out, or spoke garbage."""
