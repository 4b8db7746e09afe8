"""Small dense linear-programming solver used by every synthesis routine."""

from .program import LinearProgram, LpError, LpIterationLimit, LpResult, LpStatus, solve, violations

__all__ = ["LinearProgram", "LpError", "LpIterationLimit", "LpResult", "LpStatus", "solve", "violations"]
