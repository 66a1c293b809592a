"""
Exception hierarchy for the cfp package.
"""

from typing import Any, Dict, Optional


class CFPError(Exception):
    """Base class for every error raised by cfp."""


class CapacityError(CFPError, ValueError):
    """N lies outside the enumerable range."""


class DomainError(CFPError, ValueError):
    """A parameter or argument is outside the operation's domain."""


class StochasticityError(CFPError, ValueError):
    """A walk table row does not sum to one."""


class KernelFileError(CFPError, ValueError):
    """A kernel table file is malformed."""


class SolverError(CFPError, RuntimeError):
    """A propagator could not meet its tolerance."""

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}

    def __str__(self) -> str:
        if not self.diagnostics:
            return super().__str__()
        details = ", ".join(f"{k}={v}" for k, v in sorted(self.diagnostics.items()))
        return f"{super().__str__()} ({details})"
