"""Exception types shared across the package."""

from __future__ import annotations


class InvalidGridError(ValueError):
    """Grid resolution violates the lattice requirements (odd or too small)."""


class IncompatibleGridsError(ValueError):
    """Two fields do not live on the same wavenumber lattice."""


class InvalidCutoffError(ValueError):
    """Projection cutoff outside [1, dealias_cutoff]."""


class ContractViolationError(ValueError):
    """An input field violates a documented precondition (e.g. nonzero mean)."""


class ForcingError(ValueError):
    """Forcing specification is inconsistent or out of the retained band."""


class ZeroForceError(ValueError):
    """Shape factors are undefined for a zero forcing field."""


class BlowUpError(RuntimeError):
    """Time integration produced non-finite or runaway coefficients."""

    def __init__(self, message: str, t: float):
        super().__init__(message)
        self.t = t


class DegenerateDenominatorError(ArithmeticError):
    """Update-formula denominator is zero or below threshold; caller must skip."""


class WindowTooShortError(ValueError):
    """A time-series window has too few samples for the requested stencil."""


class ConfigError(ValueError):
    """Configuration file failed to parse or validate.

    ``problems`` lists every violation found, not just the first.
    """

    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = list(problems)
