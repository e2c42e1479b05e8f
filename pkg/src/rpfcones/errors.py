"""Exception types shared across the package."""


class RpfConesError(Exception):
    """Base class for all package errors."""


class DomainError(RpfConesError, ValueError):
    """A point lies outside the domain of a grid or stage."""


class GridMismatchError(RpfConesError, TypeError):
    """Two objects that must share a grid do not."""


class DegenerateInputError(RpfConesError, ValueError):
    """Input is zero (or otherwise degenerate) where a nonzero element is required."""


class ConePreconditionError(RpfConesError, ValueError):
    """An element that must lie in a cone does not."""


class ApertureViolationError(RpfConesError, ValueError):
    """A dual-cone functional vanishes on a nonzero cone element."""


class TruncationError(RpfConesError, ValueError):
    """A truncated branch sum or tower leaves more mass than allowed."""


class PairingError(RpfConesError, ValueError):
    """Preimage pairing requested for points that are too far apart."""


class OrbitError(RpfConesError, ValueError):
    """A forward orbit left the domain."""

    def __init__(self, message: str, step: int):
        super().__init__(f"{message} (step {step})")
        self.step = step


class ConfigError(RpfConesError, ValueError):
    """Invalid parameters or configuration."""


class ConvergenceError(RpfConesError, RuntimeError):
    """An iteration failed to converge; carries the residual trace."""

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = list(trace) if trace is not None else []


class DegeneracyError(RpfConesError, RuntimeError):
    """An eigenvalue or normalizer collapsed to (near) zero."""


class DerivativeInconsistencyError(RpfConesError, RuntimeError):
    """Two derivative estimates disagree beyond their combined error."""


class DegenerateCLTError(RpfConesError, ValueError):
    """The asymptotic variance vanishes, so the CLT normalization is undefined."""
