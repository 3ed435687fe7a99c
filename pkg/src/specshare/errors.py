"""Exception types raised across the package."""


class SpecShareError(Exception):
    """Base class for all package errors."""


class ParameterError(SpecShareError, ValueError):
    """An argument is outside its documented domain."""


class StateError(SpecShareError, RuntimeError):
    """An operation was called before its inputs were prepared."""


class InfeasibleError(SpecShareError, ValueError):
    """No allocation can meet the requested constraint."""


class UnboundedPowerError(SpecShareError, ValueError):
    """Both multipliers vanish, so the per-state power is unbounded."""


class ConsistencyError(SpecShareError, RuntimeError):
    """Stored quantities contradict each other (e.g. a corrupted cross gain)."""


class ResourceError(SpecShareError, RuntimeError):
    """A brute-force search would exceed its configured cell budget."""


class RangeError(SpecShareError, ValueError):
    """A requested interpolation target lies outside a curve's span."""
