"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the admissible domain of an operation."""


class GridMismatchError(ValueError):
    """Two objects that must share a time grid do not."""


class ConvergenceError(RuntimeError):
    """A numerical procedure failed to reach its tolerance."""


class MemoryBoundError(ValueError):
    """A requested tensor exceeds the configured cell budget."""


class InsufficientDataError(ValueError):
    """Not enough samples or sweep points for the requested statistic."""
