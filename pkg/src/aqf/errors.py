"""Exception types shared across the package."""


class FilterError(Exception):
    """Base class for filter-level failures."""


class InvalidConfigError(FilterError, ValueError):
    """Configuration parameters out of range or inconsistent."""


class FilterFullError(FilterError):
    """Insert or extension would exceed the load limit, or no free slot is reachable."""


class AdaptationExhaustedError(FilterError):
    """Adapting would push a fingerprint past the extension limit."""


class NotFoundError(FilterError, KeyError):
    """Requested key, fingerprint, or rank does not exist."""


class StateCorruptionError(FilterError):
    """Filter and reverse map disagree; the pair is no longer trustworthy."""


class ConfigMismatchError(FilterError, ValueError):
    """Two filters were combined that do not share (q, r, seed)."""


class UnsortedInputError(FilterError, ValueError):
    """Bulk load input violated the required hash order."""


class FormatError(FilterError, ValueError):
    """Snapshot bytes are malformed, truncated, or carry a bad magic/version."""


class ConstructionFailedError(FilterError):
    """Static yes/no construction ran out of space before exhausting the no-list.

    Carries enough context to tell an undersized budget apart from bad luck.
    """

    def __init__(self, message: str, consumed_bits: int = 0, budget_bits: int = 0):
        super().__init__(message)
        self.consumed_bits = consumed_bits
        self.budget_bits = budget_bits
