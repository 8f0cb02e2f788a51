"""Exception hierarchy shared by all modules."""


class MCSError(ValueError):
    """Base class for invalid sample sets, labels and files."""


class FormatError(MCSError):
    """Malformed file: bad magic, unreadable header, truncated payload."""


class DimensionError(MCSError):
    """Declared dimensions disagree with the data, or an index is out of range."""


class ProbabilityError(MCSError):
    """A value is outside [0, 1], not finite, or a row does not sum to 1."""


class DegenerateStatisticError(ValueError):
    """A statistic is undefined for the given input (e.g. rank correlation of a constant series)."""
