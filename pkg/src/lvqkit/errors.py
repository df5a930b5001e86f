"""Exception types shared across the toolkit.

The class name doubles as the machine-parsable error code printed by the
command line front end.
"""


class LvqError(Exception):
    """Base class for all toolkit errors."""

    @property
    def code(self) -> str:
        return type(self).__name__


class DegenerateVector(LvqError):
    """A (restricted) norm fell below the 1e-12 degeneracy threshold."""


class EmptyMask(LvqError):
    """No dimension of a sample is observed."""


class MissingNotSupported(LvqError):
    """A Euclidean variant received a sample with missing dimensions."""


class ZeroDenominator(LvqError):
    """Margin denominator dJ + dK is (numerically) zero."""


class EmptyClass(LvqError):
    """A class has no samples where at least one is required."""


class NonFinite(LvqError):
    """A model parameter became non-finite during training."""


class FormatError(LvqError):
    """Malformed input file or model document."""


class ClassTooSmall(LvqError):
    """A class has fewer samples than the number of CV folds."""


class TooFewSamples(LvqError):
    """A class is too small to oversample (fewer than 2 samples)."""


class RankUnsupported(LvqError):
    """Sphere export requires a projection rank of 2 or 3."""


class UnsupportedVariant(LvqError):
    """The requested operation is not defined for this model variant."""
