"""Exception hierarchy shared across the package."""


class FrameportError(Exception):
    """Base class for all frameport errors."""


class ParseError(FrameportError):
    """Source text does not parse under the supported grammar subset."""


class UnknownCallableError(FrameportError):
    """A framework-prefixed call is not in the signature database (strict mode)."""


class ArityError(FrameportError):
    """A positional argument has no matching parameter in the signature."""


class DuplicateKeywordError(FrameportError):
    """A converted positional argument collides with an explicit keyword."""


class OverlapError(FrameportError):
    """Keyword occurrence spans overlap."""


class SkeletonError(FrameportError):
    """Generic skeleton construction/reinsertion failure."""


class MissingTranslationError(SkeletonError):
    """A placeholder in the target skeleton has no translation entry."""


class ResidualPlaceholderError(SkeletonError):
    """Reinsertion output still contains a placeholder token."""


class ExpansionContextError(SkeletonError):
    """A one-to-many expansion was requested outside a list/sequential context."""


class PlaceholderMismatch(FrameportError):
    """Placeholder indices of the target skeleton do not match the source."""

    def __init__(self, missing=(), duplicate=(), extra=()):
        self.missing = sorted(missing)
        self.duplicate = sorted(duplicate)
        self.extra = sorted(extra)
        super().__init__(
            f"placeholder mismatch: missing={self.missing} "
            f"duplicate={self.duplicate} extra={self.extra}"
        )


class BackendUnavailable(FrameportError):
    """Completion backend unreachable after retries."""


class StopMarkerMissing(FrameportError):
    """Backend completion did not terminate at the template's stop marker."""


class MissingVectorError(FrameportError):
    """File-backed embedding provider has no record for an occurrence."""


class DimensionMismatch(FrameportError):
    """Array shapes are inconsistent with the declared dimensions."""


class LabelOutOfRange(FrameportError):
    """A class label lies outside [0, num_classes)."""


class CacheMismatch(FrameportError):
    """Backward pass received a cache from a different forward configuration."""


class ZeroVectorError(FrameportError):
    """Cosine similarity requested for a zero-norm embedding."""


class KOutOfRange(FrameportError):
    """CSLS neighborhood size is not in [1, min(m1, m2)]."""


class EmptyVocabularyError(FrameportError):
    """Dictionary generation requires at least one keyword per framework."""


class EmptyDictionaryError(FrameportError):
    """The induced dictionary has no pairs to score."""


class UnmappedKeyword(FrameportError):
    """Dictionary lookup found no entry for the keyword."""


class ConfigError(FrameportError):
    """Invalid configuration file or flag combination."""
