"""Exception types shared across the toolkit.

Every error raised by the library derives from ToolkitError so callers can
catch one base class at the boundary. Modules raise the most specific type.
"""


class ToolkitError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(ToolkitError):
    """A config file (tag map, label map) is malformed."""


class UnknownTag(ToolkitError):
    """A mention references a tag absent from the tag map."""


class OverlapError(ToolkitError):
    """Two mentions claim overlapping word spans."""


class InvalidMention(ToolkitError):
    """A mention is inconsistent with its transcript."""


class MalformedTagging(ToolkitError):
    """Strict parsing hit an unclosed, stray, nested, or empty span."""

    def __init__(self, kind, word_index, message=None):
        self.kind = kind
        self.word_index = word_index
        super().__init__(message or f"{kind} at word {word_index}")


class EmptyReference(ToolkitError):
    """WER asked for with an empty reference."""


class UnknownFineTag(ToolkitError):
    """Label mapping applied to a tag outside its domain."""


class NoGroundTruthEntities(ToolkitError):
    """Category rates requested with zero ground-truth entities."""


class EmptyCorpus(ToolkitError):
    """LM training or perplexity over an empty corpus."""


class OrderOutOfRange(ToolkitError):
    """N-gram order outside the supported 1..5 range."""


class InvalidAlphabet(ToolkitError):
    """Decoder alphabet unusable for the requested mode."""


class BeamWidthZero(ToolkitError):
    """Beam search asked for with beam width below 1."""


class SequenceLongerThanFrames(ToolkitError):
    """A label sequence cannot fit into the posterior frames."""


class ManifestError(ToolkitError):
    """A dataset manifest violates its invariants."""


class BackendFailure(ToolkitError):
    """A labeling backend failed beyond per-record salvage."""


class IncompatibleMethod(ToolkitError):
    """Pseudo-labeling method applied to the wrong external data type."""


class DuplicateLabel(ToolkitError):
    """Two reports carry the same method/data-type label."""
