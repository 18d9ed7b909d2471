"""Opaque resource handles shared by the call families.

A handle pins one immutable core resource. Hosts pass handles back into
binding calls but never look inside them; the attributes are private to
this package. Handles are safe to share across threads because nothing
mutates them after construction.
"""

from pathlib import Path

from nerkit.lm import ArpaLm
from nerkit.tagformat import TagMap


class BoundHandle:
    __slots__ = ("_kind", "_core", "_raw")

    def __init__(self, kind, core, raw):
        object.__setattr__(self, "_kind", kind)
        object.__setattr__(self, "_core", core)
        object.__setattr__(self, "_raw", raw)

    def __setattr__(self, name, value):
        raise AttributeError("handles are immutable")

    def __delattr__(self, name):
        raise AttributeError("handles are immutable")

    @property
    def kind(self):
        return self._kind

    def __repr__(self):
        return f"BoundHandle(kind={self._kind!r})"


def _load(kind, path, parse):
    # Imported here, not at module level: mirror.py imports this module.
    from .mirror import BoundError, code_for_error

    try:
        raw = Path(path).read_bytes()
        return BoundHandle(kind, parse(), raw)
    except Exception as exc:
        code, error_type = code_for_error(exc)
        if code is None:
            raise
        raise BoundError(code, error_type, str(exc)) from exc


def load_tagmap(path):
    """Handle for a tag map config file (TAG<TAB>char lines)."""
    return _load("tagmap", path, lambda: TagMap.from_file(path))


def load_lm(path):
    """Handle for a language model in ARPA text form."""
    return _load("lm", path, lambda: ArpaLm.read_arpa(path))


def decoder_config(beam=500, alpha=1.0, beta=0.5, nbest=10, greedy=False):
    """Handle freezing one set of decoder settings."""
    settings = {
        "alpha": float(alpha),
        "beam": int(beam),
        "beta": float(beta),
        "greedy": bool(greedy),
        "nbest": int(nbest),
    }
    return BoundHandle("decoder_config", settings, None)


def decoder_settings(config):
    """Decoder settings from None (defaults), a decoder_config handle, or a dict."""
    if config is None:
        config = decoder_config()
    elif isinstance(config, dict):
        config = decoder_config(**config)
    return dict(core_of(config, "decoder_config"))


def core_of(handle, kind):
    """Unwrap a handle for sibling modules; rejects the wrong kind."""
    if not isinstance(handle, BoundHandle) or handle._kind != kind:
        raise TypeError(f"expected a {kind} handle, got {handle!r}")
    return handle._core


def raw_of(handle, kind):
    """Raw file bytes behind a handle, for the CLI mirror."""
    if not isinstance(handle, BoundHandle) or handle._kind != kind:
        raise TypeError(f"expected a {kind} handle, got {handle!r}")
    return handle._raw
