"""In-process bindings around the nerkit toolkit.

Exposes the toolkit's text, metric, taxonomy, and decoding operations to
host code that should never see core objects: every value crossing this
boundary is a plain string, number, list, or dict. Heavyweight resources
(tag maps, language models, decoder settings) travel as opaque immutable
handles. The eval and decode mirrors shell out to the command line tool,
so their outputs match it byte for byte after canonical JSON dumping.
"""

__version__ = "0.1.0"

from .handles import BoundHandle, decoder_config, load_lm, load_tagmap
from .calls import (
    beam_decode,
    categorize,
    encode_tagged,
    match_tuples,
    micro_prf,
    ne_acc,
    parse_tagged,
    wer,
)
from .mirror import BoundError, bind_decode, bind_eval

__all__ = [
    "BoundError",
    "BoundHandle",
    "__version__",
    "beam_decode",
    "bind_decode",
    "bind_eval",
    "categorize",
    "decoder_config",
    "encode_tagged",
    "load_lm",
    "load_tagmap",
    "match_tuples",
    "micro_prf",
    "ne_acc",
    "parse_tagged",
    "wer",
]
