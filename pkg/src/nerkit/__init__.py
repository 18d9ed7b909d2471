"""Toolkit for tag-delimited spoken NER.

Covers the evaluation and decoding machinery around end-to-end spoken
named entity recognition: encoding and parsing of transcripts with inline
entity delimiters, WER / NE accuracy / micro-F1 metrics, an error-category
report, back-off n-gram language model training, CTC beam search with LM
fusion, and pseudo-label dataset construction over pluggable backends.
"""

__version__ = "0.1.0"

from . import errors

__all__ = ["errors", "__version__"]
