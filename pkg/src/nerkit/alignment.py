"""Word-level Levenshtein alignment, WER and entity decoding accuracy.

WER follows the usual convention: minimal edit cost between reference and
hypothesis word sequences divided by the reference length. An entity phrase
counts as correctly decoded when every one of its reference words lands on
a match operation in the minimal alignment, which is stricter than asking
whether the phrase appears somewhere in the hypothesis.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .errors import EmptyReference

MATCH = "match"
SUBSTITUTE = "substitute"
INSERT = "insert"
DELETE = "delete"


@dataclass(frozen=True)
class EditOp:
    kind: str
    ref_index: int | None
    hyp_index: int | None


@dataclass(frozen=True)
class AlignmentOps:
    """One minimal-cost word alignment between a reference and a hypothesis."""

    ops: tuple

    @property
    def cost(self):
        return sum(1 for op in self.ops if op.kind != MATCH)

    def count(self, kind):
        return sum(1 for op in self.ops if op.kind == kind)

    def matched_ref_indices(self):
        return frozenset(op.ref_index for op in self.ops if op.kind == MATCH)

    def matched_hyp_indices(self):
        return frozenset(op.hyp_index for op in self.ops if op.kind == MATCH)


def word_align(ref, hyp):
    """Align two word sequences at minimal edit cost.

    Parameters
    ----------
    ref, hyp : sequence of str

    Returns
    -------
    AlignmentOps
        Deterministic: the backtrace prefers match, then delete, then
        substitute, then insert whenever several choices stay minimal.
    """
    ref = list(ref)
    hyp = list(hyp)
    rows = len(ref) + 1
    cols = len(hyp) + 1
    dist = [[0] * cols for _ in range(rows)]
    for i in range(1, rows):
        dist[i][0] = i
    for j in range(1, cols):
        dist[0][j] = j
    for i in range(1, rows):
        row = dist[i]
        prev = dist[i - 1]
        ref_word = ref[i - 1]
        for j in range(1, cols):
            same = 0 if ref_word == hyp[j - 1] else 1
            row[j] = min(prev[j - 1] + same, prev[j] + 1, row[j - 1] + 1)

    ops = []
    i, j = len(ref), len(hyp)
    while i > 0 or j > 0:
        here = dist[i][j]
        if i > 0 and j > 0 and ref[i - 1] == hyp[j - 1] and dist[i - 1][j - 1] == here:
            ops.append(EditOp(MATCH, i - 1, j - 1))
            i -= 1
            j -= 1
        elif i > 0 and dist[i - 1][j] + 1 == here:
            ops.append(EditOp(DELETE, i - 1, None))
            i -= 1
        elif i > 0 and j > 0 and dist[i - 1][j - 1] + 1 == here:
            ops.append(EditOp(SUBSTITUTE, i - 1, j - 1))
            i -= 1
            j -= 1
        else:
            ops.append(EditOp(INSERT, None, j - 1))
            j -= 1
    ops.reverse()
    return AlignmentOps(tuple(ops))


def wer(ref, hyp):
    """Word error rate as an exact fraction; may exceed 1."""
    ref_words = ref.split()
    hyp_words = hyp.split()
    if not ref_words:
        raise EmptyReference("reference has no words")
    return Fraction(word_align(ref_words, hyp_words).cost, len(ref_words))


def corpus_wer(pairs):
    """Pooled WER over (ref, hyp) pairs: total edit cost over total ref words."""
    total_cost = 0
    total_words = 0
    for ref, hyp in pairs:
        ref_words = ref.split()
        total_cost += word_align(ref_words, hyp.split()).cost
        total_words += len(ref_words)
    if total_words == 0:
        raise EmptyReference("corpus has no reference words")
    return Fraction(total_cost, total_words)


def mention_correctly_decoded(mention, alignment):
    """True when every reference word of the mention is a match op."""
    matched = alignment.matched_ref_indices()
    return all(index in matched for index in range(mention.start_word, mention.end_word))


def ne_acc(ref_text, mentions, hyp_text):
    """Fraction of mentions whose words all survive decoding, or None.

    None marks the undefined case of an empty mention set; report it as
    n/a, never as 0.
    """
    flags = mention_decoding_flags(ref_text, mentions, hyp_text)
    if not flags:
        return None
    return Fraction(sum(flags), len(flags))


def mention_decoding_flags(ref_text, mentions, hyp_text):
    """Per-mention correctness flags, for pooling across a corpus."""
    if not mentions:
        return []
    alignment = word_align(ref_text.split(), hyp_text.split())
    return [mention_correctly_decoded(m, alignment) for m in mentions]


def corpus_ne_acc(utterances):
    """Pooled NE accuracy over (ref_text, mentions, hyp_text) triples."""
    flags = []
    for ref_text, mentions, hyp_text in utterances:
        flags.extend(mention_decoding_flags(ref_text, mentions, hyp_text))
    if not flags:
        return None
    return Fraction(sum(flags), len(flags))
