"""Micro-averaged precision/recall/F1 over unordered entity tuples.

A prediction is correct only when both its phrase and its tag equal a
ground-truth tuple; matching is one-to-one on multisets, so a duplicated
prediction beyond the ground-truth multiplicity is a false positive.
Includes the fine-to-combined label mapping used at evaluation time.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .errors import UnknownFineTag
from .tagformat import read_config_pairs

# mapping target that marks a fine tag as dropped from combined-set scoring
DISCARD = "DISCARD"


@dataclass(frozen=True)
class TupleMatchResult:
    true_positive: int
    false_positive: int
    false_negative: int
    matched_pairs: tuple

    def __add__(self, other):
        return TupleMatchResult(
            self.true_positive + other.true_positive,
            self.false_positive + other.false_positive,
            self.false_negative + other.false_negative,
            (),
        )


def _tuple_key(item):
    """(tag, phrase) of a mention or a bare pair; spans never matter here."""
    if hasattr(item, "tag"):
        return (item.tag, item.phrase)
    tag, phrase = item
    return (tag, phrase)


def match_tuples(gt, pred):
    """Match predicted (tag, phrase) tuples against ground truth.

    The lists are unordered and word positions are ignored: a prediction
    is correct when tag and phrase both equal a ground-truth tuple. Each
    prediction consumes at most one ground-truth occurrence; first
    unconsumed occurrence wins, which on exact-equality edges is a maximum
    one-to-one matching. Order of either list does not affect the
    counters.
    """
    gt_keys = [_tuple_key(item) for item in gt]
    consumed = [False] * len(gt_keys)
    pairs = []
    pred_count = 0
    for pred_index, item in enumerate(pred):
        pred_count += 1
        key = _tuple_key(item)
        for gt_index, gt_key in enumerate(gt_keys):
            if not consumed[gt_index] and gt_key == key:
                consumed[gt_index] = True
                pairs.append((gt_index, pred_index))
                break
    tp = len(pairs)
    return TupleMatchResult(tp, pred_count - tp, len(gt_keys) - tp, tuple(pairs))


@dataclass(frozen=True)
class PrfScores:
    precision: float
    recall: float
    f1: float
    degenerate: bool
    true_positive: int
    false_positive: int
    false_negative: int


def micro_prf(results):
    """Pool counters across utterances and compute precision/recall/F1.

    A 0/0 ratio is reported as 0 and flags the result degenerate.
    """
    tp = sum(r.true_positive for r in results)
    fp = sum(r.false_positive for r in results)
    fn = sum(r.false_negative for r in results)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    # tp == 0 forces F1 into 0/0 (and P or R whenever their denominators
    # are empty too), so it is exactly the degenerate case.
    return PrfScores(precision, recall, f1, tp == 0, tp, fp, fn)


class LabelMapping:
    """Total map from a fine tag set onto a combined tag set."""

    def __init__(self, pairs):
        self._map = dict(pairs)

    @classmethod
    def from_file(cls, path):
        """Load from `FINE<TAB>COMBINED` lines; same format as a tag map."""
        return cls(read_config_pairs(path))

    @property
    def fine_tags(self):
        return tuple(self._map)

    @property
    def combined_tags(self):
        return tuple(sorted(set(self._map.values())))

    def apply(self, tag):
        try:
            return self._map[tag]
        except KeyError:
            raise UnknownFineTag(f"tag {tag!r} not in label mapping") from None


def map_labels(mentions, mapping):
    """Replace each mention's tag via the mapping; spans stay untouched.

    Adjacent mentions that end up with the same combined tag are not
    merged.
    """
    return [replace(m, tag=mapping.apply(m.tag)) for m in mentions]
