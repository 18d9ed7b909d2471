"""Error categories for entity predictions against ground truth.

Every ground-truth entity receives exactly one gt-side category and every
prediction not consumed along the way receives exactly one pred-side
category, so the report is exhaustive by construction. Assignment runs in
six stages, each shrinking the unmatched sets:

1. exact (tag, phrase) matches            -> correct_match
2. same phrase, different tag             -> tag_confusion
3. same-tag prediction strictly containing a correctly transcribed
   ground-truth phrase                    -> over_detection
4. cross-tag containment or any shared
   word between the phrases              -> partial_overlap
5. leftover ground truth, by whether its words were decoded
                                          -> missed_correct_asr / missed_incorrect_asr
6. leftover predictions, by whether their words align as matches
                                          -> false_correct_asr / false_incorrect_asr
"""

from __future__ import annotations

from dataclasses import dataclass

from .alignment import MATCH, word_align
from .errors import InvalidMention, NoGroundTruthEntities
from .tagformat import strip_tags

CORRECT_MATCH = "correct_match"
TAG_CONFUSION = "tag_confusion"
OVER_DETECTION = "over_detection"
PARTIAL_OVERLAP = "partial_overlap"
MISSED_CORRECT_ASR = "missed_correct_asr"
MISSED_INCORRECT_ASR = "missed_incorrect_asr"
FALSE_CORRECT_ASR = "false_correct_asr"
FALSE_INCORRECT_ASR = "false_incorrect_asr"

GT_CATEGORIES = (
    CORRECT_MATCH,
    TAG_CONFUSION,
    OVER_DETECTION,
    PARTIAL_OVERLAP,
    MISSED_CORRECT_ASR,
    MISSED_INCORRECT_ASR,
)
PRED_CATEGORIES = (FALSE_CORRECT_ASR, FALSE_INCORRECT_ASR)
ALL_CATEGORIES = GT_CATEGORIES + PRED_CATEGORIES


@dataclass(frozen=True)
class CategoryTrace:
    """Category assignment for one entity, with its alignment evidence."""

    utt_id: str
    side: str  # "gt" or "pred"
    tag: str
    phrase: str
    category: str
    aligned_hyp_words: tuple
    counterpart: str | None = None

    def as_dict(self):
        return {
            "utt_id": self.utt_id,
            "side": self.side,
            "tag": self.tag,
            "phrase": self.phrase,
            "category": self.category,
            "aligned_hyp_words": list(self.aligned_hyp_words),
            "counterpart": self.counterpart,
        }


def _validate(mentions, words, what):
    for mention in mentions:
        span = " ".join(words[mention.start_word : mention.end_word])
        if span != mention.phrase:
            raise InvalidMention(
                f"{what} mention {mention.phrase!r} does not match its span {span!r}"
            )


def _strictly_contains(outer, inner):
    """Proper contiguous word-level containment."""
    if len(inner) >= len(outer):
        return False
    return any(
        outer[i : i + len(inner)] == inner for i in range(len(outer) - len(inner) + 1)
    )


def categorize(ref_text, gt_mentions, hyp_text, pred_mentions, tagmap=None, utt_id=""):
    """Assign every entity of one utterance to its error category.

    Parameters
    ----------
    ref_text, hyp_text : str
        Plain transcripts; any delimiters are stripped first when a tagmap
        is supplied.
    gt_mentions : list of EntityMention (spans into ref_text)
    pred_mentions : list of EntityMention (spans into hyp_text)
    tagmap : TagMap, optional
    utt_id : str
        Echoed into each trace.

    Returns
    -------
    list of CategoryTrace
        Ground-truth traces in mention order, then pred-side traces for
        the predictions no gt-side stage consumed.
    """
    if tagmap is not None:
        ref_text = strip_tags(ref_text, tagmap)
        hyp_text = strip_tags(hyp_text, tagmap)
    ref_words = ref_text.split()
    hyp_words = hyp_text.split()
    _validate(gt_mentions, ref_words, "ground-truth")
    _validate(pred_mentions, hyp_words, "predicted")

    alignment = word_align(ref_words, hyp_words)
    matched_ref = alignment.matched_ref_indices()
    matched_hyp = alignment.matched_hyp_indices()

    def gt_transcribed(mention):
        return all(i in matched_ref for i in range(mention.start_word, mention.end_word))

    def pred_transcribed(mention):
        return all(i in matched_hyp for i in range(mention.start_word, mention.end_word))

    def hyp_span_for_gt(mention):
        indices = sorted(
            op.hyp_index
            for op in alignment.ops
            if op.ref_index is not None
            and mention.start_word <= op.ref_index < mention.end_word
            and op.hyp_index is not None
        )
        return tuple(hyp_words[i] for i in indices)

    gt = list(gt_mentions)
    pred = list(pred_mentions)
    gt_category = {}
    gt_counterpart = {}
    gt_free = set(range(len(gt)))
    pred_free = set(range(len(pred)))

    def consume(gt_index, pred_index, category):
        gt_category[gt_index] = category
        gt_counterpart[gt_index] = pred[pred_index].phrase
        gt_free.discard(gt_index)
        pred_free.discard(pred_index)

    # Stage 1: exact matches, first free ground-truth occurrence wins so
    # the count agrees with match_tuples.
    for p in range(len(pred)):
        for g in sorted(gt_free):
            if gt[g].tag == pred[p].tag and gt[g].phrase == pred[p].phrase:
                consume(g, p, CORRECT_MATCH)
                break

    # Stage 2: identical phrase under a different tag.
    for g in sorted(gt_free):
        for p in sorted(pred_free):
            if gt[g].phrase == pred[p].phrase and gt[g].tag != pred[p].tag:
                consume(g, p, TAG_CONFUSION)
                break

    # Stage 3: same-tag prediction strictly containing a correctly
    # transcribed ground-truth phrase; leftmost ground truth wins.
    for p in range(len(pred)):
        if p not in pred_free:
            continue
        for g in sorted(gt_free, key=lambda g: (gt[g].start_word, g)):
            if (
                gt[g].tag == pred[p].tag
                and _strictly_contains(pred[p].words(), gt[g].words())
                and gt_transcribed(gt[g])
            ):
                consume(g, p, OVER_DETECTION)
                break

    # Stage 4: containment under a different tag, or any shared word.
    for p in range(len(pred)):
        if p not in pred_free:
            continue
        for g in sorted(gt_free, key=lambda g: (gt[g].start_word, g)):
            cross_tag_containment = gt[g].tag != pred[p].tag and (
                _strictly_contains(pred[p].words(), gt[g].words())
                or _strictly_contains(gt[g].words(), pred[p].words())
            )
            shared_word = bool(set(gt[g].words()) & set(pred[p].words()))
            if cross_tag_containment or shared_word:
                consume(g, p, PARTIAL_OVERLAP)
                break

    # Stage 5: remaining ground truth was missed; split by transcription.
    for g in sorted(gt_free):
        gt_category[g] = MISSED_CORRECT_ASR if gt_transcribed(gt[g]) else MISSED_INCORRECT_ASR
        gt_counterpart[g] = None

    traces = [
        CategoryTrace(
            utt_id,
            "gt",
            gt[g].tag,
            gt[g].phrase,
            gt_category[g],
            hyp_span_for_gt(gt[g]),
            gt_counterpart[g],
        )
        for g in range(len(gt))
    ]

    # Stage 6: remaining predictions are false detections; split by
    # whether their words were themselves correctly transcribed.
    for p in range(len(pred)):
        if p not in pred_free:
            continue
        category = FALSE_CORRECT_ASR if pred_transcribed(pred[p]) else FALSE_INCORRECT_ASR
        traces.append(
            CategoryTrace(
                utt_id,
                "pred",
                pred[p].tag,
                pred[p].phrase,
                category,
                tuple(pred[p].words()),
                None,
            )
        )
    return traces


@dataclass(frozen=True)
class CategoryReport:
    """Counts and rates per category, normalized by ground-truth entities."""

    total_gt: int
    counts: dict

    def rate(self, category):
        return self.counts[category] / self.total_gt

    @property
    def rates(self):
        return {category: self.rate(category) for category in ALL_CATEGORIES}

    def as_dict(self):
        return {
            "total_gt": self.total_gt,
            "counts": dict(self.counts),
            "rates": self.rates,
        }


def aggregate(traces):
    """Pool traces into a CategoryReport.

    Pred-side rates share the ground-truth denominator, so only gt-side
    rates are guaranteed to sum to 1.
    """
    counts = {category: 0 for category in ALL_CATEGORIES}
    total_gt = 0
    for trace in traces:
        counts[trace.category] += 1
        if trace.side == "gt":
            total_gt += 1
    if total_gt == 0:
        raise NoGroundTruthEntities("cannot normalize rates without ground-truth entities")
    return CategoryReport(total_gt, counts)
