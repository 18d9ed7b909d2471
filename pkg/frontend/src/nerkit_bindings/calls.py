"""The five bound call families, in process.

Inputs and outputs are plain values: mention dicts, (tag, phrase) pairs,
float matrices, lists. Core exceptions never escape; they are rewrapped
as BoundError carrying the same code the command line tool would exit
with.
"""

from types import SimpleNamespace

import nerkit.alignment as _alignment
import nerkit.ctc as _ctc
import nerkit.nermetrics as _nermetrics
import nerkit.tagformat as _tagformat
import nerkit.taxonomy as _taxonomy

from .handles import core_of, decoder_settings
from .mirror import BoundError, code_for_error


def _guard(func, *args, **kwargs):
    """Run a core call; rewrap core failures with their tool exit code."""
    try:
        return func(*args, **kwargs)
    except Exception as exc:  # noqa: BLE001 - single rewrap point
        code, error_type = code_for_error(exc)
        if code is None:
            raise
        raise BoundError(code, error_type, str(exc)) from None


def _mention_out(mention):
    return {
        "phrase": mention.phrase,
        "start_word": mention.start_word,
        "tag": mention.tag,
        "word_count": mention.word_count,
    }


def _mention_in(value):
    if isinstance(value, dict):
        return _tagformat.EntityMention(
            value["tag"], value["phrase"], value["start_word"], value["word_count"]
        )
    if not isinstance(value, (list, tuple)) or len(value) != 4:
        raise TypeError(
            "mention must be a dict or a (tag, phrase, start_word, word_count) "
            f"sequence, got {value!r}"
        )
    tag, phrase, start_word, word_count = value
    return _tagformat.EntityMention(tag, phrase, start_word, word_count)


def _diag_out(diagnostic):
    return {
        "kind": diagnostic.kind,
        "tag": diagnostic.tag,
        "word_index": diagnostic.word_index,
    }


def parse_tagged(tagmap, tagged_text, policy="recover"):
    """Parse one tagged line into plain text, mention dicts, diagnostics."""
    plain, mentions, diagnostics = _guard(
        _tagformat.parse_tagged, tagged_text, core_of(tagmap, "tagmap"), policy
    )
    return {
        "diagnostics": [_diag_out(d) for d in diagnostics],
        "mentions": [_mention_out(m) for m in mentions],
        "plain_text": plain,
    }


def encode_tagged(tagmap, plain_text, mentions):
    """Inverse of parse_tagged for well-formed mention dicts."""

    def run():
        core_mentions = [_mention_in(m) for m in mentions]
        return _tagformat.encode_tagged(
            plain_text, core_mentions, core_of(tagmap, "tagmap")
        )

    return _guard(run)


def wer(ref_text, hyp_text):
    """Word error rate of one pair, as a float."""
    return float(_guard(_alignment.wer, ref_text, hyp_text))


def ne_acc(ref_text, mentions, hyp_text):
    """Share of mentions fully preserved by the hypothesis; None if no mentions."""

    def run():
        core_mentions = [_mention_in(m) for m in mentions]
        return _alignment.ne_acc(ref_text, core_mentions, hyp_text)

    value = _guard(run)
    return None if value is None else float(value)


def match_tuples(gt_pairs, pred_pairs):
    """Count tuple matches between two (tag, phrase) pair lists."""
    result = _guard(
        _nermetrics.match_tuples,
        [tuple(p) for p in gt_pairs],
        [tuple(p) for p in pred_pairs],
    )
    return {
        "false_negative": result.false_negative,
        "false_positive": result.false_positive,
        "matched_pairs": [list(pair) for pair in result.matched_pairs],
        "true_positive": result.true_positive,
    }


def micro_prf(results):
    """Pool per-utterance count dicts into precision/recall/F1."""
    pooled = _guard(
        _nermetrics.micro_prf,
        [
            SimpleNamespace(
                true_positive=r["true_positive"],
                false_positive=r["false_positive"],
                false_negative=r["false_negative"],
            )
            for r in results
        ],
    )
    return {
        "degenerate": pooled.degenerate,
        "f1": pooled.f1,
        "false_negative": pooled.false_negative,
        "false_positive": pooled.false_positive,
        "precision": pooled.precision,
        "recall": pooled.recall,
        "true_positive": pooled.true_positive,
    }


def categorize(ref_text, gt_mentions, hyp_text, pred_mentions, utt_id=""):
    """Error-category trace records for one utterance."""

    def run():
        return _taxonomy.categorize(
            ref_text,
            [_mention_in(m) for m in gt_mentions],
            hyp_text,
            [_mention_in(m) for m in pred_mentions],
            utt_id=utt_id,
        )

    return [trace.as_dict() for trace in _guard(run)]


def beam_decode(frames, alphabet, config=None, lm=None, tagmap=None):
    """Prefix beam search over a posterior matrix, as [text, score] rows."""
    settings = decoder_settings(config)
    post = _guard(_ctc.PosteriorMatrix, frames, tuple(alphabet))
    if settings["greedy"]:
        return [[_guard(_ctc.greedy_decode, post), None]]
    results = _guard(
        _ctc.beam_decode,
        post,
        settings["beam"],
        lm=core_of(lm, "lm") if lm is not None else None,
        alpha=settings["alpha"],
        beta=settings["beta"],
        tagmap=core_of(tagmap, "tagmap") if tagmap is not None else None,
        nbest=settings["nbest"],
    )
    return [[text, score] for text, score in results]
