"""Shared generators and oracles used by several test modules.

Oracles here are deliberately naive (enumeration, quadratic DP, first
principles) and independent of the library code they check.
"""

from __future__ import annotations

import itertools

from nerkit.tagformat import EntityMention

WORD_POOL = [
    "the",
    "a",
    "eu",
    "irish",
    "council",
    "one",
    "month",
    "three",
    "years",
    "drc",
    "kasai",
    "province",
    "it's",
    "42",
    "policy",
    "framework",
]


def random_plain_text(rng, max_words=12, pool=WORD_POOL):
    n = rng.randrange(0, max_words + 1)
    return " ".join(rng.choice(pool) for _ in range(n))


def random_mentions(rng, words, tags, max_mentions=3):
    """Non-overlapping random spans over `words`, sorted by start."""
    mentions = []
    position = 0
    for _ in range(rng.randrange(0, max_mentions + 1)):
        if position >= len(words):
            break
        start = rng.randrange(position, len(words))
        length = rng.randrange(1, min(3, len(words) - start) + 1)
        phrase = " ".join(words[start : start + length])
        mentions.append(EntityMention(rng.choice(tags), phrase, start, length))
        position = start + length
    return mentions


def levenshtein_dp_cost(ref, hyp):
    """Plain quadratic DP edit cost, no backtrace, unit costs."""
    rows = len(ref) + 1
    cols = len(hyp) + 1
    dist = [[0] * cols for _ in range(rows)]
    for i in range(rows):
        dist[i][0] = i
    for j in range(cols):
        dist[0][j] = j
    for i in range(1, rows):
        for j in range(1, cols):
            same = 0 if ref[i - 1] == hyp[j - 1] else 1
            dist[i][j] = min(
                dist[i - 1][j - 1] + same,
                dist[i - 1][j] + 1,
                dist[i][j - 1] + 1,
            )
    return dist[-1][-1]


def _tag_phrase(item):
    if hasattr(item, "tag"):
        return (item.tag, item.phrase)
    tag, phrase = item
    return (tag, phrase)


def brute_force_tuple_matching(gt, pred):
    """Maximum one-to-one matching on exact (tag, phrase) equality.

    Word positions are ignored, mirroring the metric definition.
    Enumerates injective assignments of predictions to ground-truth tuples;
    feasible for up to ~6 tuples per side.
    """
    gt = [_tag_phrase(item) for item in gt]
    pred = [_tag_phrase(item) for item in pred]
    best = 0
    gt_indices = range(len(gt))
    for chosen_preds in _all_subsets(range(len(pred))):
        if len(chosen_preds) <= best:
            continue
        for assignment in itertools.permutations(gt_indices, len(chosen_preds)):
            if all(pred[p] == gt[g] for p, g in zip(chosen_preds, assignment)):
                best = len(chosen_preds)
                break
    return best


def _all_subsets(items):
    items = list(items)
    for size in range(len(items) + 1):
        yield from itertools.combinations(items, size)


def lm_conditional_sum(lm, history):
    """Sum of P(w | history) over the whole vocabulary, via the query path."""
    return sum(10.0 ** lm.cond_logprob(word, history) for word in sorted(lm.vocab))


def max_normalization_error(lm):
    """Worst |sum - 1| over every stored history of the model."""
    return max(abs(lm_conditional_sum(lm, h) - 1.0) for h in lm.histories())


def random_lm_corpus(rng, vocab=("a", "b", "c", "d", "e"), sentences=30, max_len=6):
    corpus = []
    for _ in range(sentences):
        length = rng.randrange(0, max_len + 1)
        corpus.append(" ".join(rng.choice(vocab) for _ in range(length)))
    # Repeat a slice so higher count buckets are populated too.
    corpus.extend(corpus[: sentences // 3])
    return corpus


def collapse_path(path, blank):
    """CTC collapse: merge repeats, then drop blanks."""
    out = []
    previous = None
    for symbol in path:
        if symbol != previous and symbol != blank:
            out.append(symbol)
        previous = symbol
    return tuple(out)


def brute_force_ctc_prob(frames, alphabet, blank, labels):
    """Sum path probabilities over every V^T path collapsing to labels."""
    labels = tuple(labels)
    total = 0.0
    indices = range(len(alphabet))
    for path in itertools.product(indices, repeat=len(frames)):
        if collapse_path(tuple(alphabet[i] for i in path), blank) != labels:
            continue
        prob = 1.0
        for t, i in enumerate(path):
            prob *= frames[t][i]
        total += prob
    return total


def exhaustive_map_decode(frames, alphabet, blank):
    """Best label sequence by total CTC probability, ties broken by text.

    Enumerates every label sequence up to T symbols; exponential, for tiny
    decoding problems only.
    """
    chars = [s for s in alphabet if s != blank]
    best_text, best_prob = None, -1.0
    for length in range(len(frames) + 1):
        for labels in itertools.product(chars, repeat=length):
            prob = brute_force_ctc_prob(frames, alphabet, blank, labels)
            text = "".join(labels)
            if prob > best_prob or (prob == best_prob and text < best_text):
                best_text, best_prob = text, prob
    return best_text, best_prob


GAZETTEER = (
    ("new york", "GPE"),
    ("united nations", "ORG"),
    ("obama", "PERSON"),
    ("france", "GPE"),
    ("monday", "DATE"),
)


def synthetic_speech_corpus(rng, count, kind="Un-Sp"):
    """Random manifest of the given data type plus hidden reference texts.

    Roughly half the utterances contain one gazetteer phrase, so mock
    tagging produces a mix of tagged and untagged records.
    """
    from nerkit.pipeline import Manifest, ManifestRecord

    records, references = [], {}
    for i in range(count):
        words = [rng.choice(WORD_POOL) for _ in range(rng.randrange(4, 10))]
        if rng.random() < 0.5:
            phrase = rng.choice([p for p, _ in GAZETTEER])
            where = rng.randrange(0, len(words) + 1)
            words[where:where] = phrase.split()
        text = " ".join(words)
        utt_id = f"utt-{i:05d}"
        audio_ref = f"mock://{utt_id}"
        if kind == "Un-Sp":
            records.append(ManifestRecord(utt_id, audio_ref=audio_ref))
            references[audio_ref] = text
        elif kind == "Un-Txt":
            records.append(ManifestRecord(utt_id, text=text))
        else:
            records.append(ManifestRecord(utt_id, audio_ref=audio_ref, text=text))
            references[audio_ref] = text
    return Manifest(records), references
