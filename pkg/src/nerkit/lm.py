"""Back-off n-gram language models with interpolated smoothing.

Training counts n-grams over sentence-padded word sequences, applies
interpolated modified Kneser-Ney discounting (per-order fallback to
Witten-Bell when a count-of-counts bucket is empty or a discount leaves
its valid range), and emits a standard back-off model: entries hold the
already-interpolated conditional probability and histories carry their
leftover interpolation mass as the back-off weight. That construction
makes every conditional distribution sum to exactly 1 over the vocabulary,
which the tests check exhaustively.

All probabilities are log10, matching the text serialization format.
"""

from __future__ import annotations

import math

from .errors import EmptyCorpus, OrderOutOfRange, ToolkitError

SENT_START = "<s>"
SENT_END = "</s>"
UNK = "<unk>"
RESERVED = (SENT_START, SENT_END, UNK)

KNESER_NEY = "kneser_ney"
WITTEN_BELL = "witten_bell"

# Fixed dummy score for the sentence-start token, which is context only
# and never predicted.
SENT_START_LOGPROB = -99.0


def _tokenize_corpus(corpus):
    sentences = []
    for sentence in corpus:
        words = sentence.split() if isinstance(sentence, str) else list(sentence)
        for word in words:
            if word in RESERVED:
                raise ToolkitError(f"reserved token {word!r} inside the corpus")
        sentences.append(words)
    return sentences


def count_ngrams(corpus, order):
    """Raw n-gram counts per order over sentence-padded sequences.

    Returns {k: {gram tuple: count}} for k in 1..order. Exposed so tests
    can check that duplicating the corpus scales every count uniformly.
    """
    if order < 1 or order > 5:
        raise OrderOutOfRange(f"order must be in 1..5, got {order}")
    sentences = _tokenize_corpus(corpus)
    if not sentences:
        raise EmptyCorpus("cannot train on an empty corpus")
    counts = {k: {} for k in range(1, order + 1)}
    for words in sentences:
        seq = [SENT_START] + words + [SENT_END]
        for k in range(1, order + 1):
            table = counts[k]
            for i in range(len(seq) - k + 1):
                gram = tuple(seq[i : i + k])
                table[gram] = table.get(gram, 0) + 1
    return counts


def _continuation_adjusted(counts, order):
    """Replace lower-order counts by left-extension type counts.

    Grams starting with the sentence-start token keep their raw counts
    since nothing can precede them.
    """
    adjusted = {order: dict(counts[order])}
    for k in range(1, order):
        cont = {}
        for gram in counts[k + 1]:
            suffix = gram[1:]
            cont[suffix] = cont.get(suffix, 0) + 1
        table = {}
        for gram, raw in counts[k].items():
            if gram[0] == SENT_START:
                table[gram] = raw
            else:
                table[gram] = cont.get(gram, 0)
        adjusted[k] = table
    return adjusted


def _kn_discounts(values):
    """Modified Kneser-Ney discounts (D1, D2, D3+) from a count table.

    Returns None when the count-of-counts buckets cannot support the
    estimate, signalling the Witten-Bell fallback for that order.
    """
    buckets = [0, 0, 0, 0]
    for value in values:
        if 1 <= value <= 4:
            buckets[value - 1] += 1
    n1, n2, n3, n4 = buckets
    if not all(buckets):
        return None
    y = n1 / (n1 + 2 * n2)
    discounts = (
        1 - 2 * y * n2 / n1,
        2 - 3 * y * n3 / n2,
        3 - 4 * y * n4 / n3,
    )
    for index, d in enumerate(discounts, start=1):
        if not 0 < d <= index:
            return None
    return discounts


def _discount_for(count, discounts):
    return discounts[min(count, 3) - 1]


class ArpaLm:
    """A trained back-off model: per-order entries plus a vocabulary.

    entries maps each order k to {gram: (logprob, backoff_logweight or
    None)}. vocab holds every predictable token (sentence end included,
    sentence start excluded).
    """

    def __init__(self, order, entries, vocab):
        self.order = order
        self._entries = entries
        self.vocab = frozenset(vocab)
        self.smoothing_by_order = {}

    @property
    def vocab_size(self):
        return len(self.vocab)

    def entries(self, k):
        return dict(self._entries.get(k, {}))

    def histories(self):
        """Every context with an explicit entry, the empty context included."""
        yield ()
        for k in range(1, self.order):
            yield from self._entries.get(k, {})

    def _lookup(self, gram):
        return self._entries.get(len(gram), {}).get(gram)

    def cond_logprob(self, word, history=()):
        """log10 P(word | history) with back-off down to unigrams."""
        if word not in self.vocab and word != SENT_START:
            if UNK not in self.vocab:
                raise ToolkitError(f"{word!r} is out of the closed vocabulary")
            word = UNK
        history = tuple(history)
        if self.order > 1:
            history = history[-(self.order - 1) :]
        else:
            history = ()
        total = 0.0
        while True:
            entry = self._lookup(history + (word,))
            if entry is not None:
                return total + entry[0]
            if not history:
                raise ToolkitError(f"no unigram entry for {word!r}")
            context = self._lookup(history)
            if context is not None and context[1] is not None:
                total += context[1]
            history = history[1:]

    def sentence_logprob(self, sentence):
        """log10 probability of a sentence, end-of-sentence term included."""
        words = sentence.split() if isinstance(sentence, str) else list(sentence)
        history = (SENT_START,)
        total = 0.0
        for word in words + [SENT_END]:
            token = word if word in self.vocab else UNK if UNK in self.vocab else word
            total += self.cond_logprob(token, history)
            history = history + (token,)
            if self.order > 1:
                history = history[-(self.order - 1) :]
        return total

    def to_arpa_string(self):
        lines = ["\\data\\"]
        for k in range(1, self.order + 1):
            lines.append(f"ngram {k}={len(self._entries.get(k, {}))}")
        for k in range(1, self.order + 1):
            lines.append("")
            lines.append(f"\\{k}-grams:")
            for gram in sorted(self._entries.get(k, {})):
                logprob, bow = self._entries[k][gram]
                text = " ".join(gram)
                if bow is None:
                    lines.append(f"{logprob:.10f}\t{text}")
                else:
                    lines.append(f"{logprob:.10f}\t{text}\t{bow:.10f}")
        lines.append("")
        lines.append("\\end\\")
        lines.append("")
        return "\n".join(lines)

    def write_arpa(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_arpa_string())

    @classmethod
    def from_arpa_string(cls, text):
        lines = text.splitlines()
        try:
            start = lines.index("\\data\\")
        except ValueError:
            raise ToolkitError("not in ARPA format: missing \\data\\ header") from None
        declared = {}
        cursor = start + 1
        while cursor < len(lines) and lines[cursor].startswith("ngram "):
            spec = lines[cursor][len("ngram ") :]
            k, _, n = spec.partition("=")
            declared[int(k)] = int(n)
            cursor += 1
        entries = {k: {} for k in declared}
        order = max(declared) if declared else 0
        if order < 1:
            raise ToolkitError("ARPA header declares no n-gram sections")
        current = None
        for line in lines[cursor:]:
            line = line.strip()
            if not line:
                continue
            if line == "\\end\\":
                break
            if line.endswith("-grams:") and line.startswith("\\"):
                current = int(line[1:].split("-")[0])
                continue
            if current is None:
                raise ToolkitError(f"entry outside any n-gram section: {line!r}")
            fields = line.split("\t")
            if len(fields) == 2:
                logprob, gram_text = fields
                bow = None
            elif len(fields) == 3:
                logprob, gram_text, bow = fields
                bow = float(bow)
            else:
                raise ToolkitError(f"malformed ARPA entry: {line!r}")
            gram = tuple(gram_text.split(" "))
            if len(gram) != current:
                raise ToolkitError(f"{len(gram)}-gram {gram_text!r} in {current}-gram section")
            entries[current][gram] = (float(logprob), bow)
        for k, n in declared.items():
            if len(entries[k]) != n:
                raise ToolkitError(
                    f"ARPA header declares {n} {k}-grams, found {len(entries[k])}"
                )
        vocab = {gram[0] for gram in entries.get(1, {})} - {SENT_START}
        return cls(order, entries, vocab)

    @classmethod
    def read_arpa(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_arpa_string(fh.read())


def train_arpa(corpus, order, smoothing=KNESER_NEY, closed_vocab=False):
    """Train a back-off model.

    Parameters
    ----------
    corpus : list of sentences (str or pre-split word lists)
    order : int in 1..5
    smoothing : {"kneser_ney", "witten_bell"}
        kneser_ney falls back to witten_bell order by order when its
        discount estimate degenerates; the choice actually used is
        recorded in smoothing_by_order.
    closed_vocab : bool
        Leave the unknown token out of the vocabulary; scoring an OOV
        word then raises instead of backing off.
    """
    if smoothing not in (KNESER_NEY, WITTEN_BELL):
        raise ValueError(f"unknown smoothing {smoothing!r}")
    raw = count_ngrams(corpus, order)

    vocab = {gram[0] for gram in raw[1]} - {SENT_START}
    vocab.add(SENT_END)
    if not closed_vocab:
        vocab.add(UNK)
    base_prob = 1.0 / len(vocab)

    adjusted = _continuation_adjusted(raw, order) if smoothing == KNESER_NEY else raw
    smoothing_by_order = {}
    entries = {k: {} for k in range(1, order + 1)}

    # Unigrams: interpolate the discounted distribution with the uniform
    # base over the vocabulary, then record the sentence-start dummy. The
    # sentence-start token is context only, so it stays out of both the
    # distribution and the discount estimate.
    unigram_prob = {}
    support = {
        gram: c for gram, c in adjusted[1].items() if gram != (SENT_START,) and c > 0
    }
    denom = sum(support.values())
    discounts = _kn_discounts(support.values()) if smoothing == KNESER_NEY else None
    smoothing_by_order[1] = KNESER_NEY if discounts else WITTEN_BELL
    if discounts:
        reserved_mass = sum(_discount_for(c, discounts) for c in support.values())
        gamma = reserved_mass / denom
        for gram, c in support.items():
            unigram_prob[gram[0]] = (c - _discount_for(c, discounts)) / denom
    else:
        types = len(support)
        gamma = types / (denom + types)
        for gram, c in support.items():
            unigram_prob[gram[0]] = c / (denom + types)
    for word in vocab:
        prob = unigram_prob.get(word, 0.0) + gamma * base_prob
        entries[1][(word,)] = [math.log10(prob), None]
    entries[1][(SENT_START,)] = [SENT_START_LOGPROB, None]

    def lower_prob(word, context):
        """Interpolated P(word | context) from already-built entries."""
        for start in range(len(context) + 1):
            gram = context[start:] + (word,)
            entry = entries[len(gram)].get(gram)
            if entry is not None:
                return 10.0 ** entry[0]
        raise AssertionError(f"no entry reachable for {word!r} given {context!r}")

    for k in range(2, order + 1):
        by_history = {}
        for gram, c in adjusted[k].items():
            if c > 0:
                by_history.setdefault(gram[:-1], {})[gram[-1]] = c
        all_values = [c for followers in by_history.values() for c in followers.values()]
        discounts = _kn_discounts(all_values) if smoothing == KNESER_NEY else None
        smoothing_by_order[k] = KNESER_NEY if discounts else WITTEN_BELL
        for history in sorted(by_history):
            followers = by_history[history]
            denom = sum(followers.values())
            if discounts:
                reserved_mass = sum(_discount_for(c, discounts) for c in followers.values())
                gamma = reserved_mass / denom
            else:
                types = len(followers)
                gamma = types / (denom + types)
            for word in sorted(followers):
                c = followers[word]
                if discounts:
                    ml_part = (c - _discount_for(c, discounts)) / denom
                else:
                    ml_part = c / (denom + types)
                prob = ml_part + gamma * lower_prob(word, history[1:])
                entries[k][history + (word,)] = [math.log10(prob), None]
            entries[k - 1][history][1] = math.log10(gamma)

    for k in range(1, order + 1):
        entries[k] = {
            gram: (logprob, bow) for gram, (logprob, bow) in sorted(entries[k].items())
        }
    lm = ArpaLm(order, entries, vocab)
    lm.smoothing_by_order = smoothing_by_order
    return lm


def logprob(lm, sentence):
    """log10 probability of one sentence under the model."""
    return lm.sentence_logprob(sentence)


def perplexity(lm, corpus):
    """Per-token perplexity over a corpus, sentence ends counted."""
    sentences = [s.split() if isinstance(s, str) else list(s) for s in corpus]
    if not sentences:
        raise EmptyCorpus("perplexity over an empty corpus")
    total = 0.0
    tokens = 0
    for words in sentences:
        total += lm.sentence_logprob(words)
        tokens += len(words) + 1
    return 10.0 ** (-total / tokens)
