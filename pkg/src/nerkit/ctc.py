"""CTC decoding of frame-level character posteriors.

Provides best-path (greedy) decoding, prefix beam search with optional
word-level LM shallow fusion, and the exact label-sequence probability via
the forward algorithm, which doubles as the reference the beam search is
tested against. With a beam wide enough to hold every prefix and zero LM
weights the beam search is exact, because per-prefix blank and non-blank
masses are accumulated without approximation.

Scores are log10 throughout, matching the LM module.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import (
    BeamWidthZero,
    InvalidAlphabet,
    SequenceLongerThanFrames,
    ToolkitError,
)
from .lm import SENT_END, SENT_START

BLANK = "<blank>"
NEG_INF = float("-inf")

_ESCAPES = {BLANK: BLANK, " ": "<sp>"}
_UNESCAPES = {"<sp>": " ", BLANK: BLANK}

_MAGIC = b"NKPM"


def log10addexp(a, b):
    """log10(10**a + 10**b) without leaving log space."""
    if a == NEG_INF:
        return b
    if b == NEG_INF:
        return a
    if a < b:
        a, b = b, a
    return a + math.log10(1.0 + 10.0 ** (b - a))


class PosteriorMatrix:
    """Frame-by-symbol probabilities with a distinguished blank symbol.

    Parameters
    ----------
    frames : array-like, shape (T, V)
        Rows must each sum to 1 within 1e-5, entries within [0, 1].
    alphabet : sequence of str
        V symbols; exactly one equals BLANK, the rest are single
        characters, all distinct.
    """

    def __init__(self, frames, alphabet):
        self.frames = np.asarray(frames, dtype=np.float64)
        self.alphabet = tuple(alphabet)
        if self.frames.ndim != 2 or self.frames.shape[0] < 1:
            raise ToolkitError(f"posteriors must be a nonempty TxV matrix, got shape {self.frames.shape}")
        if self.frames.shape[1] != len(self.alphabet):
            raise ToolkitError(
                f"{len(self.alphabet)} symbols for {self.frames.shape[1]} columns"
            )
        if self.alphabet.count(BLANK) != 1:
            raise InvalidAlphabet("alphabet must contain the blank symbol exactly once")
        for symbol in self.alphabet:
            if symbol != BLANK and len(symbol) != 1:
                raise InvalidAlphabet(f"symbol {symbol!r} is not a single character")
        if len(set(self.alphabet)) != len(self.alphabet):
            raise InvalidAlphabet("alphabet symbols must be distinct")
        if np.any(self.frames < 0) or np.any(self.frames > 1):
            raise ToolkitError("posterior entries must lie in [0, 1]")
        sums = self.frames.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > 1e-5):
            worst = float(np.abs(sums - 1.0).max())
            raise ToolkitError(f"posterior rows must sum to 1 (worst deviation {worst:.2e})")
        self.blank_index = self.alphabet.index(BLANK)
        with np.errstate(divide="ignore"):
            self.log_frames = np.log10(self.frames)

    @property
    def num_frames(self):
        return self.frames.shape[0]

    @property
    def chars(self):
        """Non-blank symbols in alphabet order."""
        return tuple(s for s in self.alphabet if s != BLANK)

    def index_of(self, symbol):
        return self.alphabet.index(symbol)


def greedy_decode(post):
    """Best-path decoding: per-frame argmax, collapse repeats, drop blanks."""
    best = np.argmax(post.frames, axis=1)
    out = []
    previous = None
    for index in best:
        if index != previous and index != post.blank_index:
            out.append(post.alphabet[index])
        previous = index
    return "".join(out)


def ctc_labelseq_prob(post, labels):
    """Total probability of a label sequence over all frame alignments.

    Standard forward recursion over the blank-interleaved sequence; linear
    space, exact up to float rounding.
    """
    labels = list(labels)
    for label in labels:
        if label == BLANK or label not in post.alphabet:
            raise ToolkitError(f"label {label!r} not a non-blank alphabet symbol")
    if len(labels) > post.num_frames:
        raise SequenceLongerThanFrames(
            f"{len(labels)} labels cannot fit into {post.num_frames} frames"
        )
    frames = post.frames
    blank = post.blank_index
    indices = [post.index_of(label) for label in labels]
    ext = []
    for index in indices:
        ext.extend((blank, index))
    ext.append(blank)
    width = len(ext)
    alpha = np.zeros(width)
    alpha[0] = frames[0][blank]
    if width > 1:
        alpha[1] = frames[0][ext[1]]
    for t in range(1, post.num_frames):
        prev = alpha
        alpha = np.zeros(width)
        for s, symbol in enumerate(ext):
            total = prev[s]
            if s >= 1:
                total += prev[s - 1]
            if s >= 2 and symbol != blank and symbol != ext[s - 2]:
                total += prev[s - 2]
            alpha[s] = total * frames[t][symbol]
    if width == 1:
        return float(alpha[0])
    return float(alpha[-1] + alpha[-2])


class _Hyp:
    __slots__ = ("p_blank", "p_nonblank", "lm_total", "lm_history", "pending")

    def __init__(self, p_blank, p_nonblank, lm_total, lm_history, pending):
        self.p_blank = p_blank
        self.p_nonblank = p_nonblank
        self.lm_total = lm_total
        self.lm_history = lm_history
        self.pending = pending

    @property
    def acoustic(self):
        return log10addexp(self.p_blank, self.p_nonblank)


def _push_word(history, word, order):
    history = history + (word,)
    if order > 1:
        return history[-(order - 1) :]
    return ()


def beam_decode(post, beam_width, lm=None, alpha=1.0, beta=0.5, tagmap=None, nbest=None):
    """Prefix beam search with optional word-level LM shallow fusion.

    Parameters
    ----------
    post : PosteriorMatrix
    beam_width : int
        Prefixes kept per frame; a width covering every reachable prefix
        makes the search exhaustive.
    lm : ArpaLm, optional
        Word LM applied on word boundaries: spaces, plus every delimiter
        character when a tagmap is given. Delimiter characters are scored
        as standalone words.
    alpha, beta : float
        LM weight and per-word insertion bonus.
    tagmap : TagMap, optional
    nbest : int, optional
        Hypotheses to return, beam_width by default.

    Returns
    -------
    list of (text, combined_score)
        combined = log10 CTC mass + alpha * LM log10 + beta * word count,
        sorted best first, ties broken by text.
    """
    if beam_width < 1:
        raise BeamWidthZero(f"beam width must be at least 1, got {beam_width}")
    if lm is not None and " " not in post.alphabet:
        raise InvalidAlphabet("LM fusion needs the space character in the alphabet")

    boundary = {" "}
    if tagmap is not None:
        boundary |= tagmap.delimiter_chars

    use_lm = lm is not None

    def advance_state(hyp, char):
        """LM totals and state after emitting one more character."""
        if not use_lm:
            return 0.0, (), ""
        if char not in boundary:
            return hyp.lm_total, hyp.lm_history, hyp.pending + char
        total = hyp.lm_total
        history = hyp.lm_history
        if hyp.pending:
            total += alpha * lm.cond_logprob(hyp.pending, history) + beta
            history = _push_word(history, hyp.pending, lm.order)
        if char != " ":
            total += alpha * lm.cond_logprob(char, history) + beta
            history = _push_word(history, char, lm.order)
        return total, history, ""

    def final_score(hyp):
        acoustic = hyp.acoustic
        if not use_lm:
            return acoustic
        total = hyp.lm_total
        history = hyp.lm_history
        if hyp.pending:
            total += alpha * lm.cond_logprob(hyp.pending, history) + beta
            history = _push_word(history, hyp.pending, lm.order)
        total += alpha * lm.cond_logprob(SENT_END, history)
        return acoustic + total

    start_history = (SENT_START,) if use_lm else ()
    beams = {(): _Hyp(0.0, NEG_INF, 0.0, start_history, "")}
    char_indices = [
        (symbol, index)
        for index, symbol in enumerate(post.alphabet)
        if symbol != BLANK
    ]

    for t in range(post.num_frames):
        log_row = post.log_frames[t]
        log_blank = float(log_row[post.blank_index])
        next_beams = {}

        def bucket(prefix, template):
            hyp = next_beams.get(prefix)
            if hyp is None:
                hyp = _Hyp(NEG_INF, NEG_INF, template[0], template[1], template[2])
                next_beams[prefix] = hyp
            return hyp

        for prefix in sorted(beams):
            hyp = beams[prefix]
            total_prev = hyp.acoustic
            stay = bucket(prefix, (hyp.lm_total, hyp.lm_history, hyp.pending))
            if log_blank != NEG_INF:
                stay.p_blank = log10addexp(stay.p_blank, total_prev + log_blank)
            if prefix:
                last_index = post.index_of(prefix[-1])
                log_repeat = float(log_row[last_index])
                if log_repeat != NEG_INF and hyp.p_nonblank != NEG_INF:
                    stay.p_nonblank = log10addexp(
                        stay.p_nonblank, hyp.p_nonblank + log_repeat
                    )
            for symbol, index in char_indices:
                log_char = float(log_row[index])
                if log_char == NEG_INF:
                    continue
                if prefix and symbol == prefix[-1]:
                    base = hyp.p_blank
                else:
                    base = total_prev
                if base == NEG_INF:
                    continue
                extended = bucket(prefix + (symbol,), advance_state(hyp, symbol))
                extended.p_nonblank = log10addexp(extended.p_nonblank, base + log_char)

        ranked = sorted(
            next_beams.items(),
            key=lambda item: (-(item[1].acoustic + item[1].lm_total), item[0]),
        )
        beams = dict(ranked[:beam_width])

    results = [("".join(prefix), final_score(hyp)) for prefix, hyp in beams.items()]
    results.sort(key=lambda item: (-item[1], item[0]))
    return results[: nbest if nbest is not None else beam_width]


def write_posteriors_text(post, path):
    """Text file: `T V` line, alphabet line, then one row of floats per frame."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_header_lines(post))
        for row in post.frames:
            fh.write(" ".join(f"{value:.17g}" for value in row) + "\n")


def write_posteriors_binary(post, path):
    """Binary variant: magic, the same header, then float32 rows."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC + b"\n")
        fh.write(_header_lines(post).encode("utf-8"))
        fh.write(post.frames.astype("<f4").tobytes(order="C"))


def _header_lines(post):
    symbols = " ".join(_ESCAPES.get(symbol, symbol) for symbol in post.alphabet)
    return f"{post.num_frames} {len(post.alphabet)}\n{symbols}\n"


def _parse_header(first, second):
    try:
        t, v = first.split()
        t, v = int(t), int(v)
    except ValueError:
        raise ToolkitError(f"bad posterior header line {first!r}") from None
    symbols = tuple(_UNESCAPES.get(token, token) for token in second.split(" "))
    if len(symbols) != v:
        raise ToolkitError(f"alphabet line has {len(symbols)} symbols, header says {v}")
    return t, v, symbols


def read_posteriors(path):
    """Load either posterior file format, sniffing the binary magic."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob.startswith(_MAGIC + b"\n"):
        rest = blob[len(_MAGIC) + 1 :]
        first, rest = rest.split(b"\n", 1)
        second, rest = rest.split(b"\n", 1)
        t, v, symbols = _parse_header(first.decode("utf-8"), second.decode("utf-8"))
        expected = t * v * 4
        if len(rest) != expected:
            raise ToolkitError(f"binary posterior payload is {len(rest)} bytes, want {expected}")
        frames = np.frombuffer(rest, dtype="<f4").reshape(t, v).astype(np.float64)
        return PosteriorMatrix(frames, symbols)
    lines = blob.decode("utf-8").splitlines()
    if len(lines) < 2:
        raise ToolkitError("posterior text file needs a size line and an alphabet line")
    t, v, symbols = _parse_header(lines[0], lines[1])
    rows = [line for line in lines[2:] if line.strip()]
    if len(rows) != t:
        raise ToolkitError(f"posterior text file has {len(rows)} rows, header says {t}")
    try:
        frames = np.array([[float(x) for x in row.split()] for row in rows], dtype=np.float64)
    except ValueError as exc:
        raise ToolkitError(f"bad posterior row: {exc}") from None
    if frames.ndim != 2 or frames.shape[1] != v:
        raise ToolkitError("posterior rows must all have one float per symbol")
    return PosteriorMatrix(frames, symbols)
