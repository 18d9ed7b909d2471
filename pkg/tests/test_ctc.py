"""CTC decoder tests.

The forward algorithm is checked against a brute-force enumeration of all
V^T frame paths, and the beam search against an exhaustive search over
label sequences; both oracles live in helpers.py and are exponential, so
every case here stays tiny.
"""

import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nerkit.ctc import (
    BLANK,
    PosteriorMatrix,
    beam_decode,
    ctc_labelseq_prob,
    greedy_decode,
    log10addexp,
    read_posteriors,
    write_posteriors_binary,
    write_posteriors_text,
)
from nerkit.errors import (
    BeamWidthZero,
    InvalidAlphabet,
    SequenceLongerThanFrames,
    ToolkitError,
)
from nerkit.lm import train_arpa
from nerkit.tagformat import parse_tagged

from helpers import brute_force_ctc_prob, exhaustive_map_decode

ABC = (BLANK, "a", "b")


def one_hot(alphabet, symbols):
    rows = []
    for symbol in symbols:
        row = [0.0] * len(alphabet)
        row[alphabet.index(symbol)] = 1.0
        rows.append(row)
    return PosteriorMatrix(np.array(rows), alphabet)


def random_posterior(rng, num_frames, alphabet, dominance=None):
    rows = []
    for _ in range(num_frames):
        if dominance is None:
            row = np.array([rng.uniform(0.05, 1.0) for _ in alphabet])
            row /= row.sum()
        else:
            rest = np.array([rng.uniform(0.05, 1.0) for _ in range(len(alphabet) - 1)])
            rest *= (1.0 - dominance) / rest.sum()
            row = np.insert(rest, rng.randrange(len(alphabet)), dominance)
        rows.append(row)
    return PosteriorMatrix(np.array(rows), alphabet)


# ---------------------------------------------------------------- matrix


class TestPosteriorMatrix:
    def test_accepts_small_row_sum_slack(self):
        PosteriorMatrix(np.array([[0.5 + 4e-6, 0.25, 0.25]]), ABC)

    def test_rejects_bad_row_sum(self):
        with pytest.raises(ToolkitError, match="sum"):
            PosteriorMatrix(np.array([[0.5, 0.3, 0.3]]), ABC)

    def test_rejects_negative_entries(self):
        with pytest.raises(ToolkitError):
            PosteriorMatrix(np.array([[1.2, -0.1, -0.1]]), ABC)

    def test_rejects_empty(self):
        with pytest.raises(ToolkitError):
            PosteriorMatrix(np.zeros((0, 3)), ABC)

    def test_rejects_missing_blank(self):
        with pytest.raises(InvalidAlphabet):
            PosteriorMatrix(np.array([[0.5, 0.5]]), ("a", "b"))

    def test_rejects_double_blank(self):
        with pytest.raises(InvalidAlphabet):
            PosteriorMatrix(np.array([[0.5, 0.5]]), (BLANK, BLANK))

    def test_rejects_multichar_symbol(self):
        with pytest.raises(InvalidAlphabet):
            PosteriorMatrix(np.array([[0.5, 0.5]]), (BLANK, "ab"))

    def test_rejects_duplicate_symbol(self):
        with pytest.raises(InvalidAlphabet):
            PosteriorMatrix(np.array([[0.4, 0.3, 0.3]]), (BLANK, "a", "a"))

    def test_shape_mismatch(self):
        with pytest.raises(ToolkitError):
            PosteriorMatrix(np.array([[0.5, 0.5]]), ABC)

    def test_chars_exclude_blank(self):
        post = one_hot(ABC, [BLANK])
        assert post.chars == ("a", "b")
        assert post.blank_index == 0


# ---------------------------------------------------------------- greedy


class TestGreedy:
    def test_collapse_and_deblank(self):
        post = one_hot(ABC, ["a", "a", BLANK, "b", "b"])
        assert greedy_decode(post) == "ab"

    def test_blank_separated_repeat_survives(self):
        post = one_hot(ABC, ["a", BLANK, "a"])
        assert greedy_decode(post) == "aa"

    def test_all_blank_is_empty(self):
        post = one_hot(ABC, [BLANK, BLANK])
        assert greedy_decode(post) == ""


# ---------------------------------------------------------------- forward


class TestLabelSeqProb:
    def test_uniform_three_frames(self):
        # 5 of the 27 equiprobable paths collapse to "ab":
        # (a,a,b) (a,b,b) (a,b,-) (a,-,b) (-,a,b)
        post = PosteriorMatrix(np.full((3, 3), 1 / 3), ABC)
        value = ctc_labelseq_prob(post, "ab")
        assert value == pytest.approx(5 / 27, abs=1e-15)
        oracle = brute_force_ctc_prob(post.frames, ABC, BLANK, ("a", "b"))
        assert value == pytest.approx(oracle, abs=1e-12)

    def test_asymmetric_frozen_value(self):
        frames = np.array([[0.5, 0.3, 0.2], [0.1, 0.6, 0.3], [0.4, 0.4, 0.2]])
        post = PosteriorMatrix(frames, ABC)
        # brute-force enumeration of 27 paths gives 0.416
        assert ctc_labelseq_prob(post, "a") == pytest.approx(0.416, abs=1e-12)

    def test_empty_sequence_on_pure_blank(self):
        post = one_hot(ABC, [BLANK, BLANK, BLANK])
        assert ctc_labelseq_prob(post, "") == pytest.approx(1.0, abs=1e-15)

    def test_too_long_raises(self):
        post = one_hot(ABC, ["a"])
        with pytest.raises(SequenceLongerThanFrames):
            ctc_labelseq_prob(post, "ab")

    def test_unknown_label_raises(self):
        post = one_hot(ABC, ["a"])
        with pytest.raises(ToolkitError):
            ctc_labelseq_prob(post, "z")

    def test_blank_not_a_label(self):
        post = one_hot(ABC, ["a"])
        with pytest.raises(ToolkitError):
            ctc_labelseq_prob(post, [BLANK])

    def test_partitions_unity(self):
        # every path collapses to exactly one label sequence, so the
        # probabilities of all sequences up to length T sum to 1
        rng = random.Random(7)
        post = random_posterior(rng, 3, ABC)
        total = 0.0
        import itertools

        for length in range(4):
            for labels in itertools.product("ab", repeat=length):
                total += ctc_labelseq_prob(post, "".join(labels))
        assert total == pytest.approx(1.0, abs=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(st.data())
    def test_matches_path_enumeration(self, data):
        num_chars = data.draw(st.integers(1, 3), label="chars")
        alphabet = (BLANK,) + tuple("abc"[:num_chars])
        num_frames = data.draw(st.integers(1, 4), label="frames")
        raw = data.draw(
            st.lists(
                st.lists(
                    st.floats(0.05, 1.0, allow_nan=False),
                    min_size=len(alphabet),
                    max_size=len(alphabet),
                ),
                min_size=num_frames,
                max_size=num_frames,
            ),
            label="rows",
        )
        frames = np.array(raw)
        frames /= frames.sum(axis=1, keepdims=True)
        post = PosteriorMatrix(frames, alphabet)
        length = data.draw(st.integers(0, num_frames), label="len")
        labels = data.draw(
            st.lists(
                st.sampled_from(alphabet[1:]), min_size=length, max_size=length
            ),
            label="labels",
        )
        oracle = brute_force_ctc_prob(frames, alphabet, BLANK, tuple(labels))
        assert ctc_labelseq_prob(post, labels) == pytest.approx(oracle, abs=1e-12)


# ---------------------------------------------------------------- beam


class TestBeamSearch:
    def test_zero_width_raises(self):
        post = one_hot(ABC, ["a"])
        with pytest.raises(BeamWidthZero):
            beam_decode(post, 0)

    def test_lm_needs_space_in_alphabet(self):
        post = one_hot(ABC, ["a"])
        lm = train_arpa(["a b"], order=1)
        with pytest.raises(InvalidAlphabet):
            beam_decode(post, 4, lm=lm)

    def test_saturating_beam_equals_exhaustive_map(self):
        rng = random.Random(11)
        for _ in range(12):
            post = random_posterior(rng, rng.randrange(1, 5), ABC)
            text, prob = exhaustive_map_decode(post.frames, ABC, BLANK)
            results = beam_decode(post, 256)
            assert results[0][0] == text
            assert results[0][1] == pytest.approx(math.log10(prob), abs=1e-9)

    def test_top_score_is_total_sequence_mass(self):
        # with no LM the combined score is the full CTC probability of the
        # text, i.e. it matches the forward algorithm
        rng = random.Random(3)
        post = random_posterior(rng, 4, ABC)
        for text, score in beam_decode(post, 256, nbest=5):
            assert score == pytest.approx(
                math.log10(ctc_labelseq_prob(post, text)), abs=1e-9
            )

    def test_width_one_matches_greedy_on_peaked_frames(self):
        # holds when each frame has a dominant symbol; flat frames can
        # legitimately diverge because the beam scores summed prefix mass
        # while greedy follows the single best path
        rng = random.Random(23)
        for _ in range(25):
            post = random_posterior(rng, 6, ABC, dominance=0.7)
            results = beam_decode(post, 1)
            assert results[0][0] == greedy_decode(post)

    def test_wider_beam_never_hurts(self):
        rng = random.Random(5)
        for _ in range(10):
            post = random_posterior(rng, 5, (BLANK, "a", "b", "c"))
            scores = [beam_decode(post, w)[0][1] for w in (1, 2, 4, 8, 16, 32)]
            for narrow, wide in zip(scores, scores[1:]):
                assert wide >= narrow - 1e-12

    def test_nbest_sorted_and_truncated(self):
        rng = random.Random(9)
        post = random_posterior(rng, 4, ABC)
        results = beam_decode(post, 16, nbest=4)
        assert len(results) == 4
        assert all(a[1] >= b[1] for a, b in zip(results, results[1:]))

    def test_deterministic(self):
        rng = random.Random(1)
        post = random_posterior(rng, 5, ABC)
        assert beam_decode(post, 8) == beam_decode(post, 8)

    def test_equal_scores_break_ties_by_text(self):
        post = PosteriorMatrix(np.array([[0.0, 0.5, 0.5]]), ABC)
        results = beam_decode(post, 4)
        assert [r[0] for r in results[:2]] == ["a", "b"]
        assert results[0][1] == pytest.approx(results[1][1], abs=1e-15)

    def test_lm_fusion_flips_ambiguous_word(self):
        alphabet = (BLANK, "a", "b", " ")
        rows = [
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
            [0.0, 0.45, 0.55, 0.0],
        ]
        post = PosteriorMatrix(np.array(rows), alphabet)
        assert beam_decode(post, 16)[0][0] == "a b"
        lm = train_arpa(["a a", "a a", "a a", "a b"], order=2)
        fused = beam_decode(post, 16, lm=lm, alpha=2.0, beta=0.0)
        assert fused[0][0] == "a a"

    def test_word_bonus_shifts_scores_by_word_count(self):
        alphabet = (BLANK, "a", "b", " ")
        rng = random.Random(17)
        post = random_posterior(rng, 5, alphabet)
        lm = train_arpa(["a b", "b a", "a", "b"], order=2)
        base = dict(beam_decode(post, 32, lm=lm, alpha=1.0, beta=0.0, nbest=10))
        boosted = dict(beam_decode(post, 32, lm=lm, alpha=1.0, beta=5.0, nbest=10))
        shared = set(base) & set(boosted)
        assert shared
        for text in shared:
            words = len(text.split())
            assert boosted[text] - base[text] == pytest.approx(5.0 * words, abs=1e-9)

    def test_tag_chars_score_as_standalone_words(self, fine_tagmap):
        text = "$ irish ]"
        alphabet = (BLANK, " ", "$", "]", "i", "r", "s", "h")
        post = one_hot(alphabet, list(text))
        lm = train_arpa(["$ irish ]", "$ danish ]"], order=2)
        results = beam_decode(
            post, 8, lm=lm, alpha=1.0, beta=0.5, tagmap=fine_tagmap
        )
        top_text, top_score = results[0]
        assert top_text == text
        # one-hot acoustics contribute log10(1) = 0, so the combined score
        # is exactly the LM sentence score plus the bonus for three words
        expected = lm.sentence_logprob(text) + 0.5 * 3
        assert top_score == pytest.approx(expected, abs=1e-9)

    def test_decoded_tagged_text_parses_in_recover_mode(self, fine_tagmap):
        alphabet = (BLANK, " ", "$", "]", "a", "b")
        rng = random.Random(31)
        for _ in range(10):
            post = random_posterior(rng, 6, alphabet)
            for text, _ in beam_decode(post, 8, nbest=8):
                plain, mentions, _diags = parse_tagged(
                    text, fine_tagmap, policy="recover"
                )
                for mention in mentions:
                    assert mention.phrase in plain


# ---------------------------------------------------------------- files


class TestPosteriorFiles:
    def make(self, rng):
        return random_posterior(rng, 4, (BLANK, " ", "a", "b"))

    def test_text_round_trip_exact(self, tmp_path):
        post = self.make(random.Random(2))
        path = tmp_path / "post.txt"
        write_posteriors_text(post, path)
        back = read_posteriors(path)
        assert back.alphabet == post.alphabet
        assert np.array_equal(back.frames, post.frames)

    def test_binary_round_trip_float32(self, tmp_path):
        post = self.make(random.Random(4))
        path = tmp_path / "post.bin"
        write_posteriors_binary(post, path)
        back = read_posteriors(path)
        assert back.alphabet == post.alphabet
        assert np.allclose(back.frames, post.frames, atol=1e-6)

    def test_escapes_in_alphabet_line(self, tmp_path):
        post = self.make(random.Random(6))
        path = tmp_path / "post.txt"
        write_posteriors_text(post, path)
        header = path.read_text().splitlines()[1]
        assert header == "<blank> <sp> a b"

    def test_binary_detected_by_magic(self, tmp_path):
        post = self.make(random.Random(8))
        path = tmp_path / "posteriors"
        write_posteriors_binary(post, path)
        assert path.read_bytes()[:4] == b"NKPM"
        read_posteriors(path)

    def test_truncated_binary_rejected(self, tmp_path):
        post = self.make(random.Random(10))
        path = tmp_path / "post.bin"
        write_posteriors_binary(post, path)
        path.write_bytes(path.read_bytes()[:-4])
        with pytest.raises(ToolkitError):
            read_posteriors(path)

    def test_row_count_mismatch_rejected(self, tmp_path):
        path = tmp_path / "post.txt"
        path.write_text("2 3\n<blank> a b\n0.4 0.3 0.3\n")
        with pytest.raises(ToolkitError):
            read_posteriors(path)

    def test_ragged_row_rejected(self, tmp_path):
        path = tmp_path / "post.txt"
        path.write_text("1 3\n<blank> a b\n0.5 0.5\n")
        with pytest.raises(ToolkitError):
            read_posteriors(path)

    def test_garbage_header_rejected(self, tmp_path):
        path = tmp_path / "post.txt"
        path.write_text("not a header\nx y\n")
        with pytest.raises(ToolkitError):
            read_posteriors(path)


def test_log10addexp_basics():
    assert log10addexp(float("-inf"), -2.0) == -2.0
    assert log10addexp(-2.0, float("-inf")) == -2.0
    assert log10addexp(math.log10(0.3), math.log10(0.2)) == pytest.approx(
        math.log10(0.5), abs=1e-12
    )
