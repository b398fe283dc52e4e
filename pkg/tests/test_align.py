import math

import numpy as np
import pytest

from conftest import brute_force_ctc_best
from wordshap.align import (
    TranscriptMap,
    decompose,
    force_align,
    frames_to_seconds,
)
from wordshap.core import EmissionMatrix, TimeSpan
from wordshap.errors import (
    EmptyTranscriptError,
    InfeasibleAlignmentError,
    VocabMismatchError,
)

VOCAB = ("<blank>", "a", "b", "c", "|")


def make_emissions(probs, stride=None):
    return EmissionMatrix(
        log_probs=np.log(np.asarray(probs, dtype=np.float64)),
        vocab=VOCAB[: np.asarray(probs).shape[1]],
        blank_index=0,
        word_delim_index=4 if np.asarray(probs).shape[1] > 4 else None,
        frame_stride_seconds=stride,
    )


def peaked(t_total, v_size, schedule, peak=0.9):
    """Rows peaked at schedule[t]; remaining mass spread uniformly."""
    probs = np.full((t_total, v_size), (1 - peak) / (v_size - 1))
    for t, k in enumerate(schedule):
        probs[t] = (1 - peak) / (v_size - 1)
        probs[t, k] = peak
    return probs


class TestDecompose:
    def test_two_words(self):
        tm = decompose("ab ba", VOCAB)
        assert tm.words == ("ab", "ba")
        assert [wi for _, wi in tm.chars] == [0, 0, 1, 1]
        assert tm.vocab_indices == (1, 2, 2, 1)

    def test_lowercases_and_drops_unknown(self):
        tm = decompose("A!B  c?", VOCAB)
        assert tm.words == ("ab", "c")

    def test_fully_dropped_word_removed(self, caplog):
        with caplog.at_level("WARNING"):
            tm = decompose("ab 123 c", VOCAB)
        assert tm.words == ("ab", "c")
        assert [wi for _, wi in tm.chars] == [0, 0, 1]

    def test_empty_transcript_raises(self):
        with pytest.raises(EmptyTranscriptError):
            decompose("123 !!!", VOCAB)

    def test_delimiter_char_never_becomes_a_label(self):
        tm = decompose("a|b", VOCAB)
        assert tm.words == ("ab",)


class TestForceAlign:
    def test_single_char_all_frames(self):
        probs = peaked(3, 2, [1, 1, 1])
        em = make_emissions(probs)
        tm = decompose("a", VOCAB[:2])
        ca = force_align(em, tm)
        assert ca.spans[0].start_frame == 0
        assert ca.spans[0].end_frame == 2
        assert ca.path_log_prob == pytest.approx(3 * math.log(0.9))

    def test_matches_oracle_small(self):
        probs = peaked(5, 3, [1, 1, 0, 2, 2])
        em = make_emissions(probs)
        tm = decompose("ab", VOCAB[:3])
        ca = force_align(em, tm)
        oracle = brute_force_ctc_best(em.log_probs, [1, 2], 0)
        assert ca.path_log_prob == pytest.approx(oracle, abs=1e-9)

    def test_oracle_randomized(self, rng):
        """Randomized agreement with exhaustive path enumeration."""
        for _ in range(120):
            t_total = int(rng.integers(2, 8))
            v_size = int(rng.integers(2, 4))
            probs = rng.dirichlet(np.ones(v_size), size=t_total)
            n_chars = int(rng.integers(1, 4))
            labels = [int(rng.integers(1, v_size)) for _ in range(n_chars)]
            repeats = sum(1 for x, y in zip(labels, labels[1:]) if x == y)
            em = EmissionMatrix(
                np.log(probs), VOCAB[:v_size], blank_index=0
            )
            chars = tuple((VOCAB[l], 0) for l in labels)
            tm = TranscriptMap(
                words=("".join(VOCAB[l] for l in labels),),
                chars=chars,
                vocab_indices=tuple(labels),
            )
            if t_total < n_chars + repeats:
                with pytest.raises(InfeasibleAlignmentError):
                    force_align(em, tm)
                continue
            ca = force_align(em, tm)
            oracle = brute_force_ctc_best(np.log(probs), labels, 0)
            assert ca.path_log_prob == pytest.approx(oracle, abs=1e-9), (
                probs.tolist(),
                labels,
            )

    def test_repeated_label_needs_separating_blank(self):
        probs = peaked(2, 2, [1, 1])
        em = make_emissions(probs)
        tm = decompose("aa", VOCAB[:2])
        with pytest.raises(InfeasibleAlignmentError):
            force_align(em, tm)

    def test_repeated_label_feasible_with_blank(self):
        probs = peaked(3, 2, [1, 0, 1])
        em = make_emissions(probs)
        tm = decompose("aa", VOCAB[:2])
        ca = force_align(em, tm)
        assert ca.spans[0].end_frame < ca.spans[1].start_frame

    def test_word_delimiter_frames_unassigned(self):
        # schedule: a a | b b  -- delimiter in the middle
        probs = peaked(5, 5, [1, 1, 4, 2, 2])
        em = make_emissions(probs)
        tm = decompose("a b", VOCAB)
        ca = force_align(em, tm)
        assert ca.spans[0].end_frame <= 1
        assert ca.spans[1].start_frame >= 3

    def test_deterministic_under_ties(self):
        probs = np.full((4, 2), 0.5)
        em = make_emissions(probs)
        tm = decompose("a", VOCAB[:2])
        first = force_align(em, tm)
        for _ in range(5):
            again = force_align(em, tm)
            assert again.spans == first.spans
            assert again.path_log_prob == first.path_log_prob

    def test_per_char_score_sums_emissions(self):
        probs = peaked(4, 3, [1, 1, 2, 2])
        em = make_emissions(probs)
        tm = decompose("ab", VOCAB[:3])
        ca = force_align(em, tm)
        for span, vi in zip(ca.spans, tm.vocab_indices):
            expect = sum(
                em.log_probs[t, vi]
                for t in range(span.start_frame, span.end_frame + 1)
            )
            assert span.score == pytest.approx(expect)

    def test_char_outside_vocab_matrix(self):
        probs = peaked(4, 2, [1, 1, 1, 1])
        em = make_emissions(probs)
        tm = TranscriptMap(words=("x",), chars=(("x", 0),), vocab_indices=(5,))
        with pytest.raises(VocabMismatchError):
            force_align(em, tm)


class TestFramesToSeconds:
    def test_implicit_stride(self):
        probs = peaked(4, 2, [1, 1, 1, 1])
        em = make_emissions(probs)
        tm = decompose("a", VOCAB[:2])
        ca = force_align(em, tm)
        spans = frames_to_seconds(ca, em, audio_duration_s=2.0)
        assert spans[0] == TimeSpan(0.0, 2.0)

    def test_explicit_stride(self):
        probs = peaked(4, 2, [0, 1, 1, 0])
        em = make_emissions(probs, stride=0.25)
        tm = decompose("a", VOCAB[:2])
        ca = force_align(em, tm)
        spans = frames_to_seconds(ca, em, audio_duration_s=1.0)
        assert spans[0].start_s == pytest.approx(0.25)
        assert spans[0].end_s == pytest.approx(0.75)

    def test_end_clamped_to_duration(self):
        probs = peaked(4, 2, [1, 1, 1, 1])
        em = make_emissions(probs, stride=0.5)
        tm = decompose("a", VOCAB[:2])
        ca = force_align(em, tm)
        spans = frames_to_seconds(ca, em, audio_duration_s=1.2)
        assert spans[0].end_s <= 1.2
        assert spans[0].end_s > spans[0].start_s
