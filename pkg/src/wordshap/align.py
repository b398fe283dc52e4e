"""Transcript decomposition and CTC forced alignment against an emission matrix."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .core import EmissionMatrix, TimeSpan, WORD_DELIM_TOKEN
from .errors import EmptyTranscriptError, InfeasibleAlignmentError, VocabMismatchError

logger = logging.getLogger(__name__)

NEG_INF = -np.inf


@dataclass(frozen=True)
class TranscriptMap:
    """Words, their characters, and the character-to-word membership map."""

    words: tuple[str, ...]
    chars: tuple[tuple[str, int], ...]  # (character, word_index)
    vocab_indices: tuple[int, ...]  # per-character index into the vocabulary

    def __post_init__(self):
        object.__setattr__(self, "words", tuple(self.words))
        object.__setattr__(self, "chars", tuple(self.chars))
        object.__setattr__(self, "vocab_indices", tuple(self.vocab_indices))
        prev = 0
        for _, wi in self.chars:
            if wi < prev or not 0 <= wi < len(self.words):
                raise ValueError("word_index values must be non-decreasing and in range")
            prev = wi


@dataclass(frozen=True)
class CharSpan:
    start_frame: int
    end_frame: int
    score: float


@dataclass(frozen=True)
class CharAlignment:
    """Per-character frame spans from the best constrained CTC path."""

    spans: tuple[CharSpan, ...]
    path_log_prob: float


def decompose(transcript: str, vocab) -> TranscriptMap:
    """Split a transcript into words and vocabulary-mapped characters.

    Normalization: lowercase, collapse whitespace, drop characters absent
    from the vocabulary. A word whose characters are all dropped is removed
    with a warning and word indices are re-packed.
    """
    vocab = list(vocab)
    lookup = {tok: i for i, tok in enumerate(vocab)}
    words = []
    chars = []
    indices = []
    for raw_word in transcript.lower().split():
        kept = [
            c
            for c in raw_word
            if c in lookup and c != WORD_DELIM_TOKEN
        ]
        if not kept:
            logger.warning("word %r dropped: no characters in vocabulary", raw_word)
            continue
        if len(kept) < len(raw_word):
            logger.debug(
                "word %r: %d characters dropped", raw_word, len(raw_word) - len(kept)
            )
        word_index = len(words)
        words.append("".join(kept))
        for c in kept:
            chars.append((c, word_index))
            indices.append(lookup[c])
    if not chars:
        raise EmptyTranscriptError(
            f"transcript {transcript!r} retained no characters under the vocabulary"
        )
    return TranscriptMap(words=tuple(words), chars=tuple(chars), vocab_indices=tuple(indices))


def _label_sequence(em: EmissionMatrix, tm: TranscriptMap):
    """CTC label sequence with optional word delimiters; maps label -> char index."""
    labels = []
    char_of_label = []  # index into tm.chars, or None for a word delimiter
    prev_word = None
    for k, (_, wi) in enumerate(tm.chars):
        if prev_word is not None and wi != prev_word and em.word_delim_index is not None:
            labels.append(em.word_delim_index)
            char_of_label.append(None)
        labels.append(tm.vocab_indices[k])
        char_of_label.append(k)
        prev_word = wi
    return labels, char_of_label


def force_align(em: EmissionMatrix, tm: TranscriptMap) -> CharAlignment:
    """Viterbi-align the transcript to the emission matrix.

    The trellis interleaves blanks with the label sequence (blank, l1, blank,
    l2, ..., blank). Allowed transitions are stay, advance by one state, and
    advance by two states when that skips a blank between distinct labels.
    Ties prefer stay over advance, deterministically.
    """
    for k, vi in enumerate(tm.vocab_indices):
        if not 0 <= vi < em.vocab_size:
            raise VocabMismatchError(
                f"character {tm.chars[k][0]!r} maps outside the vocabulary"
            )
    labels, char_of_label = _label_sequence(em, tm)
    lp = em.log_probs
    t_total = em.num_frames
    n_labels = len(labels)
    n_states = 2 * n_labels + 1  # even states are blanks, odd states labels

    repeats = sum(1 for a, b in zip(labels, labels[1:]) if a == b)
    if t_total < n_labels + repeats:
        raise InfeasibleAlignmentError(
            f"{t_total} frames cannot realize {n_labels} labels "
            f"({repeats} adjacent repeats)"
        )

    state_tokens = np.empty(n_states, dtype=np.int64)
    state_tokens[0::2] = em.blank_index
    state_tokens[1::2] = labels

    # skip (advance-2) allowed into odd state s when labels differ
    can_skip = np.zeros(n_states, dtype=bool)
    for s in range(3, n_states, 2):
        can_skip[s] = labels[(s - 1) // 2] != labels[(s - 3) // 2]

    dp = np.full(n_states, NEG_INF)
    dp[0] = lp[0, em.blank_index]
    if n_states > 1:
        dp[1] = lp[0, labels[0]]
    backptr = np.zeros((t_total, n_states), dtype=np.int8)

    for t in range(1, t_total):
        adv1 = np.full(n_states, NEG_INF)
        adv1[1:] = dp[:-1]
        adv2 = np.full(n_states, NEG_INF)
        adv2[2:] = dp[:-2]
        adv2[~can_skip] = NEG_INF
        # candidate order encodes the tie-break: stay, advance 1, advance 2
        cands = np.stack([dp, adv1, adv2])
        choice = np.argmax(cands, axis=0)
        dp = cands[choice, np.arange(n_states)] + lp[t, state_tokens]
        backptr[t] = choice

    end_states = [n_states - 1]
    if n_states > 1:
        end_states.append(n_states - 2)
    # tie prefers the final blank
    best_end = max(end_states, key=lambda s: (dp[s], s == n_states - 1))
    best_score = dp[best_end]
    if not np.isfinite(best_score):
        raise InfeasibleAlignmentError("no feasible path through the CTC trellis")

    # backtrack to the per-frame state sequence
    states = np.empty(t_total, dtype=np.int64)
    s = best_end
    for t in range(t_total - 1, -1, -1):
        states[t] = s
        s -= backptr[t, s]

    spans: list[CharSpan | None] = [None] * len(tm.chars)
    starts = {}
    ends = {}
    scores = {}
    for t, s in enumerate(states):
        if s % 2 == 1:
            k = char_of_label[(s - 1) // 2]
            if k is None:
                continue  # word delimiter frames belong to no word
            starts.setdefault(k, t)
            ends[k] = t
            scores[k] = scores.get(k, 0.0) + lp[t, tm.vocab_indices[k]]
    for k in range(len(tm.chars)):
        if k not in starts:
            raise InfeasibleAlignmentError(
                f"character {k} never entered the best path"
            )
        spans[k] = CharSpan(starts[k], ends[k], scores[k])
    return CharAlignment(spans=tuple(spans), path_log_prob=float(best_score))


def frames_to_seconds(
    ca: CharAlignment, em: EmissionMatrix, audio_duration_s: float
) -> list[TimeSpan]:
    """Convert frame spans to time spans via the effective frame stride."""
    if audio_duration_s <= 0:
        raise ValueError("audio_duration_s must be positive")
    stride = em.frame_stride_seconds
    if stride is None:
        stride = audio_duration_s / em.num_frames
    out = []
    for span in ca.spans:
        end = min((span.end_frame + 1) * stride, audio_duration_s)
        start = max(0.0, min(span.start_frame * stride, audio_duration_s))
        if end <= start:  # possible only when an explicit stride overshoots
            start = max(0.0, end - stride)
        out.append(TimeSpan(start, end))
    return out


def alignment_table(
    tm: TranscriptMap, spans: list[TimeSpan]
) -> str:
    """Plain tabular dump (char, word_index, start_s, end_s) for inspection."""
    lines = ["char\tword_index\tstart_s\tend_s"]
    for (char, wi), span in zip(tm.chars, spans):
        lines.append(f"{char}\t{wi}\t{span.start_s:.6f}\t{span.end_s:.6f}")
    return "\n".join(lines) + "\n"
