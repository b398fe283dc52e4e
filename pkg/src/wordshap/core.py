"""Shared domain types, WAV audio I/O, and the EMM1 emission-matrix format."""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    FormatError,
    IoError,
    TruncationError,
    UnsupportedError,
    VocabMismatchError,
)

logger = logging.getLogger(__name__)

BLANK_TOKEN = "<blank>"
WORD_DELIM_TOKEN = "|"

EMM_MAGIC = b"EMM1"
ROW_SUM_TOLERANCE = 1e-3


@dataclass(frozen=True)
class TimeSpan:
    """Half-open-ish time interval in seconds; end must exceed start."""

    start_s: float
    end_s: float

    def __post_init__(self):
        if not (np.isfinite(self.start_s) and np.isfinite(self.end_s)):
            raise ValueError("TimeSpan bounds must be finite")
        if self.start_s < 0:
            raise ValueError(f"TimeSpan start must be >= 0, got {self.start_s}")
        if self.end_s <= self.start_s:
            raise ValueError(
                f"TimeSpan end ({self.end_s}) must exceed start ({self.start_s})"
            )

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s


@dataclass(frozen=True)
class Waveform:
    """Mono audio: amplitudes in [-1, 1] plus a sample rate in Hz."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", samples)
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if samples.ndim != 1:
            raise ValueError("Waveform samples must be one-dimensional")
        if not np.all(np.isfinite(samples)):
            raise ValueError("Waveform samples must be finite")
        if samples.size and np.max(np.abs(samples)) > 1.0 + 1e-12:
            raise ValueError("Waveform samples must lie in [-1, 1]")

    @property
    def duration_seconds(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class WordSegment:
    """One word-level player: its text, time span, and character provenance."""

    word: str
    span: TimeSpan
    char_spans: tuple[TimeSpan, ...]

    def __post_init__(self):
        object.__setattr__(self, "char_spans", tuple(self.char_spans))
        if self.char_spans:
            hull_start = min(c.start_s for c in self.char_spans)
            hull_end = max(c.end_s for c in self.char_spans)
            if abs(hull_start - self.span.start_s) > 1e-9 or abs(
                hull_end - self.span.end_s
            ) > 1e-9:
                raise ValueError("word span must be the hull of its character spans")


@dataclass(frozen=True)
class Segmentation:
    """Ordered, non-overlapping word segments over [0, total_duration_s]."""

    words: tuple[WordSegment, ...]
    total_duration_s: float

    def __post_init__(self):
        object.__setattr__(self, "words", tuple(self.words))
        prev_end = 0.0
        prev_start = -1.0
        for seg in self.words:
            if seg.span.start_s < prev_start:
                raise ValueError("word spans must be non-decreasing in start_s")
            if seg.span.start_s < prev_end - 1e-9:
                raise ValueError("word spans must not overlap")
            if seg.span.end_s > self.total_duration_s + 1e-9:
                raise ValueError("word span exceeds total duration")
            prev_start = seg.span.start_s
            prev_end = seg.span.end_s

    def __len__(self) -> int:
        return len(self.words)


@dataclass(frozen=True)
class EmissionMatrix:
    """T x V grid of log-probabilities over a character vocabulary."""

    log_probs: np.ndarray
    vocab: tuple[str, ...]
    blank_index: int
    word_delim_index: int | None = None
    frame_stride_seconds: float | None = None

    def __post_init__(self):
        lp = np.asarray(self.log_probs, dtype=np.float64)
        object.__setattr__(self, "log_probs", lp)
        object.__setattr__(self, "vocab", tuple(self.vocab))
        if lp.ndim != 2 or lp.shape[0] < 1 or lp.shape[1] < 2:
            raise ValueError("log_probs must be T x V with T >= 1, V >= 2")
        if len(self.vocab) != lp.shape[1]:
            raise VocabMismatchError(
                f"vocab has {len(self.vocab)} tokens, matrix has V={lp.shape[1]}"
            )
        if not 0 <= self.blank_index < lp.shape[1]:
            raise ValueError("blank_index out of range")
        if self.word_delim_index is not None:
            if not 0 <= self.word_delim_index < lp.shape[1]:
                raise ValueError("word_delim_index out of range")
            if self.word_delim_index == self.blank_index:
                raise ValueError("blank_index and word_delim_index must differ")
        if self.frame_stride_seconds is not None and self.frame_stride_seconds <= 0:
            raise ValueError("frame_stride_seconds must be positive")
        row_sums = np.exp(lp).sum(axis=1)
        bad = np.abs(row_sums - 1.0) > ROW_SUM_TOLERANCE
        if bad.any():
            # float32 exports of log-softmax rows drift; warn, don't reject
            logger.warning(
                "%d of %d emission rows deviate from unit probability mass "
                "(worst |sum-1| = %.3g)",
                int(bad.sum()),
                lp.shape[0],
                float(np.max(np.abs(row_sums - 1.0))),
            )

    @property
    def num_frames(self) -> int:
        return self.log_probs.shape[0]

    @property
    def vocab_size(self) -> int:
        return self.log_probs.shape[1]


# --- WAV I/O ---------------------------------------------------------------

_PCM16_SCALE = 32768.0


def _read_exact(f, count, what):
    data = f.read(count)
    if len(data) != count:
        raise FormatError(f"unexpected end of file while reading {what}")
    return data


def load_wav(path) -> Waveform:
    """Read a RIFF/WAVE file (PCM16 or float32, mono or multi-channel).

    Multi-channel audio is downmixed by averaging channels; amplitudes are
    clipped to [-1, 1] on ingest.
    """
    try:
        f = open(path, "rb")
    except OSError as exc:
        raise IoError(f"cannot open {path}: {exc}") from exc
    with f:
        header = f.read(12)
        if len(header) < 12 or header[:4] != b"RIFF" or header[8:12] != b"WAVE":
            raise FormatError(f"{path} is not a RIFF/WAVE file")
        fmt = None
        data = None
        while True:
            chunk_header = f.read(8)
            if len(chunk_header) < 8:
                break
            chunk_id, chunk_size = struct.unpack("<4sI", chunk_header)
            if chunk_id == b"fmt ":
                fmt = _read_exact(f, chunk_size, "fmt chunk")
            elif chunk_id == b"data":
                data = _read_exact(f, chunk_size, "data chunk")
            else:
                f.seek(chunk_size + (chunk_size & 1), 1)
        if fmt is None or len(fmt) < 16:
            raise FormatError(f"{path}: missing or short fmt chunk")
        if data is None:
            raise FormatError(f"{path}: missing data chunk")
        audio_format, channels, sample_rate, _, _, bits = struct.unpack(
            "<HHIIHH", fmt[:16]
        )
        if channels < 1:
            raise FormatError(f"{path}: zero channels")
        if audio_format == 1 and bits == 16:
            raw = np.frombuffer(data, dtype="<i2")
            samples = raw.astype(np.float64) / _PCM16_SCALE
        elif audio_format == 3 and bits == 32:
            samples = np.frombuffer(data, dtype="<f4").astype(np.float64)
        else:
            raise UnsupportedError(
                f"{path}: unsupported encoding (format={audio_format}, bits={bits}); "
                "only PCM16 and IEEE float32 are handled"
            )
        if channels > 1:
            usable = (len(samples) // channels) * channels
            samples = samples[:usable].reshape(-1, channels).mean(axis=1)
        samples = np.clip(samples, -1.0, 1.0)
        return Waveform(samples=samples, sample_rate=sample_rate)


def write_wav(w: Waveform, f) -> None:
    """Write PCM16 WAV bytes to a binary file object."""
    q = np.clip(np.round(w.samples * _PCM16_SCALE), -32768, 32767).astype("<i2")
    data = q.tobytes()
    byte_rate = w.sample_rate * 2
    f.write(b"RIFF")
    f.write(struct.pack("<I", 36 + len(data)))
    f.write(b"WAVE")
    f.write(b"fmt ")
    f.write(struct.pack("<IHHIIHH", 16, 1, 1, w.sample_rate, byte_rate, 2, 16))
    f.write(b"data")
    f.write(struct.pack("<I", len(data)))
    f.write(data)


def save_wav(w: Waveform, path) -> None:
    """Write the waveform as a mono PCM16 WAV file.

    Round-tripping through ``load_wav`` reproduces samples to within one
    16-bit quantization step (1/32768).
    """
    try:
        with open(path, "wb") as f:
            write_wav(w, f)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def waveform_to_wav_bytes(w: Waveform) -> bytes:
    import io

    buf = io.BytesIO()
    write_wav(w, buf)
    return buf.getvalue()


# --- EMM1 emission matrix format -------------------------------------------
#
# bytes 0-3   magic "EMM1"
# bytes 4-7   u32 little-endian T
# bytes 8-11  u32 little-endian V
# then T*V little-endian float32 log-probabilities, row-major.
# Sidecar vocab: UTF-8 text, one token per line, line i = vocab[i].


def write_emissions(log_probs: np.ndarray, path) -> None:
    lp = np.asarray(log_probs, dtype="<f4")
    if lp.ndim != 2:
        raise ValueError("log_probs must be two-dimensional")
    t, v = lp.shape
    try:
        with open(path, "wb") as f:
            f.write(EMM_MAGIC)
            f.write(struct.pack("<II", t, v))
            f.write(lp.tobytes())
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def write_vocab(vocab, path) -> None:
    try:
        with open(path, "w", encoding="utf-8") as f:
            for token in vocab:
                f.write(token + "\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def load_vocab(path) -> list[str]:
    try:
        with open(path, encoding="utf-8") as f:
            return [line.rstrip("\n") for line in f if line.rstrip("\n") != ""]
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc


def load_emissions(
    matrix_path, vocab_path, frame_stride_seconds: float | None = None
) -> EmissionMatrix:
    """Read an EMM1 matrix plus its sidecar vocabulary."""
    try:
        with open(matrix_path, "rb") as f:
            blob = f.read()
    except OSError as exc:
        raise IoError(f"cannot read {matrix_path}: {exc}") from exc
    if blob[:4] != EMM_MAGIC:
        raise FormatError(f"{matrix_path}: bad magic {blob[:4]!r}")
    if len(blob) < 12:
        raise TruncationError(f"{matrix_path}: header truncated")
    t, v = struct.unpack("<II", blob[4:12])
    payload = blob[12:]
    if len(payload) != t * v * 4:
        raise TruncationError(
            f"{matrix_path}: payload holds {len(payload)} bytes, header implies {t * v * 4}"
        )
    lp = np.frombuffer(payload, dtype="<f4").reshape(t, v).astype(np.float64)
    vocab = load_vocab(vocab_path)
    if len(vocab) != v:
        raise VocabMismatchError(
            f"{vocab_path} has {len(vocab)} tokens, matrix expects {v}"
        )
    if BLANK_TOKEN not in vocab:
        raise VocabMismatchError(f"{vocab_path} lacks the {BLANK_TOKEN!r} token")
    delim = vocab.index(WORD_DELIM_TOKEN) if WORD_DELIM_TOKEN in vocab else None
    return EmissionMatrix(
        log_probs=lp,
        vocab=tuple(vocab),
        blank_index=vocab.index(BLANK_TOKEN),
        word_delim_index=delim,
        frame_stride_seconds=frame_stride_seconds,
    )
