"""Spectral boundary refinement and word-level aggregation of character spans."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .align import TranscriptMap
from .core import Segmentation, TimeSpan, Waveform, WordSegment
from .errors import InternalError, TooShortError


@dataclass(frozen=True)
class RefineConfig:
    """Weights and framing for the combined energy/flux boundary objective."""

    alpha: float = 0.8  # weight on RMS energy
    beta: float = 0.2  # weight on spectral flux
    delta_s: float = 0.05  # search half-width around a candidate boundary
    win_s: float = 0.025
    hop_s: float = 0.010
    normalize: bool = True  # min-max normalize features before combining

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0 or self.alpha + self.beta <= 0:
            raise ValueError("need alpha >= 0, beta >= 0, alpha + beta > 0")
        if self.delta_s <= 0:
            raise ValueError("delta_s must be positive")
        if self.win_s <= 0 or self.hop_s <= 0:
            raise ValueError("win_s and hop_s must be positive")


@dataclass(frozen=True)
class SpectralFeatures:
    """Per-frame RMS energy and spectral flux with frame-center timestamps."""

    rms_energy: np.ndarray
    spectral_flux: np.ndarray
    frame_times_s: np.ndarray
    hop_s: float
    win_s: float

    def __post_init__(self):
        for name in ("rms_energy", "spectral_flux", "frame_times_s"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        if not (
            len(self.rms_energy) == len(self.spectral_flux) == len(self.frame_times_s)
        ):
            raise ValueError("feature sequences must have equal length")
        if np.any(self.rms_energy < 0) or np.any(self.spectral_flux < 0):
            raise ValueError("features must be non-negative")


def _minmax(x: np.ndarray) -> np.ndarray:
    lo, hi = float(x.min()), float(x.max())
    if hi - lo <= 0:
        return np.zeros_like(x)
    return (x - lo) / (hi - lo)


def compute_features(w: Waveform, cfg: RefineConfig) -> SpectralFeatures:
    """Hann-windowed RMS energy and L2 spectral flux on a fixed frame grid."""
    win = max(2, round(cfg.win_s * w.sample_rate))
    hop = max(1, round(cfg.hop_s * w.sample_rate))
    if len(w.samples) < win:
        raise TooShortError(
            f"waveform of {len(w.samples)} samples is shorter than one "
            f"{win}-sample analysis window"
        )
    frames = np.lib.stride_tricks.sliding_window_view(w.samples, win)[::hop]
    window = np.hanning(win)
    tapered = frames * window
    rms = np.sqrt(np.mean(tapered**2, axis=1))
    mags = np.abs(np.fft.rfft(tapered, axis=1))
    flux = np.zeros(len(frames))
    if len(frames) > 1:
        flux[1:] = np.linalg.norm(np.diff(mags, axis=0), axis=1)
    if cfg.normalize:
        rms = _minmax(rms)
        flux = _minmax(flux)
    times = (np.arange(len(frames)) * hop + win / 2) / w.sample_rate
    return SpectralFeatures(
        rms_energy=rms,
        spectral_flux=flux,
        frame_times_s=times,
        hop_s=hop / w.sample_rate,
        win_s=win / w.sample_rate,
    )


def refine_boundary(
    t_est: float, feats: SpectralFeatures, cfg: RefineConfig, clamp: TimeSpan
) -> float:
    """Move a boundary to the least-active frame center near it.

    Minimizes alpha*E + beta*SF over frame centers within
    [t_est - delta, t_est + delta] intersected with the clamp window. Ties go
    to the frame nearest t_est, then to the earlier frame. If no frame center
    falls in the window, t_est is returned unchanged.
    """
    lo = max(t_est - cfg.delta_s, clamp.start_s)
    hi = min(t_est + cfg.delta_s, clamp.end_s)
    times = feats.frame_times_s
    in_window = np.nonzero((times >= lo) & (times <= hi))[0]
    if len(in_window) == 0:
        return t_est
    objective = cfg.alpha * feats.rms_energy + cfg.beta * feats.spectral_flux
    best = None
    for idx in in_window:
        key = (objective[idx], abs(times[idx] - t_est), times[idx])
        if best is None or key < best[0]:
            best = (key, idx)
    return float(times[best[1]])


def refine_alignment(
    char_spans: list[TimeSpan],
    feats: SpectralFeatures,
    cfg: RefineConfig,
    total_duration_s: float | None = None,
) -> list[TimeSpan]:
    """Refine every boundary of an ordered span list without crossings.

    Interior boundaries are clamped between the midpoints of the neighboring
    spans; when consecutive spans abut, their shared edge is refined once and
    stays shared. Spans separated by a gap refine each edge on its own side
    of the gap center. The first start and last end clamp to [0, duration].
    """
    if not char_spans:
        return []
    if total_duration_s is None:
        total_duration_s = max(s.end_s for s in char_spans)
    mids = [(s.start_s + s.end_s) / 2 for s in char_spans]
    starts = [s.start_s for s in char_spans]
    ends = [s.end_s for s in char_spans]

    new_starts = list(starts)
    new_ends = list(ends)

    first_clamp = TimeSpan(0.0, mids[0]) if mids[0] > 0 else None
    if first_clamp is not None:
        new_starts[0] = refine_boundary(starts[0], feats, cfg, first_clamp)
    if total_duration_s > mids[-1]:
        new_ends[-1] = refine_boundary(
            ends[-1], feats, cfg, TimeSpan(mids[-1], total_duration_s)
        )

    for k in range(len(char_spans) - 1):
        left_mid, right_mid = mids[k], mids[k + 1]
        if right_mid <= left_mid:
            continue  # degenerate neighborhood, keep original boundaries
        if abs(ends[k] - starts[k + 1]) <= 1e-12:
            shared = refine_boundary(
                ends[k], feats, cfg, TimeSpan(left_mid, right_mid)
            )
            new_ends[k] = shared
            new_starts[k + 1] = shared
        else:
            gap_mid = (ends[k] + starts[k + 1]) / 2
            if gap_mid > left_mid:
                new_ends[k] = refine_boundary(
                    ends[k], feats, cfg, TimeSpan(left_mid, gap_mid)
                )
            if right_mid > gap_mid:
                new_starts[k + 1] = refine_boundary(
                    starts[k + 1], feats, cfg, TimeSpan(gap_mid, right_mid)
                )

    out = []
    for k in range(len(char_spans)):
        start, end = new_starts[k], new_ends[k]
        if end <= start:  # both edges landed on the same frame center
            end = start + 1e-9
        out.append(TimeSpan(start, end))
    return out


def aggregate_words(
    char_spans: list[TimeSpan], tm: TranscriptMap, total_duration_s: float
) -> Segmentation:
    """Merge refined character spans into word segments via the membership map."""
    if len(char_spans) != len(tm.chars):
        raise InternalError(
            f"{len(char_spans)} spans for {len(tm.chars)} characters"
        )
    by_word: dict[int, list[TimeSpan]] = {}
    for (_, wi), span in zip(tm.chars, char_spans):
        by_word.setdefault(wi, []).append(span)
    segments = []
    for wi, word in enumerate(tm.words):
        spans = by_word.get(wi)
        if not spans:
            raise InternalError(f"word {wi} ({word!r}) has no character spans")
        hull = TimeSpan(min(s.start_s for s in spans), max(s.end_s for s in spans))
        segments.append(WordSegment(word=word, span=hull, char_spans=tuple(spans)))
    return Segmentation(words=tuple(segments), total_duration_s=total_duration_s)
