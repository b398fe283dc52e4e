"""Command-line surface: synth -> segment -> attribute -> diagnose, plus the
emm-write test utility."""

from __future__ import annotations

import argparse
import csv
import logging
import math
import os
import shlex
import sys
import time
from dataclasses import dataclass, fields

import numpy as np

from . import align, core, diagnostics, refine, shapley
from .core import Segmentation, TimeSpan, Waveform, WordSegment
from .errors import UndefinedTestError, WordshapError
from .game import CoalitionGame, SubprocessEvaluator, TcpEvaluator

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_TOTAL_FAILURE = 1
EXIT_PARTIAL_FAILURE = 2


@dataclass
class RunConfig:
    audio_dir: str = "audio"
    transcripts: str = "transcripts.tsv"
    emissions_dir: str = "emissions"
    vocab: str = "vocab.txt"
    output_dir: str = "out"
    alpha: float = 0.8
    beta: float = 0.2
    delta_s: float = 0.05
    win_s: float = 0.025
    hop_s: float = 0.010
    method: str = "neyman"
    budget_multiplier: float = 3.0
    seed: int = 0
    evaluator_cmd: str = ""
    evaluator_host: str = ""
    evaluator_port: int = 0
    mode: str = ""

    def refine_config(self) -> refine.RefineConfig:
        return refine.RefineConfig(
            alpha=self.alpha,
            beta=self.beta,
            delta_s=self.delta_s,
            win_s=self.win_s,
            hop_s=self.hop_s,
        )


def load_config(path: str | None, overrides: dict) -> RunConfig:
    """Flat key=value config file with CLI-flag overrides."""
    values: dict = {}
    if path:
        with open(path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, 1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise WordshapError(f"{path}:{lineno}: expected key=value")
                key, _, value = line.partition("=")
                values[key.strip()] = value.strip()
    values.update({k: v for k, v in overrides.items() if v is not None})
    cfg = RunConfig()
    casts = {f.name: type(getattr(cfg, f.name)) for f in fields(RunConfig)}
    for key, value in values.items():
        if key not in casts:
            raise WordshapError(f"unknown config key {key!r}")
        setattr(cfg, key, casts[key](value))
    return cfg


def _read_transcripts(path: str) -> dict[str, str]:
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.rstrip("\n")
            if not line:
                continue
            sample_id, _, text = line.partition("\t")
            out[sample_id] = text
    return out


# --- synth ------------------------------------------------------------------

_LEXICON = [
    "hi", "yo", "sun", "map", "cat", "dog", "red", "blue", "go", "stop",
    "one", "two", "day", "run", "law", "tea", "moon", "sky", "ink", "jazz",
]
_CHAR_S = 0.09
_GAP_S = 0.12
_EDGE_S = 0.15
_FRAME_STRIDE_S = 0.02


def synth_corpus(out_dir: str, samples: int, seed: int, sample_rate: int = 16000,
                 min_words: int = 3, max_words: int = 8) -> None:
    """Generate a small synthetic corpus: tone-burst words over silence,
    with emissions peaked at the scheduled character per frame."""
    rng = np.random.default_rng(seed)
    vocab = [core.BLANK_TOKEN] + [chr(c) for c in range(ord("a"), ord("z") + 1)] + [
        core.WORD_DELIM_TOKEN
    ]
    os.makedirs(os.path.join(out_dir, "audio"), exist_ok=True)
    os.makedirs(os.path.join(out_dir, "emissions"), exist_ok=True)
    core.write_vocab(vocab, os.path.join(out_dir, "vocab.txt"))
    blank = 0
    with open(os.path.join(out_dir, "transcripts.tsv"), "w", encoding="utf-8") as tf:
        for k in range(samples):
            sample_id = f"{k:04d}"
            n_words = int(rng.integers(min_words, max_words + 1))
            words = [str(rng.choice(_LEXICON)) for _ in range(n_words)]
            # frame-level schedule: which vocab index is active when
            schedule: list[tuple[float, float, int]] = []
            t = _EDGE_S
            for w, word in enumerate(words):
                for ch in word:
                    schedule.append((t, t + _CHAR_S, vocab.index(ch)))
                    t += _CHAR_S
                t += _GAP_S
            duration = t - _GAP_S + _EDGE_S
            n_samples = int(round(duration * sample_rate))
            audio = np.zeros(n_samples)
            ts = np.arange(n_samples) / sample_rate
            for start, end, vi in schedule:
                freq = 180.0 + 35.0 * (vi - 1)
                seg = (ts >= start) & (ts < end)
                audio[seg] = 0.3 * np.sin(2 * np.pi * freq * ts[seg])
            core.save_wav(
                Waveform(audio, sample_rate),
                os.path.join(out_dir, "audio", sample_id + ".wav"),
            )
            n_frames = int(math.ceil(duration / _FRAME_STRIDE_S))
            v = len(vocab)
            probs = np.full((n_frames, v), 0.1 / (v - 1))
            for frame in range(n_frames):
                center = (frame + 0.5) * _FRAME_STRIDE_S
                active = blank
                for start, end, vi in schedule:
                    if start <= center < end:
                        active = vi
                        break
                probs[frame, active] = 0.9
            core.write_emissions(
                np.log(probs), os.path.join(out_dir, "emissions", sample_id + ".emm")
            )
            tf.write(f"{sample_id}\t{' '.join(words)}\n")


# --- segment ----------------------------------------------------------------

def segment_sample(cfg: RunConfig, sample_id: str, transcript: str) -> Segmentation:
    wav = core.load_wav(os.path.join(cfg.audio_dir, sample_id + ".wav"))
    em = core.load_emissions(
        os.path.join(cfg.emissions_dir, sample_id + ".emm"), cfg.vocab
    )
    tm = align.decompose(transcript, em.vocab)
    ca = align.force_align(em, tm)
    char_spans = align.frames_to_seconds(ca, em, wav.duration_seconds)
    rcfg = cfg.refine_config()
    feats = refine.compute_features(wav, rcfg)
    refined = refine.refine_alignment(char_spans, feats, rcfg, wav.duration_seconds)
    return refine.aggregate_words(refined, tm, wav.duration_seconds)


def write_segmentation(seg: Segmentation, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write("word\tstart_s\tend_s\n")
        for w in seg.words:
            f.write(f"{w.word}\t{w.span.start_s:.6f}\t{w.span.end_s:.6f}\n")


def read_segmentation(path: str, total_duration_s: float) -> Segmentation:
    words = []
    with open(path, encoding="utf-8") as f:
        next(f)  # header
        for line in f:
            word, start, end = line.rstrip("\n").split("\t")
            span = TimeSpan(float(start), float(end))
            words.append(WordSegment(word=word, span=span, char_spans=(span,)))
    return Segmentation(words=tuple(words), total_duration_s=total_duration_s)


def cmd_segment(cfg: RunConfig, parallel: int = 1) -> int:
    transcripts = _read_transcripts(cfg.transcripts)
    seg_dir = os.path.join(cfg.output_dir, "segments")
    os.makedirs(seg_dir, exist_ok=True)
    counts = []
    failures = 0

    def run_one(item):
        sample_id, transcript = item
        try:
            seg = segment_sample(cfg, sample_id, transcript)
        except WordshapError as exc:
            logger.error("sample %s skipped: %s", sample_id, exc)
            return sample_id, None
        write_segmentation(seg, os.path.join(seg_dir, sample_id + ".tsv"))
        return sample_id, len(seg)

    items = sorted(transcripts.items())
    if parallel > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=parallel) as pool:
            results = list(pool.map(run_one, items))
    else:
        results = [run_one(item) for item in items]
    for _, n in results:
        if n is None:
            failures += 1
        else:
            counts.append(n)
    if counts:
        arr = np.array(counts)
        q1, med, q3 = np.percentile(arr, [25, 50, 75])
        print(
            f"segmented {len(counts)}/{len(items)} samples; players "
            f"min={arr.min()} q1={q1:.1f} median={med:.1f} q3={q3:.1f} max={arr.max()}"
        )
    if failures == len(items):
        return EXIT_TOTAL_FAILURE
    return EXIT_PARTIAL_FAILURE if failures else EXIT_OK


# --- attribute --------------------------------------------------------------

def _make_evaluator(cfg: RunConfig):
    if cfg.evaluator_cmd:
        return SubprocessEvaluator(shlex.split(cfg.evaluator_cmd))
    if cfg.evaluator_host:
        return TcpEvaluator(cfg.evaluator_host, cfg.evaluator_port)
    raise WordshapError("config needs evaluator_cmd or evaluator_host/evaluator_port")


def cmd_attribute(cfg: RunConfig, force: bool = False) -> int:
    seg_dir = os.path.join(cfg.output_dir, "segments")
    res_dir = os.path.join(cfg.output_dir, "results")
    os.makedirs(res_dir, exist_ok=True)
    sample_ids = sorted(
        name[:-4] for name in os.listdir(seg_dir) if name.endswith(".tsv")
    )
    if not sample_ids:
        logger.error("no segmentations in %s", seg_dir)
        return EXIT_TOTAL_FAILURE
    evaluator = _make_evaluator(cfg)
    evaluator.handshake()
    failures = 0
    try:
        for sample_id in sample_ids:
            out_path = os.path.join(res_dir, sample_id + ".json")
            if os.path.exists(out_path) and not force:
                logger.info("sample %s: result exists, skipping", sample_id)
                continue
            try:
                wav = core.load_wav(os.path.join(cfg.audio_dir, sample_id + ".wav"))
                seg = read_segmentation(
                    os.path.join(seg_dir, sample_id + ".tsv"), wav.duration_seconds
                )
                game = CoalitionGame(seg, wav, evaluator)
                t0 = time.monotonic()
                if cfg.method == "exact":
                    result = shapley.exact_shapley(game)
                else:
                    result = shapley.neyman_shapley(
                        game, budget_multiplier=cfg.budget_multiplier, seed=cfg.seed
                    )
                elapsed = time.monotonic() - t0
                if cfg.method == "exact":
                    full = (1 << game.n) - 1
                    gap = abs(sum(result.shapley) - (game.value(full) - game.value(0)))
                    logger.info("sample %s: efficiency gap %.3g", sample_id, gap)
                tmp_path = out_path + ".tmp"
                shapley.save_result(
                    result,
                    tmp_path,
                    sample_id=sample_id,
                    words=[w.word for w in seg.words],
                    spans=[(w.span.start_s, w.span.end_s) for w in seg.words],
                    wallclock_s=elapsed,
                    mode=cfg.mode,
                )
                os.replace(tmp_path, out_path)
            except WordshapError as exc:
                logger.error("sample %s failed: %s", sample_id, exc)
                failures += 1
    finally:
        evaluator.close()
    if failures == len(sample_ids):
        return EXIT_TOTAL_FAILURE
    return EXIT_PARTIAL_FAILURE if failures else EXIT_OK


# --- diagnose ---------------------------------------------------------------

_METRIC_NAMES = ("top20", "gini", "entropy_norm")


def _collect(results_dir: str) -> dict[str, dict]:
    out = {}
    for name in sorted(os.listdir(results_dir)):
        if name.endswith(".json"):
            doc = shapley.load_result(os.path.join(results_dir, name))
            out[doc.get("sample_id") or name[:-5]] = doc
    return out


def _metric_row(doc: dict) -> dict:
    shares = np.abs(np.asarray(doc["shapley"], dtype=np.float64))
    total = shares.sum()
    shares = shares / total if total > 0 else np.full(len(shares), 1.0 / len(shares))
    return {
        "n": doc["n"],
        "top20": diagnostics.top_k_mass(shares),
        "gini": diagnostics.gini(shares),
        "entropy_norm": diagnostics.entropy_norm(shares),
        "calls": doc["distinct_calls"],
        "wallclock_s": doc.get("wallclock_s"),
        "mode": doc.get("mode") or "",
        "shares": shares,
    }


def cmd_diagnose(results_a: str, results_b: str, out_dir: str, alpha: float = 0.05) -> int:
    docs_a = _collect(results_a)
    docs_b = _collect(results_b)
    shared = sorted(set(docs_a) & set(docs_b))
    dropped = (set(docs_a) | set(docs_b)) - set(shared)
    if dropped:
        logger.warning("%d unmatched sample ids dropped", len(dropped))
    if len(shared) < 3:
        raise UndefinedTestError(f"only {len(shared)} paired samples; need >= 3")
    os.makedirs(out_dir, exist_ok=True)

    rows = {"a": [], "b": []}
    for sample_id in shared:
        rows["a"].append((sample_id, True, _metric_row(docs_a[sample_id])))
        rows["b"].append((sample_id, False, _metric_row(docs_b[sample_id])))

    with open(os.path.join(out_dir, "metrics.csv"), "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(
            ["sample_id", "mode", "sgpa_on", "n", "top20", "gini", "entropy_norm",
             "calls", "wallclock_s"]
        )
        for side in ("a", "b"):
            for sample_id, sgpa_on, row in rows[side]:
                writer.writerow(
                    [sample_id, row["mode"], sgpa_on, row["n"],
                     f"{row['top20']:.9f}", f"{row['gini']:.9f}",
                     f"{row['entropy_norm']:.9f}", row["calls"],
                     row["wallclock_s"] if row["wallclock_s"] is not None else ""]
                )

    with open(os.path.join(out_dir, "tests.csv"), "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["mode", "metric", "p", "cohens_d", "significant"])
        mode = rows["a"][0][2]["mode"]
        for metric in _METRIC_NAMES:
            a_vals = [row[metric] for _, _, row in rows["a"]]
            b_vals = [row[metric] for _, _, row in rows["b"]]
            try:
                res = diagnostics.paired_test(
                    a_vals, b_vals, num_comparisons=len(_METRIC_NAMES),
                    alpha=alpha, metric=metric,
                )
                writer.writerow(
                    [mode, metric, f"{res.p_value:.6g}", f"{res.cohens_d:.4f}",
                     res.significant]
                )
            except UndefinedTestError:
                writer.writerow([mode, metric, "undefined", "undefined", False])

    for side, name in (("a", "profile_a.csv"), ("b", "profile_b.csv")):
        profiles = []
        for _, _, row in rows[side]:
            positions, cumulative, _ = diagnostics.cumulative_profile(row["shares"])
            profiles.append((positions, cumulative))
        grid, mean_curve, derivative = diagnostics.profile_resample(profiles)
        with open(os.path.join(out_dir, name), "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["grid", "mean_cumulative", "mean_derivative"])
            for g, c, d in zip(grid, mean_curve, derivative):
                writer.writerow([f"{g:.6f}", f"{c:.9f}", f"{d:.9f}"])
    print(f"diagnose: {len(shared)} paired samples -> {out_dir}")
    return EXIT_OK


# --- emm-write --------------------------------------------------------------

def cmd_emm_write(matrix_txt: str, out_path: str) -> int:
    rows = []
    with open(matrix_txt, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                rows.append([float(x) for x in line.split()])
    core.write_emissions(np.array(rows), out_path)
    print(f"wrote {len(rows)}x{len(rows[0])} EMM1 matrix to {out_path}")
    return EXIT_OK


# --- entry point ------------------------------------------------------------

def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value config file")
    for f in fields(RunConfig):
        p.add_argument(f"--{f.name.replace('_', '-')}", dest=f.name, default=None)


def _overrides(args: argparse.Namespace) -> dict:
    return {f.name: getattr(args, f.name, None) for f in fields(RunConfig)}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=logging.INFO, format="%(levelname)s %(name)s: %(message)s"
    )
    parser = argparse.ArgumentParser(
        prog="wordshap",
        description="Word-aligned audio segmentation and Shapley attribution",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate a synthetic desk-scale corpus")
    p_synth.add_argument("--out", required=True)
    p_synth.add_argument("--samples", type=int, default=10)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--sample-rate", type=int, default=16000)
    p_synth.add_argument("--min-words", type=int, default=3)
    p_synth.add_argument("--max-words", type=int, default=8)

    p_seg = sub.add_parser("segment", help="align and refine word segments")
    _add_config_args(p_seg)
    p_seg.add_argument("--parallel", type=int, default=1)

    p_attr = sub.add_parser("attribute", help="compute Shapley attributions")
    _add_config_args(p_attr)
    p_attr.add_argument("--force", action="store_true")

    p_diag = sub.add_parser("diagnose", help="paired metric comparison of two result sets")
    p_diag.add_argument("results_a")
    p_diag.add_argument("results_b")
    p_diag.add_argument("--out", required=True)
    p_diag.add_argument("--alpha", type=float, default=0.05)

    p_emm = sub.add_parser("emm-write", help="build an EMM1 file from tabular text")
    p_emm.add_argument("matrix_txt")
    p_emm.add_argument("out_path")

    args = parser.parse_args(argv)
    try:
        if args.command == "synth":
            synth_corpus(
                args.out, args.samples, args.seed, args.sample_rate,
                args.min_words, args.max_words,
            )
            return EXIT_OK
        if args.command == "segment":
            cfg = load_config(args.config, _overrides(args))
            return cmd_segment(cfg, parallel=args.parallel)
        if args.command == "attribute":
            cfg = load_config(args.config, _overrides(args))
            return cmd_attribute(cfg, force=args.force)
        if args.command == "diagnose":
            return cmd_diagnose(args.results_a, args.results_b, args.out, args.alpha)
        if args.command == "emm-write":
            return cmd_emm_write(args.matrix_txt, args.out_path)
    except WordshapError as exc:
        logger.error("%s", exc)
        return EXIT_TOTAL_FAILURE
    return EXIT_TOTAL_FAILURE


if __name__ == "__main__":
    sys.exit(main())
