import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import pytest

from wordshap.core import Segmentation, TimeSpan, Waveform, WordSegment
from wordshap.errors import EvaluatorError, ProtocolError, TooManyPlayersError
from wordshap.game import (
    CoalitionGame,
    FunctionGame,
    Game,
    SubprocessEvaluator,
    coalition_members,
    coalition_size,
    full_coalition,
    mask_audio,
)

SR = 8000
STUB = [sys.executable, str(Path(__file__).parent / "stub_eval.py")]


def make_segmentation(edges, total=1.0):
    """Build word segments from a list of (start, end) pairs."""
    words = tuple(
        WordSegment(word=f"w{k}", span=TimeSpan(a, b), char_spans=(TimeSpan(a, b),))
        for k, (a, b) in enumerate(edges)
    )
    return Segmentation(words=words, total_duration_s=total)


def make_audio(seconds=1.0, seed=0):
    rng = np.random.default_rng(seed)
    return Waveform(rng.uniform(-0.9, 0.9, int(seconds * SR)), SR)


class TestMaskAudio:
    def test_full_coalition_is_identity(self):
        w = make_audio()
        seg = make_segmentation([(0.1, 0.3), (0.5, 0.8)])
        out = mask_audio(w, seg, full_coalition(2))
        assert np.array_equal(out.samples, w.samples)

    def test_excluded_span_zeroed_half_open(self):
        w = make_audio()
        seg = make_segmentation([(0.1, 0.3)])
        out = mask_audio(w, seg, 0)
        a, b = math.floor(0.1 * SR), math.floor(0.3 * SR)
        assert np.all(out.samples[a:b] == 0.0)
        assert out.samples[a - 1] == w.samples[a - 1]
        assert out.samples[b] == w.samples[b]

    def test_preserves_length_and_rate(self):
        w = make_audio()
        seg = make_segmentation([(0.2, 0.4)])
        out = mask_audio(w, seg, 0)
        assert len(out.samples) == len(w.samples)
        assert out.sample_rate == w.sample_rate

    def test_randomized_masking_contract(self, rng):
        """Samples in excluded spans are zero; all other samples untouched."""
        for _ in range(200):
            w = make_audio(seed=int(rng.integers(1 << 30)))
            n = int(rng.integers(1, 5))
            edges = np.sort(rng.uniform(0.01, 0.99, 2 * n))
            seg = make_segmentation(
                [(edges[2 * k], edges[2 * k + 1]) for k in range(n)]
            )
            coalition = int(rng.integers(0, 1 << n))
            out = mask_audio(w, seg, coalition)
            expected = w.samples.copy()
            for i in range(n):
                if not coalition >> i & 1:
                    a = math.floor(seg.words[i].span.start_s * SR)
                    b = math.floor(seg.words[i].span.end_s * SR)
                    expected[a:b] = 0.0
            assert np.array_equal(out.samples, expected)

    def test_rejects_out_of_range_coalition(self):
        w = make_audio()
        seg = make_segmentation([(0.1, 0.3)])
        with pytest.raises(ValueError):
            mask_audio(w, seg, 0b10)


class TestCoalitionHelpers:
    def test_basics(self):
        assert full_coalition(3) == 0b111
        assert coalition_size(0b101) == 2
        assert coalition_members(0b101, 3) == [0, 2]


class TestGameCache:
    def test_each_coalition_evaluated_once(self):
        calls = []
        g = FunctionGame(3, lambda m: calls.append(m) or float(m))
        for _ in range(3):
            for mask in range(8):
                g.value(mask)
        assert sorted(calls) == list(range(8))
        assert g.call_count == 8

    def test_is_cached(self):
        g = FunctionGame(2, float)
        assert not g.is_cached(1)
        g.value(1)
        assert g.is_cached(1)

    def test_single_flight_under_concurrency(self):
        def slow(mask):
            time.sleep(0.05)
            return float(mask)

        g = FunctionGame(4, slow)
        with ThreadPoolExecutor(max_workers=8) as pool:
            results = list(pool.map(lambda _: g.value(0b1010), range(8)))
        assert results == [10.0] * 8
        assert g.call_count == 1

    def test_failed_evaluation_not_cached(self):
        state = {"fail": True}

        def maybe(mask):
            if state["fail"]:
                raise RuntimeError("transient")
            return 7.0

        g = FunctionGame(2, maybe)
        with pytest.raises(RuntimeError):
            g.value(1)
        state["fail"] = False
        assert g.value(1) == 7.0

    def test_player_cap(self):
        with pytest.raises(TooManyPlayersError):
            FunctionGame(64, float)

    def test_invalid_coalition(self):
        g = FunctionGame(2, float)
        with pytest.raises(ValueError):
            g.value(0b100)


class TestSubprocessEvaluator:
    def test_additive_values(self):
        ev = SubprocessEvaluator(STUB + ["--kind", "additive", "--weights", "1,2,4"])
        try:
            ev.handshake()
            assert ev.deterministic is True
            audio = make_audio(0.05)
            assert ev.evaluate(audio, 0b101, 3) == 5.0
            assert ev.evaluate(audio, 0b111, 3) == 7.0
            assert ev.evaluate(audio, 0, 3) == 0.0
        finally:
            ev.close()

    def test_energy_of_decoded_audio(self):
        ev = SubprocessEvaluator(STUB + ["--kind", "energy"])
        try:
            ev.handshake()
            w = Waveform(np.full(400, 0.5), SR)
            value = ev.evaluate(w, 0, 1)
            assert value == pytest.approx(0.25, rel=1e-3)
        finally:
            ev.close()

    def test_retry_recovers_from_garbage_reply(self):
        ev = SubprocessEvaluator(STUB + ["--kind", "flaky", "--fail-first", "2"])
        try:
            ev.handshake()
            w = Waveform(np.zeros(400), SR)
            assert ev.evaluate(w, 0, 1) == 0.0
        finally:
            ev.close()

    def test_retries_exhausted(self):
        ev = SubprocessEvaluator(STUB + ["--kind", "flaky", "--fail-first", "99"])
        try:
            ev.handshake()
            with pytest.raises(EvaluatorError):
                ev.evaluate(Waveform(np.zeros(400), SR), 0, 1)
        finally:
            ev.close()

    def test_error_reply(self):
        ev = SubprocessEvaluator(STUB + ["--kind", "broken"])
        try:
            ev.handshake()
            with pytest.raises(EvaluatorError):
                ev.evaluate(Waveform(np.zeros(400), SR), 0, 1)
        finally:
            ev.close()

    def test_wrong_protocol_name(self):
        cmd = [sys.executable, "-c",
               "print('{\"protocol\": \"other/9\", \"deterministic\": true}', flush=True);"
               "import time; time.sleep(5)"]
        ev = SubprocessEvaluator(cmd)
        try:
            with pytest.raises(ProtocolError):
                ev.handshake()
        finally:
            ev.close()

    def test_non_finite_value_rejected(self):
        script = (
            "import sys, json\n"
            "print(json.dumps({'protocol': 'mllm-eval/1', 'deterministic': True}), flush=True)\n"
            "for line in sys.stdin:\n"
            "    req = json.loads(line)\n"
            "    print(json.dumps({'id': req['id'], 'value': 'nan'}), flush=True)\n"
        )
        ev = SubprocessEvaluator([sys.executable, "-c", script])
        try:
            ev.handshake()
            with pytest.raises(ProtocolError):
                ev.evaluate(Waveform(np.zeros(400), SR), 0, 1)
        finally:
            ev.close()

    def test_nondeterministic_handshake_warns(self, caplog):
        ev = SubprocessEvaluator(STUB + ["--nondeterministic"])
        try:
            with caplog.at_level("WARNING"):
                ev.handshake()
            assert ev.deterministic is False
            assert any("deterministic" in r.message for r in caplog.records)
        finally:
            ev.close()


class TestCoalitionGame:
    def test_masked_energy_monotone_for_zero_background(self):
        t = np.arange(SR) / SR
        s = 0.4 * np.sin(2 * np.pi * 200 * t)
        s[: int(0.1 * SR)] = 0.0
        s[int(0.9 * SR):] = 0.0
        w = Waveform(s, SR)
        seg = make_segmentation([(0.1, 0.5), (0.5, 0.9)])
        ev = SubprocessEvaluator(STUB + ["--kind", "energy"])
        try:
            ev.handshake()
            g = CoalitionGame(seg, w, ev)
            v0, v1, v3 = g.value(0), g.value(0b01), g.value(0b11)
            assert v0 == pytest.approx(0.0, abs=1e-6)
            assert v1 > v0
            assert v3 > v1
            assert g.call_count == 3
        finally:
            ev.close()
