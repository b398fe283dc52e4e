"""Cooperative game over word segments: silence masking, evaluator wire
protocol, and memoized coalition values."""

from __future__ import annotations

import base64
import json
import logging
import math
import socket
import subprocess
import threading
from typing import Callable

from .core import Segmentation, Waveform, waveform_to_wav_bytes
from .errors import EvaluatorError, ProtocolError, TooManyPlayersError

logger = logging.getLogger(__name__)

PROTOCOL_NAME = "mllm-eval/1"
MAX_PLAYERS = 63  # a coalition bitmask must fit one machine word
EVALUATOR_RETRIES = 2


def full_coalition(n: int) -> int:
    return (1 << n) - 1


def coalition_size(coalition: int) -> int:
    return coalition.bit_count()


def coalition_members(coalition: int, n: int):
    return [i for i in range(n) if coalition >> i & 1]


def mask_audio(w: Waveform, seg: Segmentation, coalition: int) -> Waveform:
    """Zero the samples of every word excluded from the coalition.

    Sample count and rate are preserved; span [a, b) maps to sample indices
    [floor(a*sr), floor(b*sr)).
    """
    n = len(seg)
    if coalition >> n:
        raise ValueError(f"coalition {coalition:#x} has bits beyond player {n - 1}")
    samples = w.samples.copy()
    sr = w.sample_rate
    for i, segment in enumerate(seg.words):
        if coalition >> i & 1:
            continue
        a = min(math.floor(segment.span.start_s * sr), len(samples))
        b = min(math.floor(segment.span.end_s * sr), len(samples))
        samples[a:b] = 0.0
    return Waveform(samples=samples, sample_rate=sr)


# --- evaluator transports ---------------------------------------------------
#
# Wire protocol (newline-delimited JSON, answered in order):
#   handshake (server -> client, first line):
#     {"protocol": "mllm-eval/1", "deterministic": true|false}
#   request:  {"id": <u64>, "op": "evaluate",
#              "audio_wav_b64": <base64 WAV>, "meta": {"coalition": <u64>, "n": <int>}}
#   response: {"id": <u64>, "value": <finite float>} or {"id": <u64>, "error": <str>}


class ModelEvaluator:
    """Client for one mllm-eval/1 server over a line-delimited stream."""

    def __init__(self):
        self._next_id = 0
        self._lock = threading.Lock()
        self.deterministic: bool | None = None

    # transport primitives supplied by subclasses
    def _send_line(self, line: str) -> None:
        raise NotImplementedError

    def _recv_line(self) -> str:
        raise NotImplementedError

    def handshake(self) -> None:
        try:
            line = self._recv_line()
            msg = json.loads(line)
        except (OSError, ValueError) as exc:
            raise EvaluatorError(f"handshake failed: {exc}") from exc
        if msg.get("protocol") != PROTOCOL_NAME:
            raise ProtocolError(
                f"server speaks {msg.get('protocol')!r}, expected {PROTOCOL_NAME!r}"
            )
        self.deterministic = bool(msg.get("deterministic"))
        if not self.deterministic:
            logger.warning(
                "evaluator declares deterministic=false; cached values may bias estimates"
            )

    def evaluate(self, audio: Waveform, coalition: int, n: int) -> float:
        payload = {
            "op": "evaluate",
            "audio_wav_b64": base64.b64encode(waveform_to_wav_bytes(audio)).decode(),
            "meta": {"coalition": coalition, "n": n},
        }
        last_exc: Exception | None = None
        for attempt in range(EVALUATOR_RETRIES + 1):
            with self._lock:
                request_id = self._next_id
                self._next_id += 1
                payload["id"] = request_id
                try:
                    self._send_line(json.dumps(payload))
                    reply = json.loads(self._recv_line())
                except (OSError, ValueError) as exc:
                    last_exc = exc
                    logger.warning("evaluator transport error (attempt %d): %s", attempt, exc)
                    continue
            if reply.get("id") != request_id:
                raise ProtocolError(
                    f"response id {reply.get('id')} does not match request {request_id}"
                )
            if "error" in reply:
                raise EvaluatorError(f"evaluator error: {reply['error']}")
            value = reply.get("value")
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                raise ProtocolError(f"evaluator returned non-finite value {value!r}")
            return float(value)
        raise EvaluatorError(
            f"evaluator unreachable after {EVALUATOR_RETRIES + 1} attempts: {last_exc}"
        )

    def close(self) -> None:
        pass


class SubprocessEvaluator(ModelEvaluator):
    """Evaluator reached over stdio of a child process."""

    def __init__(self, command: list[str]):
        super().__init__()
        try:
            self._proc = subprocess.Popen(
                command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise EvaluatorError(f"cannot launch evaluator {command!r}: {exc}") from exc

    def _send_line(self, line: str) -> None:
        assert self._proc.stdin is not None
        self._proc.stdin.write(line + "\n")
        self._proc.stdin.flush()

    def _recv_line(self) -> str:
        assert self._proc.stdout is not None
        line = self._proc.stdout.readline()
        if line == "":
            raise OSError("evaluator process closed its output")
        return line

    def close(self) -> None:
        if self._proc.stdin:
            self._proc.stdin.close()
        self._proc.wait(timeout=10)


class TcpEvaluator(ModelEvaluator):
    """Evaluator reached over a TCP connection."""

    def __init__(self, host: str, port: int):
        super().__init__()
        try:
            self._sock = socket.create_connection((host, port), timeout=60)
        except OSError as exc:
            raise EvaluatorError(f"cannot connect to {host}:{port}: {exc}") from exc
        self._reader = self._sock.makefile("r", encoding="utf-8")
        self._writer = self._sock.makefile("w", encoding="utf-8")

    def _send_line(self, line: str) -> None:
        self._writer.write(line + "\n")
        self._writer.flush()

    def _recv_line(self) -> str:
        line = self._reader.readline()
        if line == "":
            raise OSError("evaluator closed the connection")
        return line

    def close(self) -> None:
        self._sock.close()


# --- memoized games ---------------------------------------------------------


class Game:
    """Coalition-value game with a write-once cache and call accounting.

    ``value`` is safe to call from multiple workers: concurrent misses on the
    same coalition produce exactly one evaluation (single-flight).
    """

    def __init__(self, n: int):
        if n < 1:
            raise ValueError("need at least one player")
        if n > MAX_PLAYERS:
            raise TooManyPlayersError(
                f"{n} players exceed the {MAX_PLAYERS}-player cap; aggregate to "
                "word-level segments first"
            )
        self.n = n
        self.cache: dict[int, float] = {}
        self.call_count = 0
        self._lock = threading.Lock()
        self._inflight: dict[int, threading.Event] = {}

    def _evaluate(self, coalition: int) -> float:
        raise NotImplementedError

    def is_cached(self, coalition: int) -> bool:
        return coalition in self.cache

    def value(self, coalition: int) -> float:
        if coalition >> self.n:
            raise ValueError(f"coalition {coalition:#x} invalid for n={self.n}")
        while True:
            with self._lock:
                if coalition in self.cache:
                    return self.cache[coalition]
                waiter = self._inflight.get(coalition)
                if waiter is None:
                    self._inflight[coalition] = threading.Event()
                    break
            waiter.wait()
        try:
            result = self._evaluate(coalition)
        except BaseException:
            with self._lock:
                self._inflight.pop(coalition).set()
            raise
        with self._lock:
            self.cache[coalition] = result
            self.call_count += 1
            self._inflight.pop(coalition).set()
        return result


class CoalitionGame(Game):
    """Players are word segments; values come from a masked-audio evaluator."""

    def __init__(self, segmentation: Segmentation, base_audio: Waveform, evaluator: ModelEvaluator):
        super().__init__(len(segmentation))
        self.segmentation = segmentation
        self.base_audio = base_audio
        self.evaluator = evaluator

    def _evaluate(self, coalition: int) -> float:
        masked = mask_audio(self.base_audio, self.segmentation, coalition)
        return self.evaluator.evaluate(masked, coalition, self.n)


class FunctionGame(Game):
    """In-process game backed by a plain function; used for synthetic games."""

    def __init__(self, n: int, fn: Callable[[int], float]):
        super().__init__(n)
        self._fn = fn

    def _evaluate(self, coalition: int) -> float:
        return float(self._fn(coalition))
