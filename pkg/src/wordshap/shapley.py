"""Shapley value computation: exact enumeration and the Neyman-allocated
complementary-contributions estimator."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .errors import DegenerateAttributionError, IoError, TooManyPlayersError
from .game import Game, full_coalition

logger = logging.getLogger(__name__)

EXACT_PLAYER_CAP = 20
POOL_CAP = 4096  # strata at most this large are sampled without replacement
STEP_CAP_FACTOR = 8  # cache-hit sampling steps allowed per allocated call


@dataclass(frozen=True)
class AttributionResult:
    """Per-player Shapley values plus estimator metadata."""

    shapley: tuple[float, ...]
    n: int
    method: str  # "exact" or "neyman"
    budget_total: int
    phase1_calls: int
    phase2_calls: int
    distinct_calls: int
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "shapley", tuple(float(x) for x in self.shapley))
        if len(self.shapley) != self.n:
            raise ValueError("one Shapley value per player required")
        if self.phase1_calls + self.phase2_calls > self.budget_total:
            raise ValueError("phase calls exceed the total budget")
        if self.distinct_calls > self.phase1_calls + self.phase2_calls:
            raise ValueError("distinct calls exceed phase call totals")


def exact_shapley(g: Game) -> AttributionResult:
    """Exact Shapley values by full coalition enumeration (n <= 20)."""
    n = g.n
    if n > EXACT_PLAYER_CAP:
        raise TooManyPlayersError(
            f"exact enumeration capped at {EXACT_PLAYER_CAP} players, got {n}"
        )
    calls_before = g.call_count
    values = [g.value(mask) for mask in range(1 << n)]
    fact = [math.factorial(k) for k in range(n + 1)]
    weights = [fact[s] * fact[n - s - 1] / fact[n] for s in range(n)]
    shapley = [0.0] * n
    for mask in range(1 << n):
        size = mask.bit_count()
        v_s = values[mask]
        for i in range(n):
            if mask >> i & 1:
                continue
            shapley[i] += weights[size] * (values[mask | 1 << i] - v_s)
    distinct = g.call_count - calls_before
    return AttributionResult(
        shapley=tuple(shapley),
        n=n,
        method="exact",
        budget_total=1 << n,
        phase1_calls=distinct,
        phase2_calls=0,
        distinct_calls=distinct,
        seed=0,
    )


class _StratumStats:
    """Welford running statistics for one (player, size) stratum."""

    __slots__ = ("count", "total", "mean", "m2")

    def __init__(self):
        self.count = 0
        self.total = 0.0
        self.mean = 0.0
        self.m2 = 0.0

    def add(self, x: float) -> None:
        self.count += 1
        self.total += x
        delta = x - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (x - self.mean)

    @property
    def variance(self) -> float | None:
        if self.count < 2:
            return None
        return self.m2 / (self.count - 1)


class _PairSampler:
    """Draws size-j coalitions, without replacement per complement-pair stratum
    when the stratum is small enough to enumerate."""

    def __init__(self, n: int, rng: np.random.Generator):
        self.n = n
        self.full = full_coalition(n)
        self.rng = rng
        self._pools: dict[int, list[int]] = {}

    def _pooled(self, key: int) -> bool:
        return math.comb(self.n, key) <= POOL_CAP

    def draw(self, j: int) -> tuple[int, int | None]:
        """Returns (coalition, pool_key); pool_key is None for iid draws."""
        key = min(j, self.n - j)
        if self._pooled(key):
            pool = self._pools.get(key)
            if not pool:
                masks = [
                    sum(1 << i for i in combo)
                    for combo in combinations(range(self.n), key)
                ]
                if 2 * key == self.n:
                    # one representative per unordered {S, N\S} pair
                    masks = [m for m in masks if m & 1]
                self.rng.shuffle(masks)
                self._pools[key] = pool = masks
            mask = pool.pop()
            return (mask if key == j else self.full ^ mask), key
        mask = 0
        for i in self.rng.choice(self.n, size=j, replace=False):
            mask |= 1 << int(i)
        return mask, None

    def put_back(self, coalition: int, j: int, key: int | None) -> None:
        if key is not None:
            self._pools[key].append(coalition if key == j else self.full ^ coalition)


def neyman_shapley(
    g: Game, budget_multiplier: float = 3.0, seed: int = 0
) -> AttributionResult:
    """Two-phase stratified estimator over complementary contributions.

    Budget is ceil(budget_multiplier * n^2) evaluator calls, counted net of
    cache hits. One sampling step draws a size-j coalition S, computes
    CC(S) = v(S) - v(N\\S), and credits CC(S) to stratum (i, j) for members
    and -CC(S) to stratum (i, n-j) for non-members, so each step yields one
    sample per player. Phase 1 seeds every size stratum; Phase 2 spreads the
    remaining calls proportionally to pooled stratum standard deviations.
    Once a coalition pair is cached, further steps on it are free, so
    sampling may continue past the point where new calls stop accruing
    (bounded by STEP_CAP_FACTOR steps per allocated call).
    """
    n = g.n
    if n < 2:
        raise ValueError("estimator needs at least two players")
    rng = np.random.default_rng(seed)
    budget = math.ceil(budget_multiplier * n * n)
    full = full_coalition(n)

    calls_before = g.call_count

    def used() -> int:
        return g.call_count - calls_before

    cc_full = g.value(full) - g.value(0)

    stats = [[_StratumStats() for _ in range(n + 1)] for _ in range(n)]
    sampler = _PairSampler(n, rng)

    def record(coalition: int, j: int, cc: float) -> None:
        for i in range(n):
            if coalition >> i & 1:
                stats[i][j].add(cc)
            else:
                stats[i][n - j].add(-cc)

    def step(j: int) -> None:
        coalition, _ = sampler.draw(j)
        cc = g.value(coalition) - g.value(full ^ coalition)
        record(coalition, j, cc)

    def cached_step(j: int) -> bool:
        """A free sampling step; declined if the pair is not fully cached."""
        coalition, key = sampler.draw(j)
        if g.is_cached(coalition) and g.is_cached(full ^ coalition):
            record(coalition, j, g.cache[coalition] - g.cache[full ^ coalition])
            return True
        sampler.put_back(coalition, j, key)
        return False

    # Phase 1: seed every size stratum
    m_init = max(2, budget // (2 * n * n))
    truncated = False
    for _ in range(m_init):
        for j in range(1, n):
            if used() + 2 > budget:
                truncated = True
                break
            step(j)
        if truncated:
            break
    if truncated:
        logger.warning(
            "budget %d too small for %d full Phase-1 rounds; truncated round-robin",
            budget,
            m_init,
        )
    phase1_calls = used()

    # Phase 2: Neyman allocation proportional to pooled stratum deviations
    sigma = [0.0] * (n + 1)
    for j in range(1, n):
        variances = [
            stats[i][j].variance for i in range(n) if stats[i][j].variance is not None
        ]
        if variances:
            sigma[j] = math.sqrt(max(0.0, sum(variances) / len(variances)))
    remaining = budget - phase1_calls
    total_sigma = sum(sigma[1:n])
    if total_sigma > 0:
        shares = [remaining * sigma[j] / total_sigma for j in range(1, n)]
    else:
        shares = [remaining / (n - 1)] * (n - 1)
    alloc = [int(s) for s in shares]
    leftover = remaining - sum(alloc)
    for k in sorted(range(n - 1), key=lambda k: alloc[k] - shares[k])[:leftover]:
        alloc[k] += 1

    for jj in range(n - 1):
        j = jj + 1
        quota = alloc[jj]
        spent = 0
        steps = 0
        step_cap = STEP_CAP_FACTOR * max(quota, 1)
        while steps < step_cap:
            if spent < quota and used() + 2 <= budget:
                before = g.call_count
                step(j)
                spent += g.call_count - before
            elif not cached_step(j):
                break
            steps += 1
    phase2_calls = used() - phase1_calls

    shapley = []
    for i in range(n):
        total = cc_full  # deterministic singleton stratum (i, n)
        for j in range(1, n):
            st = stats[i][j]
            if st.count > 0:
                total += st.total / st.count
            else:
                logger.warning("stratum (player %d, size %d) empty; contributes 0", i, j)
        shapley.append(total / n)

    return AttributionResult(
        shapley=tuple(shapley),
        n=n,
        method="neyman",
        budget_total=budget,
        phase1_calls=phase1_calls,
        phase2_calls=phase2_calls,
        distinct_calls=used(),
        seed=seed,
    )


def normalized_attributions(r: AttributionResult) -> np.ndarray:
    """Absolute attributions rescaled to sum to one."""
    magnitudes = np.abs(np.asarray(r.shapley, dtype=np.float64))
    total = magnitudes.sum()
    if total == 0:
        raise DegenerateAttributionError("all attributions are zero")
    return magnitudes / total


# --- result file format -----------------------------------------------------


def save_result(
    r: AttributionResult,
    path,
    sample_id: str | None = None,
    words: list[str] | None = None,
    spans: list[tuple[float, float]] | None = None,
    wallclock_s: float | None = None,
    mode: str | None = None,
) -> None:
    """Write one self-describing JSON record per sample."""
    doc = {
        "format": "wordshap-result/1",
        "sample_id": sample_id,
        "mode": mode,
        "n": r.n,
        "words": words,
        "spans": spans,
        "shapley": list(r.shapley),
        "method": r.method,
        "budget_total": r.budget_total,
        "phase1_calls": r.phase1_calls,
        "phase2_calls": r.phase2_calls,
        "distinct_calls": r.distinct_calls,
        "seed": r.seed,
        "wallclock_s": wallclock_s,
    }
    try:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(doc, f, indent=2)
            f.write("\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def load_result(path) -> dict:
    try:
        with open(path, encoding="utf-8") as f:
            doc = json.load(f)
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if doc.get("format") != "wordshap-result/1":
        raise IoError(f"{path} is not a wordshap result file")
    return doc
