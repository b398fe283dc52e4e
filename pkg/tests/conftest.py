"""Shared fixtures and independent oracle implementations.

The oracles here are deliberately written from first principles (path
enumeration, permutation sums, textbook special functions) so they share no
code path with the implementations they check.
"""

import math
from itertools import permutations

import numpy as np
import pytest


# --- CTC oracle: exhaustive path enumeration with prefix pruning -----------

def brute_force_ctc_best(log_probs, labels, blank_index):
    """Max log-probability over every frame-level path that collapses to
    ``labels`` (merge repeats, then drop blanks)."""
    lp = np.asarray(log_probs)
    t_total = lp.shape[0]
    target = list(labels)
    alphabet = sorted(set(target) | {blank_index})
    best = [-math.inf]

    def recurse(t, prev, matched, score):
        if t_total - t < len(target) - matched:
            return  # cannot finish
        if t == t_total:
            if matched == len(target):
                best[0] = max(best[0], score)
            return
        for sym in alphabet:
            if sym == prev or sym == blank_index:
                new_matched = matched
            else:
                if matched >= len(target) or target[matched] != sym:
                    continue
                new_matched = matched + 1
            recurse(t + 1, sym, new_matched, score + lp[t, sym])

    recurse(0, None, 0, 0.0)
    return best[0]


# --- Shapley oracle: permutation-sum definition ----------------------------

def permutation_shapley(n, value_fn):
    """Average marginal contribution over all n! player orderings."""
    totals = [0.0] * n
    count = 0
    for order in permutations(range(n)):
        mask = 0
        for player in order:
            before = value_fn(mask)
            mask |= 1 << player
            totals[player] += value_fn(mask) - before
        count += 1
    return [t / count for t in totals]


# --- paired t-test oracle: textbook formulas --------------------------------

def _gammln(x):
    cof = [
        76.18009172947146, -86.50532032941677, 24.01409824083091,
        -1.231739572450155, 0.1208650973866179e-2, -0.5395239384953e-5,
    ]
    y = x
    tmp = x + 5.5
    tmp -= (x + 0.5) * math.log(tmp)
    ser = 1.000000000190015
    for c in cof:
        y += 1.0
        ser += c / y
    return -tmp + math.log(2.5066282746310005 * ser / x)


def _betacf(a, b, x):
    max_it = 200
    eps = 3e-16
    fpmin = 1e-300
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < fpmin:
        d = fpmin
    d = 1.0 / d
    h = d
    for m in range(1, max_it + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < fpmin:
            d = fpmin
        c = 1.0 + aa / c
        if abs(c) < fpmin:
            c = fpmin
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < fpmin:
            d = fpmin
        c = 1.0 + aa / c
        if abs(c) < fpmin:
            c = fpmin
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            break
    return h


def _betai(a, b, x):
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    bt = math.exp(
        _gammln(a + b) - _gammln(a) - _gammln(b)
        + a * math.log(x) + b * math.log(1.0 - x)
    )
    if x < (a + 1.0) / (a + b + 2.0):
        return bt * _betacf(a, b, x) / a
    return 1.0 - bt * _betacf(b, a, 1.0 - x) / b


def oracle_paired_t(diffs):
    """(p_value, cohens_d) from the textbook paired-t formulas."""
    diffs = np.asarray(diffs, dtype=float)
    n = len(diffs)
    mean = diffs.mean()
    sd = diffs.std(ddof=1)
    t = mean / (sd / math.sqrt(n))
    df = n - 1
    p = _betai(df / 2.0, 0.5, df / (df + t * t))
    return p, mean / sd


# --- random game builders ---------------------------------------------------

def random_game_table(n, rng):
    """Arbitrary seeded game as a coalition -> value table."""
    return {mask: float(rng.uniform()) for mask in range(1 << n)}


def random_game_with_null(n, null_player, rng):
    """Game whose value never depends on ``null_player``."""
    base = {mask: float(rng.uniform()) for mask in range(1 << n)}

    def value(mask):
        return base[mask & ~(1 << null_player)]

    return value


def random_game_with_symmetry(n, i, j, rng):
    """Game depending on {i, j} only through how many of them are present."""
    pair = (1 << i) | (1 << j)
    base = {}

    def value(mask):
        key = (mask & ~pair, (mask & pair).bit_count())
        if key not in base:
            base[key] = float(rng.uniform())
        return base[key]

    # pre-populate deterministically, scanning in a fixed order
    for mask in range(1 << n):
        value(mask)
    return value


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
