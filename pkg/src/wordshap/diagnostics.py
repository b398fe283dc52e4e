"""Concentration metrics, paired significance tests, and cumulative
attribution profiles."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats as sstats

from .errors import DomainError, UndefinedTestError


@dataclass(frozen=True)
class ConcentrationMetrics:
    top20_mass: float
    gini: float
    entropy_norm: float
    n: int


@dataclass(frozen=True)
class PairedTestResult:
    metric: str
    p_value: float
    cohens_d: float
    significant: bool
    alpha_corrected: float


def _check_normalized(shares: np.ndarray) -> np.ndarray:
    shares = np.asarray(shares, dtype=np.float64)
    if abs(shares.sum() - 1.0) > 1e-9:
        raise DomainError(f"shares sum to {shares.sum()}, expected 1")
    if np.any(shares < -1e-12):
        raise DomainError("shares must be non-negative")
    return np.clip(shares, 0.0, None)


def top_k_mass(shares, fraction: float = 0.2) -> float:
    """Share of attribution captured by the top ceil(fraction*n) players."""
    if not 0 < fraction <= 1:
        raise DomainError(f"fraction must be in (0, 1], got {fraction}")
    shares = _check_normalized(shares)
    k = math.ceil(fraction * len(shares))
    return float(np.sort(shares)[::-1][:k].sum())


def gini(shares) -> float:
    """Mean absolute pairwise difference over 2n (the double-sum form)."""
    shares = _check_normalized(shares)
    diffs = np.abs(shares[:, None] - shares[None, :])
    return float(diffs.sum() / (2 * len(shares)))


def entropy_norm(shares, normalization: str = "sqrt") -> float:
    """Shannon entropy of the shares, scaled for length comparability.

    The default divides by sqrt(n); ``normalization="log"`` divides by ln(n)
    instead, for sensitivity analysis.
    """
    shares = _check_normalized(shares)
    nonzero = shares[shares > 0]
    h = float(-(nonzero * np.log(nonzero)).sum())
    n = len(shares)
    if normalization == "sqrt":
        return h / math.sqrt(n)
    if normalization == "log":
        return h / math.log(n) if n > 1 else 0.0
    raise DomainError(f"unknown normalization {normalization!r}")


def concentration_metrics(shares) -> ConcentrationMetrics:
    shares = _check_normalized(shares)
    return ConcentrationMetrics(
        top20_mass=top_k_mass(shares),
        gini=gini(shares),
        entropy_norm=entropy_norm(shares),
        n=len(shares),
    )


def paired_test(
    a, b, num_comparisons: int = 1, alpha: float = 0.05, metric: str = ""
) -> PairedTestResult:
    """Two-sided paired t-test with Bonferroni-corrected significance.

    Cohen's d uses the paired convention mean(diff) / sd(diff).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if len(a) != len(b):
        raise DomainError("paired samples must have equal length")
    if len(a) < 3:
        raise UndefinedTestError("need at least 3 pairs")
    diff = a - b
    if np.all(diff == 0):
        raise UndefinedTestError("all paired differences are zero")
    alpha_corrected = alpha / num_comparisons
    sd = diff.std(ddof=1)
    mean = diff.mean()
    if sd == 0:
        # constant nonzero shift: the test degenerates to certainty
        return PairedTestResult(
            metric=metric,
            p_value=0.0,
            cohens_d=math.copysign(math.inf, mean),
            significant=True,
            alpha_corrected=alpha_corrected,
        )
    t_stat = mean / (sd / math.sqrt(len(diff)))
    p_value = 2 * sstats.t.sf(abs(t_stat), df=len(diff) - 1)
    d = mean / sd
    return PairedTestResult(
        metric=metric,
        p_value=float(p_value),
        cohens_d=float(d),
        significant=bool(p_value < alpha_corrected),
        alpha_corrected=alpha_corrected,
    )


def cumulative_profile(shares):
    """Position-normalized cumulative attribution curve, in token order.

    Returns (positions, cumulative, derivative) with positions k/n for
    k = 1..n and derivative n * share_k (first differences).
    """
    shares = np.asarray(shares, dtype=np.float64)
    n = len(shares)
    if n < 1:
        raise DomainError("need at least one share")
    positions = np.arange(1, n + 1) / n
    cumulative = np.cumsum(shares)
    derivative = n * shares
    return positions, cumulative, derivative


def profile_resample(profiles, grid_points: int = 101):
    """Average profiles of different lengths on a common position grid.

    Each profile is a (positions, cumulative) pair (extra entries ignored);
    c(0) := 0 is prepended before linear interpolation.
    """
    if not profiles:
        raise DomainError("need at least one profile")
    if grid_points < 2:
        raise DomainError("grid needs at least two points")
    grid = np.linspace(0.0, 1.0, grid_points)
    curves = []
    for profile in profiles:
        positions, cumulative = profile[0], profile[1]
        if len(positions) == 0:
            raise DomainError("profiles must be non-empty")
        xs = np.concatenate(([0.0], positions))
        ys = np.concatenate(([0.0], cumulative))
        curves.append(np.interp(grid, xs, ys))
    mean_curve = np.mean(curves, axis=0)
    derivative = np.zeros_like(mean_curve)
    derivative[1:] = np.diff(mean_curve) / np.diff(grid)
    return grid, mean_curve, derivative
