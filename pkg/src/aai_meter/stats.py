"""Shared statistical kernel: bootstrap CIs, Theil-Sen, isotonic regression, DiD.

Percentile intervals (not BCa) are used throughout for determinism and
simplicity. Replicate r draws its random state from the pair
(master seed, r), so confidence intervals do not depend on how
replicates are scheduled.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigError, MeterError

__all__ = [
    "ResamplePlan",
    "CIResult",
    "bootstrap_ci",
    "theil_sen",
    "isotonic_fit",
    "did_delta",
]


@dataclass(frozen=True)
class ResamplePlan:
    """Resampling configuration for bootstrap confidence intervals.

    mode
        "iid" resamples units with replacement; "block" resamples
        circular contiguous blocks (for temporally correlated series).
    replicates
        Number of bootstrap replicates B. Reported CIs require B >= 100.
    block_length
        Block length for "block" mode; None selects ceil(n ** (1/3)).
    seed
        Master seed; replicate r uses the derived stream (seed, r).
    level
        Two-sided confidence level.
    """

    mode: str = "iid"
    replicates: int = 1000
    block_length: Optional[int] = None
    seed: int = 0
    level: float = 0.95

    def __post_init__(self) -> None:
        if self.mode not in ("iid", "block"):
            raise ConfigError(f"unknown resample mode {self.mode!r}")
        if self.replicates < 100:
            raise ConfigError("reported CIs require at least 100 replicates")
        if self.block_length is not None and self.block_length < 1:
            raise ConfigError("block length must be >= 1")
        if not 0.0 < self.level < 1.0:
            raise ConfigError("confidence level must lie in (0, 1)")


@dataclass(frozen=True)
class CIResult:
    """Point estimate with a percentile confidence interval.

    lo/hi are None when the sample was too small for resampling
    (n < 2); replicates holds the bootstrap distribution when one
    was computed.
    """

    point: float
    lo: Optional[float]
    hi: Optional[float]
    replicates: Optional[np.ndarray] = None

    @property
    def has_interval(self) -> bool:
        return self.lo is not None and self.hi is not None


def _replicate_rng(seed: int, index: int) -> np.random.Generator:
    # Deterministic per-replicate stream: schedule-independent by construction.
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(index,)))


def _resample_indices(n: int, plan: ResamplePlan, rng: np.random.Generator) -> np.ndarray:
    if plan.mode == "iid":
        return rng.integers(0, n, size=n)
    length = plan.block_length if plan.block_length is not None else math.ceil(n ** (1.0 / 3.0))
    length = min(length, n)
    n_blocks = math.ceil(n / length)
    starts = rng.integers(0, n, size=n_blocks)
    idx = (starts[:, None] + np.arange(length)[None, :]) % n
    return idx.reshape(-1)[:n]


def bootstrap_ci(
    values: Sequence | np.ndarray,
    plan: ResamplePlan,
    statistic: Optional[Callable[[np.ndarray], float]] = None,
) -> CIResult:
    """Percentile bootstrap CI for ``statistic`` over resampled units.

    Parameters
    ----------
    values : array-like
        Unit-level observations. Rows are the resampled units; the
        statistic receives the resampled array.
    plan : ResamplePlan
        Mode, replicate count, block length, seed, and level.
    statistic : callable, optional
        Maps a resampled array to a scalar. Defaults to the mean.

    Returns
    -------
    CIResult
        Point estimate on the full sample plus percentile bounds.
        Samples with fewer than two units yield a point-only result.
    """
    data = np.asarray(values)
    if data.shape[0] == 0:
        raise MeterError("bootstrap_ci: empty sample")
    stat = statistic if statistic is not None else lambda a: float(np.mean(a))
    point = float(stat(data))
    n = data.shape[0]
    if n < 2:
        return CIResult(point=point, lo=None, hi=None)
    reps = np.empty(plan.replicates, dtype=float)
    for r in range(plan.replicates):
        rng = _replicate_rng(plan.seed, r)
        idx = _resample_indices(n, plan, rng)
        reps[r] = stat(data[idx])
    alpha = 1.0 - plan.level
    lo, hi = np.quantile(reps, [alpha / 2.0, 1.0 - alpha / 2.0])
    return CIResult(point=point, lo=float(lo), hi=float(hi), replicates=reps)


def theil_sen(x: Sequence | np.ndarray, y: Sequence | np.ndarray) -> float:
    """Theil-Sen slope: the median over all pairwise slopes with nonzero run.

    Pairs with identical x are skipped; an input with no valid pair
    (fewer than two distinct x) is an error.
    """
    xa = np.asarray(x, dtype=float)
    ya = np.asarray(y, dtype=float)
    if xa.shape != ya.shape or xa.ndim != 1:
        raise MeterError("theil_sen: x and y must be equal-length 1-d arrays")
    n = xa.shape[0]
    if n < 2:
        raise MeterError("theil_sen: need at least two points")
    ii, jj = np.triu_indices(n, k=1)
    dx = xa[jj] - xa[ii]
    keep = dx != 0.0
    if not np.any(keep):
        raise MeterError("theil_sen: all x values identical")
    slopes = (ya[jj][keep] - ya[ii][keep]) / dx[keep]
    return float(np.median(slopes))


def isotonic_fit(
    values: Sequence | np.ndarray,
    weights: Optional[Sequence | np.ndarray] = None,
    increasing: bool = True,
) -> np.ndarray:
    """Weighted least-squares monotone projection via pool-adjacent-violators.

    Returns the nondecreasing fit by default; ``increasing=False``
    fits the nonincreasing projection (equivalent to fitting the
    reversed sequence nondecreasingly and reversing back).
    """
    v = np.asarray(values, dtype=float)
    if v.ndim != 1 or v.shape[0] == 0:
        raise MeterError("isotonic_fit: need a nonempty 1-d sequence")
    if weights is None:
        w = np.ones_like(v)
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != v.shape:
            raise MeterError("isotonic_fit: weights must match values")
        if np.any(w < 0):
            raise MeterError("isotonic_fit: weights must be nonnegative")
    if not increasing:
        return isotonic_fit(v[::-1], w[::-1], increasing=True)[::-1]

    # PAVA with blocks carried as (mean, weight, count).
    means: list[float] = []
    wts: list[float] = []
    counts: list[int] = []
    for val, wt in zip(v, w):
        means.append(float(val))
        wts.append(float(wt))
        counts.append(1)
        while len(means) > 1 and means[-2] > means[-1]:
            m2, w2, c2 = means.pop(), wts.pop(), counts.pop()
            m1, w1, c1 = means.pop(), wts.pop(), counts.pop()
            tot = w1 + w2
            pooled = m1 if tot == 0 else (m1 * w1 + m2 * w2) / tot
            means.append(pooled)
            wts.append(tot)
            counts.append(c1 + c2)
    out = np.empty_like(v)
    pos = 0
    for m, c in zip(means, counts):
        out[pos : pos + c] = m
        pos += c
    return out


def did_delta(
    pre_treated: float,
    post_treated: float,
    pre_control: float,
    post_control: float,
) -> float:
    """Difference-in-differences: (post_t - pre_t) - (post_c - pre_c)."""
    vals = (pre_treated, post_treated, pre_control, post_control)
    if any(v is None or (isinstance(v, float) and math.isnan(v)) for v in vals):
        raise MeterError("did_delta: all four capabilities must be present")
    return (post_treated - pre_treated) - (post_control - pre_control)
