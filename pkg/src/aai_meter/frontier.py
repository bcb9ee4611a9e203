"""Autonomy-quality frontier analytics.

Two related curves: the task-weighted exceedance curve F(tau) with its
exact area, and the delegability frontier q*(a) built from policy runs
under an intervention budget, with isotonic projection, bootstrap bands,
and integral summaries (fraction delegable, area above target).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import ConfigError, MeterError, NoDataError
from .stats import ResamplePlan, _replicate_rng, _resample_indices, isotonic_fit, theil_sen

DEFAULT_BINS = tuple(round(0.1 * j, 1) for j in range(11))
DEFAULT_TAU_GRID = 101


@dataclass
class QualityFrontier:
    """F(tau) = weighted share of per-task episodes with quality >= tau."""

    taus: np.ndarray
    values: np.ndarray
    auf: float
    task_weights: Mapping[str, float]
    _per_task: Mapping[str, np.ndarray] = field(repr=False, default_factory=dict)

    def evaluate(self, tau: float) -> float:
        """Exact curve value, independent of the plotting grid."""
        total = 0.0
        for task, weight in self.task_weights.items():
            q = self._per_task[task]
            total += weight * float(np.mean(q >= tau))
        return total

    def delta_f(self, reference: "QualityFrontier", tau_star: float) -> float:
        return self.evaluate(tau_star) - reference.evaluate(tau_star)

    def to_json(self) -> dict:
        return {"taus": [float(t) for t in self.taus],
                "values": [float(v) for v in self.values],
                "auf": self.auf,
                "task_weights": {k: self.task_weights[k]
                                 for k in sorted(self.task_weights)}}


def quality_frontier(traces: Sequence,
                     weights: Optional[Mapping[str, float]] = None,
                     grid_points: int = DEFAULT_TAU_GRID) -> QualityFrontier:
    """Exceedance curve over tasks with its exact unit-interval area.

    The area equals the weighted mean quality (integrating an empirical
    survival function of a [0,1] variable), so no quadrature error enters.
    """
    per_task: dict[str, list[float]] = {}
    for t in traces:
        per_task.setdefault(t.task_id, []).append(t.quality)
    if not per_task:
        raise NoDataError("no traces for the quality frontier")
    if weights is None:
        weights = {task: 1.0 / len(per_task) for task in per_task}
    else:
        missing = sorted(set(per_task) - set(weights))
        if missing:
            raise ConfigError(f"tasks without weights: {missing}")
        unseen = sorted(set(weights) - set(per_task))
        if unseen:
            raise ConfigError(f"weighted tasks without traces: {unseen}")
        if abs(sum(weights.values()) - 1.0) > 1e-9:
            raise ConfigError("task weights must sum to 1")
    arrays = {task: np.asarray(qs, dtype=float) for task, qs in per_task.items()}
    # exact rational accumulation, one correctly-rounded conversion at the end
    auf = float(sum(
        Fraction(w) * sum(map(Fraction, per_task[task])) / len(per_task[task])
        for task, w in weights.items()))
    taus = np.linspace(0.0, 1.0, grid_points)
    values = np.array([
        sum(w * float(np.mean(arrays[task] >= tau))
            for task, w in weights.items())
        for tau in taus
    ])
    return QualityFrontier(taus=taus, values=values, auf=auf,
                           task_weights=dict(weights), _per_task=arrays)


@dataclass(frozen=True)
class InterventionBudget:
    """Autonomy demand a buys a shrinking allowance of human interventions."""

    h_max: float

    def __post_init__(self):
        if self.h_max <= 0:
            raise ConfigError("h_max must be positive")

    def allowance(self, autonomy: float) -> float:
        if not 0 <= autonomy <= 1:
            raise ConfigError("autonomy demand must lie in [0, 1]")
        return (1.0 - autonomy) * self.h_max


@dataclass(frozen=True)
class PolicyRun:
    """One evaluated policy: its mean quality and mean intervention count."""

    run_id: str
    mean_quality: float
    mean_interventions: float

    def __post_init__(self):
        if not 0 <= self.mean_quality <= 1:
            raise ConfigError(f"run {self.run_id}: quality outside [0, 1]")
        if self.mean_interventions < 0:
            raise ConfigError(f"run {self.run_id}: negative interventions")


@dataclass
class FrontierEstimate:
    """Delegability frontier over autonomy bins, raw and projected."""

    bins: tuple[float, ...]
    raw: tuple[Optional[float], ...]
    projected: tuple[Optional[float], ...]
    ci_lo: tuple[Optional[float], ...]
    ci_hi: tuple[Optional[float], ...]
    empty_bins: tuple[float, ...]
    window_id: Optional[str] = None
    q_target: Optional[float] = None
    fd: Optional[float] = None
    auf_above: Optional[float] = None

    @property
    def full_coverage(self) -> bool:
        return not self.empty_bins

    def to_json(self) -> dict:
        return {
            "bins": list(self.bins),
            "raw": list(self.raw),
            "projected": list(self.projected),
            "ci_lo": list(self.ci_lo),
            "ci_hi": list(self.ci_hi),
            "empty_bins": list(self.empty_bins),
            "window_id": self.window_id,
            "q_target": self.q_target,
            "fd": self.fd,
            "auf_above": self.auf_above,
        }


def _bin_maxima(runs: Sequence[PolicyRun], budget: InterventionBudget,
                bins: Sequence[float]) -> list[Optional[float]]:
    out = []
    for a in bins:
        allowance = budget.allowance(a)
        qualities = [r.mean_quality for r in runs
                     if r.mean_interventions <= allowance]
        out.append(max(qualities) if qualities else None)
    return out


def _project(values: list[Optional[float]]) -> list[Optional[float]]:
    idx = [i for i, v in enumerate(values) if v is not None]
    if not idx:
        return list(values)
    fitted = isotonic_fit([values[i] for i in idx], increasing=False)
    out: list[Optional[float]] = [None] * len(values)
    for i, v in zip(idx, fitted):
        out[i] = float(v)
    return out


def delegability_frontier(runs: Sequence[PolicyRun],
                          budget: InterventionBudget,
                          bins: Optional[Sequence[float]] = None,
                          plan: Optional[ResamplePlan] = None,
                          window_id: Optional[str] = None) -> FrontierEstimate:
    """Best admissible quality per autonomy bin, monotone-projected.

    Admissible sets are nested (higher demand, smaller allowance), so the
    true envelope is nonincreasing in a; the raw bin maxima are kept
    alongside the projection. Bands resample whole runs.
    """
    runs = list(runs)
    if not runs:
        raise NoDataError("no policy runs supplied")
    if bins is None:
        bins = DEFAULT_BINS
    bins = tuple(float(b) for b in bins)
    if len(bins) < 2 or any(b1 <= b0 for b0, b1 in zip(bins, bins[1:])):
        raise ConfigError("bins must be strictly increasing")
    if bins[0] != 0.0 or bins[-1] != 1.0:
        raise ConfigError("bins must cover [0, 1]")

    raw = _bin_maxima(runs, budget, bins)
    projected = _project(raw)
    empty = tuple(b for b, v in zip(bins, raw) if v is None)

    ci_lo: list[Optional[float]] = [None] * len(bins)
    ci_hi: list[Optional[float]] = [None] * len(bins)
    if plan is not None and len(runs) >= 2:
        samples: list[list[float]] = [[] for _ in bins]
        for rep in range(plan.replicates):
            rng = _replicate_rng(plan.seed, rep)
            take = _resample_indices(len(runs), plan, rng)
            boot = _project(_bin_maxima([runs[i] for i in take], budget, bins))
            for j, v in enumerate(boot):
                if v is not None:
                    samples[j].append(v)
        tail = (1 - plan.level) / 2
        for j, vals in enumerate(samples):
            if vals:
                lo, hi = np.quantile(vals, [tail, 1 - tail])
                ci_lo[j], ci_hi[j] = float(lo), float(hi)

    return FrontierEstimate(bins=bins, raw=tuple(raw),
                            projected=tuple(projected),
                            ci_lo=tuple(ci_lo), ci_hi=tuple(ci_hi),
                            empty_bins=empty, window_id=window_id)


@dataclass(frozen=True)
class FrontierSummary:
    fd: float
    auf_above: float
    q_target: float
    delta_vs_earlier: Optional[float] = None
    covered_bins: tuple[float, ...] = ()

    def to_json(self) -> dict:
        return {"fd": self.fd, "auf_above": self.auf_above,
                "q_target": self.q_target,
                "delta_vs_earlier": self.delta_vs_earlier,
                "covered_bins": list(self.covered_bins)}


def _integrals(estimate: FrontierEstimate, q_target: float,
               nu: Optional[Sequence[float]]) -> tuple[float, float]:
    pairs = [(a, v) for a, v in zip(estimate.bins, estimate.projected)
             if v is not None]
    if len(pairs) < 2:
        raise MeterError("need at least two non-empty bins to integrate")
    a = np.array([p[0] for p in pairs])
    q = np.array([p[1] for p in pairs])
    delegable = (q >= q_target).astype(float)
    excess = np.clip(q - q_target, 0.0, None)
    if nu is None:
        span = a[-1] - a[0]
        fd = float(np.trapezoid(delegable, a) / span)
        auf = float(np.trapezoid(excess, a) / span)
    else:
        nu = np.asarray(nu, dtype=float)
        if nu.shape != (len(estimate.bins),):
            raise ConfigError("nu must supply one weight per bin")
        if np.any(nu < 0) or nu.sum() <= 0:
            raise ConfigError("nu weights must be nonnegative with positive mass")
        keep = np.array([v is not None for v in estimate.projected])
        mass = nu[keep].sum()
        if mass <= 0:
            raise MeterError("nu puts no mass on non-empty bins")
        fd = float(np.dot(nu[keep], delegable) / mass)
        auf = float(np.dot(nu[keep], excess) / mass)
    return fd, auf


def frontier_summaries(estimate: FrontierEstimate,
                       q_target: float,
                       nu: Optional[Sequence[float]] = None,
                       earlier: Optional[FrontierEstimate] = None
                       ) -> FrontierSummary:
    """Fraction delegable and area above target, optionally vs an earlier run.

    With no explicit bin weights the integrals use the trapezoid rule over
    the covered span, normalized to a probability measure; explicit nu is
    a discrete weight vector over bins.
    """
    if not 0 <= q_target <= 1:
        raise ConfigError("q_target must lie in [0, 1]")
    fd, auf = _integrals(estimate, q_target, nu)
    delta = None
    if earlier is not None:
        if tuple(earlier.bins) != tuple(estimate.bins):
            raise MeterError("estimates use different autonomy bins")
        _, auf_earlier = _integrals(earlier, q_target, nu)
        delta = auf - auf_earlier
    estimate.q_target = q_target
    estimate.fd = fd
    estimate.auf_above = auf
    covered = tuple(a for a, v in zip(estimate.bins, estimate.projected)
                    if v is not None)
    return FrontierSummary(fd=fd, auf_above=auf, q_target=q_target,
                           delta_vs_earlier=delta, covered_bins=covered)


@dataclass(frozen=True)
class SlopeVerdict:
    slope: float
    floor: float
    passed: bool
    ci: Optional[tuple[float, float]] = None

    def to_json(self) -> dict:
        return {"slope": self.slope, "floor": self.floor,
                "passed": self.passed,
                "ci": list(self.ci) if self.ci else None}


def frontier_slope(resources: Sequence[float],
                   aufs: Sequence[float],
                   floor: float,
                   plan: Optional[ResamplePlan] = None) -> SlopeVerdict:
    """Robust slope of the area-under-frontier series against a published floor."""
    r = np.asarray(resources, dtype=float)
    f = np.asarray(aufs, dtype=float)
    if r.shape != f.shape or r.size < 2:
        raise MeterError("need at least two aligned (resource, AUF) points")
    slope = theil_sen(r, f)
    ci = None
    if plan is not None and r.size >= 3:
        samples = []
        for rep in range(plan.replicates):
            rng = _replicate_rng(plan.seed, rep)
            take = sorted(_resample_indices(r.size, plan, rng))
            try:
                samples.append(theil_sen(r[take], f[take]))
            except MeterError:
                samples.append(slope)
        tail = (1 - plan.level) / 2
        lo, hi = np.quantile(samples, [tail, 1 - tail])
        ci = (float(lo), float(hi))
    return SlopeVerdict(slope=slope, floor=floor, passed=slope >= floor, ci=ci)
