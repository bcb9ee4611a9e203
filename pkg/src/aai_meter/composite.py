"""Composite index: weighted geometric mean, gradients, uniformity penalty,
and the cognitive-core aggregate.

Two zero policies are supported. "strict" is the faithful reading of the
weighted geometric mean: any measured zero annihilates the index.
"floor" substitutes max(x, 0.01) so near-misses stay visible in
dashboards; substitutions are recorded. When the policies disagree the
result carries both numbers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

from .axes import AxisResult
from .errors import MeterError

FLOOR_DEFAULT = 0.01
JAGGEDNESS_EXPONENT = 0.5

# Cognitive-core domains consumed as pre-normalized scores (human-scale,
# so values above 1 are meaningful).
CORE_DOMAINS = (
    "crystallized",
    "reading_writing",
    "fluid_reasoning",
    "working_memory",
    "long_term_storage",
    "learning_efficiency",
)


def _included(scores: Mapping[str, float], weights: Mapping[str, float]) -> dict[str, float]:
    out = {ax: float(scores[ax]) for ax in scores
           if weights.get(ax, 0.0) > 0.0 and scores[ax] is not None}
    if not out:
        raise MeterError("no axes with positive weight to aggregate")
    for ax, v in out.items():
        if not 0.0 <= v <= 1.0:
            raise MeterError(f"axis {ax} score {v} outside [0,1]")
    return out


def aai_index(scores: Mapping[str, float], weights: Mapping[str, float],
              zero_policy: str = "strict", floor: float = FLOOR_DEFAULT) -> float:
    """Weighted geometric mean exp((1/W)·Σ w·log x) under a zero policy."""
    if zero_policy not in ("strict", "floor"):
        raise MeterError(f"unknown zero policy {zero_policy!r}")
    inc = _included(scores, weights)
    if zero_policy == "strict" and any(v == 0.0 for v in inc.values()):
        return 0.0
    total_w = sum(weights[ax] for ax in inc)
    log_sum = 0.0
    for ax, v in inc.items():
        x = max(v, floor) if zero_policy == "floor" else v
        log_sum += weights[ax] * math.log(x)
    return float(math.exp(log_sum / total_w))


def index_gradient(scores: Mapping[str, float], weights: Mapping[str, float]
                   ) -> dict[str, Optional[float]]:
    """Per-axis sensitivity (w_x/(W·x))·index; None where a zero makes it undefined."""
    inc = _included(scores, weights)
    total_w = sum(weights[ax] for ax in inc)
    index = aai_index(inc, weights, zero_policy="strict")
    out: dict[str, Optional[float]] = {}
    for ax, v in inc.items():
        out[ax] = None if v == 0.0 else (weights[ax] / (total_w * v)) * index
    return out


def lower_median(values: Sequence[float]) -> float:
    ordered = sorted(values)
    n = len(ordered)
    if n == 0:
        raise MeterError("median of empty profile")
    return ordered[(n - 1) // 2]


def jaggedness_star(scores: Mapping[str, float], weights: Mapping[str, float],
                    lam: float = JAGGEDNESS_EXPONENT,
                    zero_policy: str = "strict") -> tuple[Optional[float], float, bool]:
    """Uniformity U = min/median (lower median) and the adjusted index·U^λ.

    Returns (U, adjusted index, undefined_flag); a zero median makes U
    undefined and pins the adjusted index to 0.
    """
    if not 0.0 <= lam <= 1.0:
        raise MeterError("jaggedness exponent must lie in [0,1]")
    inc = _included(scores, weights)
    med = lower_median(list(inc.values()))
    index = aai_index(inc, weights, zero_policy=zero_policy)
    if med == 0.0:
        return None, 0.0, True
    u = min(inc.values()) / med
    return float(u), float(index * u ** lam), False


def aai_core(core_scores: Mapping[str, float],
             domains: Sequence[str] = CORE_DOMAINS,
             gamma: float = 1.0) -> dict:
    """Equal-weight geometric mean of the cognitive-core domain scores.

    Scores are pre-normalized to the human scale, so the eligibility bar
    gamma defaults to 1.0 and values above 1 are allowed.
    """
    missing = [d for d in domains if core_scores.get(d) is None]
    if missing:
        return {"score": None, "eligible": False,
                "reason": f"missing core scores: {missing}"}
    vals = [float(core_scores[d]) for d in domains]
    if any(v < 0 for v in vals):
        raise MeterError("core scores must be nonnegative")
    if any(v == 0.0 for v in vals):
        score = 0.0
    else:
        score = math.exp(sum(math.log(v) for v in vals) / len(vals))
    return {"score": float(score), "eligible": bool(score >= gamma),
            "threshold": gamma, "reason": None}


@dataclass
class CompositeResult:
    index: float
    zero_policy: str
    weight_preset: str
    gradient: dict[str, Optional[float]]
    uniformity: Optional[float]
    adjusted_index: float
    strict_index: float
    floor_index: float
    included: list[str]
    excluded: dict[str, str]
    floored_axes: list[str] = field(default_factory=list)
    ci: Optional[tuple[float, float]] = None
    core: Optional[dict] = None
    uniformity_undefined: bool = False

    @property
    def policies_diverge(self) -> bool:
        return abs(self.strict_index - self.floor_index) > 1e-12

    def to_json(self) -> dict:
        return {
            "index": self.index,
            "zero_policy": self.zero_policy,
            "weight_preset": self.weight_preset,
            "strict_index": self.strict_index,
            "floor_index": self.floor_index,
            "policies_diverge": self.policies_diverge,
            "gradient": self.gradient,
            "uniformity": self.uniformity,
            "adjusted_index": self.adjusted_index,
            "included": self.included,
            "excluded": self.excluded,
            "floored_axes": self.floored_axes,
            "ci": list(self.ci) if self.ci else None,
            "core": self.core,
        }


def _delta_method_ci(scores: Mapping[str, float], weights: Mapping[str, float],
                     cis: Mapping[str, tuple[float, float]], index: float,
                     z: float = 1.959963984540054) -> Optional[tuple[float, float]]:
    """Propagate per-axis interval half-widths through the log aggregate."""
    if index <= 0.0:
        return None
    total_w = sum(weights[ax] for ax in scores)
    var_log = 0.0
    for ax, v in scores.items():
        lo, hi = cis[ax]
        sd = (hi - lo) / (2.0 * z)
        if v <= 0.0:
            return None
        var_log += (weights[ax] / total_w) ** 2 * (sd / v) ** 2
    half = z * math.sqrt(var_log)
    return (index * math.exp(-half), min(1.0, index * math.exp(half)))


def compute_composite(results: Mapping[str, AxisResult],
                      weights: Mapping[str, float],
                      zero_policy: str = "strict",
                      floor: float = FLOOR_DEFAULT,
                      lam: float = JAGGEDNESS_EXPONENT,
                      weight_preset: str = "custom",
                      core_scores: Optional[Mapping[str, float]] = None,
                      core_gamma: float = 1.0) -> CompositeResult:
    """Aggregate axis results, excluding zero-weight and no-data axes."""
    scores: dict[str, float] = {}
    excluded: dict[str, str] = {}
    for ax, res in results.items():
        w = weights.get(ax, 0.0)
        if w <= 0.0:
            excluded[ax] = "zero weight"
        elif not res.has_value:
            excluded[ax] = res.status
        else:
            scores[ax] = res.value
    if not scores:
        raise MeterError("no scored axes to aggregate")

    strict_idx = aai_index(scores, weights, "strict")
    floor_idx = aai_index(scores, weights, "floor", floor)
    index = strict_idx if zero_policy == "strict" else floor_idx

    effective = dict(scores)
    floored = []
    if zero_policy == "floor":
        for ax, v in scores.items():
            if v < floor:
                effective[ax] = floor
                floored.append(ax)
    gradient = index_gradient(effective, weights)
    uniformity, adjusted, u_flag = jaggedness_star(scores, weights, lam, zero_policy)

    ci = None
    if all(results[ax].ci is not None for ax in scores):
        ci = _delta_method_ci(effective, weights,
                              {ax: results[ax].ci for ax in scores}, index)

    core = aai_core(core_scores, gamma=core_gamma) if core_scores is not None else None
    return CompositeResult(
        index=index, zero_policy=zero_policy, weight_preset=weight_preset,
        gradient=gradient, uniformity=uniformity, adjusted_index=adjusted,
        strict_index=strict_idx, floor_index=floor_idx,
        included=sorted(scores), excluded=excluded, floored_axes=floored,
        ci=ci, core=core, uniformity_undefined=u_flag,
    )
