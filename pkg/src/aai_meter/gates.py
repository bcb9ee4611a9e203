"""Level assignment, closure tests, curvature milestones, and allocation.

Levels 0 through 4 are decided by hard per-axis gates plus dynamics and
closure evidence; level 5 has its own six-gate battery. Every verdict is
recorded with the observed value, the required bound, and a note, so a
report can show exactly which condition failed.
"""
from __future__ import annotations

import math
import statistics
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

from .dynamics import step_operator
from .errors import ConfigError, MeterError, NoDataError

# Threshold matrix for the axis-vector rows of levels 2..4. R at level 2
# is a strict positivity test and is handled outside the matrix; E is
# optional at every level and never appears.
DEFAULT_THRESHOLDS: dict[int, dict[str, float]] = {
    2: {"A": 0.60, "G": 0.30, "P": 0.50, "M": 0.50, "T": 0.50,
        "S": 0.20, "W": 0.60, "$": 0.40},
    3: {"A": 0.75, "G": 0.50, "P": 0.70, "M": 0.70, "T": 0.70,
        "R": 0.40, "S": 0.50, "W": 0.75, "$": 0.60},
    4: {"A": 0.90, "G": 0.90, "P": 0.90, "M": 0.85, "T": 0.80,
        "R": 0.60, "S": 0.70, "W": 0.85, "$": 0.80},
}

_MODES = ("base", "curvature")
_INSUFFICIENT = "insufficient evidence"


@dataclass
class GateConfig:
    """Published-ex-ante constants for level decisions."""

    kappa_star: float
    thresholds: Mapping[int, Mapping[str, float]] = field(
        default_factory=lambda: {k: dict(v) for k, v in DEFAULT_THRESHOLDS.items()})
    mode: str = "base"
    maintenance_alpha: float = 0.8
    maintenance_days: int = 7
    expansion_epsilon: float = 0.01
    accel_alpha: float = 0.05
    diminishing_gamma: float = 0.001
    superhuman_zeta: float = 2.0
    coverage_floor: float = 0.95
    innovation_weights: tuple[float, float] = (0.2, 0.2)
    innovation_floor: float = 0.8
    gamma_floors: Mapping[str, float] = field(
        default_factory=lambda: {"S": 0.9, "E": 0.9, "W": 0.9, "$": 0.9})
    strict_social_floor: float = 0.95
    step_link: str = "surprisal"
    step_delta: float = 1.0
    scripted_autonomy: float = 0.95
    profile_plan_max: float = 0.05
    bounded_autonomy: float = 0.5
    bounded_plan: float = 0.3
    tool_gate_count: int = 3
    tool_gate_success: float = 0.6
    multi_domain_families: int = 2
    sustained_families: int = 2
    persistence_span_days: float = 30.0
    tau_vrp: float = 0.85
    tau_hall: float = 0.05
    tau_wm_span: Optional[float] = None
    tau_recall: Optional[float] = None
    wm_theta: float = 0.8

    def __post_init__(self):
        if self.kappa_star <= 0:
            raise ConfigError("kappa_star must be positive")
        if self.mode not in _MODES:
            raise ConfigError(f"mode must be one of {_MODES}")
        if not 0 < self.maintenance_alpha <= 1:
            raise ConfigError("maintenance_alpha must lie in (0, 1]")
        if self.maintenance_days < 1:
            raise ConfigError("maintenance_days must be at least 1")
        if self.expansion_epsilon <= 0:
            raise ConfigError("expansion_epsilon must be positive")
        if not 0 < self.accel_alpha < 1:
            raise ConfigError("accel_alpha must lie in (0, 1)")
        if self.diminishing_gamma < 0:
            raise ConfigError("diminishing_gamma must be nonnegative")
        if self.superhuman_zeta <= 0:
            raise ConfigError("superhuman_zeta must be positive")
        if not 0 < self.coverage_floor <= 1:
            raise ConfigError("coverage_floor must lie in (0, 1]")
        if any(w <= 0 for w in self.innovation_weights):
            raise ConfigError("innovation weights must be positive")
        if self.step_link not in ("logit", "surprisal"):
            raise ConfigError("step_link must be 'logit' or 'surprisal'")
        if self.step_delta <= 0:
            raise ConfigError("step_delta must be positive")
        levels = sorted(self.thresholds)
        for level in levels:
            for axis, bound in self.thresholds[level].items():
                if not 0 <= bound <= 1:
                    raise ConfigError(
                        f"threshold for {axis} at level {level} outside [0, 1]")
        for lo, hi in zip(levels, levels[1:]):
            for axis, bound in self.thresholds[lo].items():
                if axis in self.thresholds[hi] and self.thresholds[hi][axis] < bound:
                    raise ConfigError(
                        f"threshold for {axis} decreases from level {lo} to {hi}")


@dataclass(frozen=True)
class GateCheck:
    name: str
    passed: bool
    observed: Optional[object] = None
    required: Optional[object] = None
    note: Optional[str] = None

    def to_json(self) -> dict:
        return {"name": self.name, "passed": self.passed,
                "observed": self.observed, "required": self.required,
                "note": self.note}


@dataclass(frozen=True)
class ClosureResult:
    passed: bool
    reason: Optional[str] = None
    margin: Optional[float] = None
    details: Mapping[str, object] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"passed": self.passed, "reason": self.reason,
                "margin": self.margin, "details": dict(self.details)}


@dataclass(frozen=True)
class FamilyDynamics:
    """Per-family slope evidence on the chosen link scale."""

    family: str
    kappa: float
    kappa_ci: Optional[tuple[float, float]] = None
    consecutive_days: int = 0
    delta_kappa: Optional[float] = None
    delta_kappa_ci: Optional[tuple[float, float]] = None
    prob_delta_nonneg: Optional[float] = None
    sustained: Optional[bool] = None


@dataclass
class DynamicsEvidence:
    """Run-level evidence beyond the axis vector: slopes, spans, composites."""

    families: Sequence[FamilyDynamics] = ()
    persistence_span_days: Optional[float] = None
    parity_coverage: Optional[float] = None
    raw_tool_count: Optional[int] = None
    tool_success_under_shift: Mapping[str, float] = field(default_factory=dict)
    composite: Optional[float] = None
    composite_prev: Optional[float] = None
    lambda_value: Optional[float] = None
    lambda_label: Optional[int] = None


@dataclass
class Closures:
    maintenance: Optional[ClosureResult] = None
    expansion: Optional[ClosureResult] = None


@dataclass
class LevelReport:
    level: Optional[int]
    checks: Mapping[int, tuple[GateCheck, ...]]
    profile: tuple[GateCheck, ...]
    mode: str
    lambda_value: Optional[float] = None
    lambda_label: Optional[int] = None
    audit: Mapping[str, object] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "level": self.level,
            "mode": self.mode,
            "verdicts": {str(lvl): [c.to_json() for c in checks]
                         for lvl, checks in sorted(self.checks.items())},
            "profile": [c.to_json() for c in self.profile],
            "lambda": self.lambda_value,
            "lambda_label": self.lambda_label,
            "audit": dict(self.audit),
        }


def _axis_value(axes: Mapping[str, object], name: str) -> Optional[float]:
    item = axes.get(name)
    if item is None:
        return None
    value = getattr(item, "value", item)
    return None if value is None else float(value)


def _bound_check(name: str, value: Optional[float], bound: float,
                 strict: bool = False) -> GateCheck:
    if value is None:
        return GateCheck(name, False, None, bound, _INSUFFICIENT)
    ok = value > bound if strict else value >= bound
    return GateCheck(name, ok, value, bound)


def _table_row(level: int, axes, config: GateConfig) -> list[GateCheck]:
    row = config.thresholds.get(level, {})
    return [_bound_check(f"axis {axis}", _axis_value(axes, axis), bound)
            for axis, bound in sorted(row.items())]


def _closure_check(name: str, result: Optional[ClosureResult]) -> GateCheck:
    if result is None:
        return GateCheck(name, False, None, "closure evidence", _INSUFFICIENT)
    return GateCheck(name, result.passed, result.reason or "pass", "pass",
                     None if result.passed else result.reason)


def _kappa_week_check(ev: DynamicsEvidence, config: GateConfig) -> GateCheck:
    """Positive slope with CI excluding zero, held for the closure window."""
    name = "kappa positive for window"
    if not ev.families:
        return GateCheck(name, False, None, None, _INSUFFICIENT)
    witnesses = [f.family for f in ev.families
                 if f.kappa > 0 and f.kappa_ci is not None and f.kappa_ci[0] > 0
                 and f.consecutive_days >= config.maintenance_days]
    return GateCheck(name, bool(witnesses), witnesses or None,
                     f">= {config.maintenance_days} consecutive days, >= 1 family")


def _kappa_multi_check(ev: DynamicsEvidence, config: GateConfig) -> GateCheck:
    name = "kappa at target on multiple families"
    if not ev.families:
        return GateCheck(name, False, None, None, _INSUFFICIENT)
    hits = [f.family for f in ev.families if f.kappa >= config.kappa_star]
    need = config.multi_domain_families
    return GateCheck(name, len(hits) >= need, hits, f">= {need} families")


def _kappa_sustained_check(ev: DynamicsEvidence, config: GateConfig) -> GateCheck:
    name = "kappa sustained in every rolling window"
    known = [f for f in ev.families if f.sustained is not None]
    if not known:
        return GateCheck(name, False, None, None, _INSUFFICIENT)
    hits = [f.family for f in known if f.sustained]
    need = config.sustained_families
    return GateCheck(name, len(hits) >= need, hits, f">= {need} families")


def _accel_check(ev: DynamicsEvidence, config: GateConfig,
                 min_families: int) -> GateCheck:
    name = "acceleration gate"
    known = [f for f in ev.families if f.prob_delta_nonneg is not None]
    if not known:
        return GateCheck(name, False, None, None, _INSUFFICIENT)
    floor = 1 - config.accel_alpha
    hits = [f.family for f in known if f.prob_delta_nonneg >= floor]
    return GateCheck(name, len(hits) >= min_families, hits,
                     f"P(curvature >= 0) >= {floor:g} on >= {min_families} families")


def _diminishing_check(ev: DynamicsEvidence, config: GateConfig) -> GateCheck:
    name = "diminishing-returns bound"
    if not ev.families:
        return GateCheck(name, False, None, None, _INSUFFICIENT)
    missing = [f.family for f in ev.families if f.delta_kappa is None]
    if missing:
        return GateCheck(name, False, missing, None, _INSUFFICIENT)
    bound = -config.diminishing_gamma
    bad = [f.family for f in ev.families if f.delta_kappa < bound]
    return GateCheck(name, not bad, bad or "all families",
                     f"curvature >= {bound:g} on all families")


def _step_check(ev: DynamicsEvidence, config: GateConfig, hops: int) -> GateCheck:
    name = f"link-step target x{hops}"
    if ev.composite is None or ev.composite_prev is None:
        return GateCheck(name, False, None, None, _INSUFFICIENT)
    target = ev.composite_prev
    if not 0 < target < 1:
        return GateCheck(name, False, target, "prior composite in (0, 1)",
                         "step target undefined at the boundary")
    for _ in range(hops):
        target = step_operator(target, config.step_link, config.step_delta)
    return GateCheck(name, ev.composite >= target, ev.composite, target)


def _level0(axes, ev, config) -> tuple[list[GateCheck], list[GateCheck]]:
    gating = [_bound_check("axis A scripted", _axis_value(axes, "A"),
                           config.scripted_autonomy)]
    # descriptive checks for the fixed-automation profile; a capable system
    # exceeding them must not be demoted, so they never gate
    profile = []
    p = _axis_value(axes, "P")
    profile.append(GateCheck("profile: plan depth near zero",
                             p is not None and p <= config.profile_plan_max,
                             p, f"<= {config.profile_plan_max}"))
    count = ev.raw_tool_count
    profile.append(GateCheck("profile: at most one tool category",
                             count is not None and count <= 1, count, "<= 1"))
    r = _axis_value(axes, "R")
    profile.append(GateCheck("profile: no self-revision",
                             r is not None and r == 0, r, "== 0"))
    return gating, profile


def _level1(axes, ev, config) -> list[GateCheck]:
    checks = [
        _bound_check("axis A bounded", _axis_value(axes, "A"),
                     config.bounded_autonomy),
        _bound_check("axis P bounded", _axis_value(axes, "P"),
                     config.bounded_plan),
    ]
    name = "tool gate under mild shift"
    table = ev.tool_success_under_shift
    if not table:
        checks.append(GateCheck(name, False, None, None, _INSUFFICIENT))
    else:
        good = sorted(c for c, s in table.items() if s >= config.tool_gate_success)
        need = config.tool_gate_count
        checks.append(GateCheck(
            name, len(good) >= need, good,
            f">= {need} categories at >= {config.tool_gate_success:g} success"))
    return checks


def _level2(axes, ev, closures, config) -> list[GateCheck]:
    checks = _table_row(2, axes, config)
    checks.append(_bound_check("axis R strictly positive",
                               _axis_value(axes, "R"), 0.0, strict=True))
    checks.append(_kappa_week_check(ev, config))
    checks.append(_closure_check("maintenance closure", closures.maintenance))
    return checks


def _level3(axes, ev, closures, config) -> list[GateCheck]:
    checks = _table_row(3, axes, config)
    checks.append(_kappa_multi_check(ev, config))
    checks.append(_bound_check("persistence span days",
                               ev.persistence_span_days,
                               config.persistence_span_days))
    checks.append(_closure_check("expansion closure", closures.expansion))
    if config.mode == "curvature":
        checks.append(_accel_check(ev, config, config.multi_domain_families))
        checks.append(_step_check(ev, config, hops=1))
    return checks


def _level4(axes, ev, closures, config) -> list[GateCheck]:
    checks = _table_row(4, axes, config)
    name = "human-pro parity coverage"
    cov = ev.parity_coverage
    if cov is None:
        checks.append(GateCheck(name, False, None, 1.0, _INSUFFICIENT))
    else:
        checks.append(GateCheck(name, cov >= 1.0 - 1e-12, cov, 1.0))
    checks.append(_kappa_sustained_check(ev, config))
    checks.append(_closure_check("maintenance closure", closures.maintenance))
    checks.append(_closure_check("expansion closure", closures.expansion))
    if config.mode == "curvature":
        checks.append(_diminishing_check(ev, config))
        checks.append(_step_check(ev, config, hops=2))
    return checks


def assign_level(axes: Mapping[str, object],
                 dynamics: Optional[DynamicsEvidence] = None,
                 closures: Optional[Closures] = None,
                 config: Optional[GateConfig] = None) -> LevelReport:
    """Evaluate every candidate level and return the highest that passes.

    All gating conditions are lower bounds on evidence, so improving any
    input can only raise the assignment; evaluation order is irrelevant.
    Missing evidence fails the affected check with a note rather than
    raising.
    """
    if config is None:
        raise ConfigError("assign_level requires a GateConfig")
    ev = dynamics if dynamics is not None else DynamicsEvidence()
    clo = closures if closures is not None else Closures()

    gating0, profile = _level0(axes, ev, config)
    checks = {
        0: tuple(gating0),
        1: tuple(_level1(axes, ev, config)),
        2: tuple(_level2(axes, ev, clo, config)),
        3: tuple(_level3(axes, ev, clo, config)),
        4: tuple(_level4(axes, ev, clo, config)),
    }
    level = None
    for candidate in sorted(checks):
        if all(c.passed for c in checks[candidate]):
            level = candidate
    return LevelReport(level=level, checks=checks, profile=tuple(profile),
                       mode=config.mode, lambda_value=ev.lambda_value,
                       lambda_label=ev.lambda_label)


def maintenance_closure(baseline: float,
                        daily: Sequence[tuple],
                        alpha: float = 0.8,
                        days: int = 7) -> ClosureResult:
    """Hold at least alpha of the baseline index for a consecutive window.

    `daily` rows are (day, index) or (day, index, human_patched). Any gap
    in the day sequence breaks the window; any human patch fails outright.
    """
    if baseline <= 0:
        raise ConfigError("baseline index must be positive")
    if not 0 < alpha <= 1:
        raise ConfigError("alpha must lie in (0, 1]")
    rows = sorted((int(r[0]), float(r[1]), bool(r[2]) if len(r) > 2 else False)
                  for r in daily)
    if len(rows) < days:
        return ClosureResult(False, f"only {len(rows)} days, need {days}",
                             details={"days": len(rows)})
    for (d0, _, _), (d1, _, _) in zip(rows, rows[1:]):
        if d1 != d0 + 1:
            return ClosureResult(False, "window broken",
                                 details={"gap_after_day": d0})
    patched = [d for d, _, p in rows if p]
    if patched:
        return ClosureResult(False, "human patch logged",
                             details={"patched_days": patched})
    floor = alpha * baseline
    margin = min(v for _, v, _ in rows) - floor
    low = [d for d, v, _ in rows if v < floor]
    if low:
        return ClosureResult(False, "index fell below retention floor",
                             margin=margin, details={"violating_days": low})
    return ClosureResult(True, margin=margin,
                         details={"days": len(rows), "floor": floor})


@dataclass(frozen=True)
class ExpansionEvidence:
    """Debiased gain from one revision event plus its ablation counterpart."""

    did_delta: float
    did_ci: tuple[float, float]
    composite_pre: float
    composite_ablated: Optional[float] = None
    did_on_ablated: Optional[float] = None


def expansion_closure(evidence: ExpansionEvidence,
                      epsilon: float = 0.01) -> ClosureResult:
    """Gain must be significant, and must vanish when the change is ablated."""
    if epsilon <= 0:
        raise ConfigError("epsilon must be positive")
    if evidence.composite_ablated is None or evidence.did_on_ablated is None:
        return ClosureResult(False, "ablation missing")
    lo, hi = evidence.did_ci
    details = {
        "did_delta": evidence.did_delta,
        "did_ci": [lo, hi],
        "ablation_return_gap": abs(evidence.composite_ablated
                                   - evidence.composite_pre),
        "did_on_ablated": evidence.did_on_ablated,
    }
    if evidence.did_delta <= 0 or lo <= 0:
        return ClosureResult(False, "gain not significant", details=details)
    if details["ablation_return_gap"] > epsilon:
        return ClosureResult(False, "gain persists after ablation",
                             details=details)
    if abs(evidence.did_on_ablated) > epsilon:
        return ClosureResult(False, "ablated system still shows the gain",
                             details=details)
    margin = min(lo, epsilon - details["ablation_return_gap"],
                 epsilon - abs(evidence.did_on_ablated))
    return ClosureResult(True, margin=margin, details=details)


def curvature_gates(families: Sequence[FamilyDynamics],
                    config: GateConfig,
                    global_elasticity: Optional[float] = None
                    ) -> dict[str, GateCheck]:
    """Acceleration gate, diminishing bound, and the three milestones."""
    ev = DynamicsEvidence(families=tuple(families))
    out = {
        "acceleration": _accel_check(ev, config, config.multi_domain_families),
        "diminishing": _diminishing_check(ev, config),
    }
    kappas = [(f.family, f.kappa) for f in families]
    at_star = [fam for fam, k in kappas if k >= config.kappa_star]
    out["M1"] = GateCheck("M1: slope at target on 2+ families",
                          len(at_star) >= 2, at_star, ">= 2 families")
    prob_ok = [f.family for f in families
               if f.prob_delta_nonneg is not None and f.prob_delta_nonneg >= 0.9]
    out["M2"] = GateCheck(
        "M2: slope on 3+ families and likely nonnegative curvature on 2+",
        len(at_star) >= 3 and len(prob_ok) >= 2,
        {"at_target": at_star, "curvature_likely": prob_ok},
        ">= 3 and >= 2 families")
    fast = [fam for fam, k in kappas if k >= 1.5 * config.kappa_star]
    if global_elasticity is None:
        out["M3"] = GateCheck("M3: 1.5x slope on 4+ families, elasticity >= 0",
                              False, None, None, _INSUFFICIENT)
    else:
        out["M3"] = GateCheck(
            "M3: 1.5x slope on 4+ families, elasticity >= 0",
            len(fast) >= 4 and global_elasticity >= 0,
            {"fast_families": fast, "elasticity": global_elasticity},
            ">= 4 families and >= 0")
    return out


@dataclass(frozen=True)
class InnovationEvidence:
    """Monthly rates of validated integrations and positive revision events."""

    lambda_tool: float
    lambda_rev: float
    ablation_verified: bool = False

    def __post_init__(self):
        if self.lambda_tool < 0 or self.lambda_rev < 0:
            raise ConfigError("innovation rates must be nonnegative")


@dataclass
class AAI5Report:
    passed: bool
    gates: Mapping[str, GateCheck]
    margins: Mapping[str, float]
    coverage: Optional[float]
    innovation_index: Optional[float]
    excluded_families: tuple[str, ...] = ()

    def to_json(self) -> dict:
        return {
            "passed": self.passed,
            "gates": {k: v.to_json() for k, v in sorted(self.gates.items())},
            "margins": {k: self.margins[k] for k in sorted(self.margins)},
            "coverage": self.coverage,
            "innovation_index": self.innovation_index,
            "excluded_families": list(self.excluded_families),
        }


def standardized_margin(agent: Sequence[float],
                        human: Sequence[float]) -> float:
    """Mean paired advantage in units of its standard error."""
    if len(agent) != len(human):
        raise MeterError("paired qualities must align one to one")
    if len(agent) < 2:
        raise MeterError("need at least two paired tasks per family")
    diffs = [a - h for a, h in zip(agent, human)]
    mean = statistics.fmean(diffs)
    sd = statistics.stdev(diffs)
    if sd == 0:
        return 0.0 if mean == 0 else math.copysign(math.inf, mean)
    return mean / (sd / math.sqrt(len(diffs)))


def aai5_gates(paired_qualities: Mapping[str, Sequence[tuple[float, float]]],
               axes: Mapping[str, object],
               families: Sequence[FamilyDynamics],
               innovation: Optional[InnovationEvidence],
               config: GateConfig,
               *,
               composite_current: Optional[float] = None,
               composite_aai4: Optional[float] = None,
               preset: str = "default") -> AAI5Report:
    """Six-gate test for the top level, on one battery with fixed anchors."""
    gates: dict[str, GateCheck] = {}
    margins: dict[str, float] = {}
    excluded: list[str] = []

    for fam in sorted(paired_qualities):
        pairs = paired_qualities[fam]
        if len(pairs) < 2:
            excluded.append(fam)
            continue
        margins[fam] = standardized_margin([a for a, _ in pairs],
                                           [h for _, h in pairs])
    coverage = None
    if not margins:
        gates["G1"] = GateCheck("G1 superhuman coverage", False, None, None,
                                _INSUFFICIENT)
    else:
        zeta = config.superhuman_zeta
        chis = [m >= zeta for m in margins.values()]
        coverage = sum(chis) / len(chis)
        gates["G1"] = GateCheck(
            "G1 superhuman coverage", coverage >= config.coverage_floor and all(chis),
            {"coverage": coverage, "min_margin": min(margins.values())},
            f"coverage >= {config.coverage_floor:g} and every margin >= {zeta:g}")

    known = [f for f in families if f.delta_kappa is not None]
    if not known:
        gates["G2"] = GateCheck("G2 curvature", False, None, None, _INSUFFICIENT)
    else:
        nonneg = sum(f.delta_kappa >= 0 for f in known)
        share = nonneg / len(known)
        others_ok = all(f.delta_kappa >= -config.diminishing_gamma
                        for f in known if f.delta_kappa < 0)
        gates["G2"] = GateCheck(
            "G2 curvature", share >= 0.8 and others_ok,
            {"nonnegative_share": share},
            f">= 0.8 nonnegative, rest >= {-config.diminishing_gamma:g}")

    floors = dict(config.gamma_floors)
    if preset == "software":
        floors.pop("E", None)
        floors["S"] = max(floors.get("S", 0.9), config.strict_social_floor)
        floors["W"] = max(floors.get("W", 0.9), config.strict_social_floor)
    g3_parts = {}
    g3_ok = True
    for axis in sorted(k for k in floors if k != "$"):
        value = _axis_value(axes, axis)
        g3_parts[axis] = value
        if value is None or value < floors[axis]:
            g3_ok = False
    g3_note = None
    if any(v is None for v in g3_parts.values()):
        g3_note = _INSUFFICIENT
    gates["G3"] = GateCheck("G3 coordination floors", g3_ok, g3_parts,
                            {k: floors[k] for k in g3_parts}, g3_note)

    dollar = _axis_value(axes, "$")
    gates["G4"] = _bound_check("G4 economic dominance", dollar,
                               floors.get("$", 0.9))

    innovation_index = None
    if innovation is None:
        gates["G5"] = GateCheck("G5 innovation", False, None, None, _INSUFFICIENT)
    else:
        a_tool, a_rev = config.innovation_weights
        innovation_index = min(
            1.0, a_tool * innovation.lambda_tool + a_rev * innovation.lambda_rev)
        ok = innovation_index >= config.innovation_floor and innovation.ablation_verified
        note = None if innovation.ablation_verified else "events not ablation-verified"
        gates["G5"] = GateCheck("G5 innovation", ok, innovation_index,
                                config.innovation_floor, note)

    if composite_current is None or composite_aai4 is None:
        gates["G6"] = GateCheck("G6 double link-step", False, None, None,
                                _INSUFFICIENT)
    elif not 0 < composite_aai4 < 1:
        gates["G6"] = GateCheck("G6 double link-step", False, composite_aai4,
                                "baseline composite in (0, 1)",
                                "step target undefined at the boundary")
    else:
        target = step_operator(
            step_operator(composite_aai4, config.step_link, config.step_delta),
            config.step_link, config.step_delta)
        gates["G6"] = GateCheck("G6 double link-step",
                                composite_current >= target,
                                composite_current, target)

    return AAI5Report(
        passed=all(g.passed for g in gates.values()),
        gates=gates, margins=margins, coverage=coverage,
        innovation_index=innovation_index,
        excluded_families=tuple(excluded))


@dataclass
class CHCReport:
    vrp: float
    hallucination: float
    wm_span: int
    delayed_recall: float
    checks: Mapping[str, GateCheck]
    passed: bool

    def to_json(self) -> dict:
        return {"vrp": self.vrp, "hallucination": self.hallucination,
                "wm_span": self.wm_span, "delayed_recall": self.delayed_recall,
                "checks": {k: v.to_json() for k, v in sorted(self.checks.items())},
                "passed": self.passed}


def chc_gates(vrp_bits: Sequence[Sequence[int]],
              wm_accuracy: Mapping[int, Sequence[float]],
              recall_fractions: Sequence[float],
              config: GateConfig) -> CHCReport:
    """Retrieval-fidelity and memory gates for promotion eligibility.

    vrp_bits holds one verification row per scored item (fixed k across
    items); wm_accuracy maps list length to per-seed accuracies; recall
    fractions are per-item delayed-recall scores.
    """
    if config.tau_wm_span is None or config.tau_recall is None:
        raise ConfigError("chc gates need tau_wm_span and tau_recall")
    if not vrp_bits:
        raise NoDataError("no verified-retrieval records")
    k = len(vrp_bits[0])
    if k == 0:
        raise MeterError("retrieval rows must be nonempty")
    item_means = []
    for row in vrp_bits:
        if len(row) != k:
            raise MeterError("retrieval depth k differs across items")
        if any(b not in (0, 1) for b in row):
            raise MeterError("verification bits must be 0 or 1")
        item_means.append(sum(row) / k)
    vrp = sum(item_means) / len(item_means)
    hall = 1 - vrp

    span = 0
    for length in sorted(wm_accuracy):
        seeds = list(wm_accuracy[length])
        if not seeds:
            continue
        if statistics.median(seeds) >= config.wm_theta:
            span = max(span, int(length))
    if not recall_fractions:
        raise NoDataError("no delayed-recall records")
    recall = statistics.fmean(recall_fractions)

    checks = {
        "vrp": GateCheck("verified-retrieval precision", vrp >= config.tau_vrp,
                         vrp, config.tau_vrp),
        "hallucination": GateCheck("hallucination rate", hall <= config.tau_hall,
                                   hall, config.tau_hall),
        "wm_span": GateCheck("working-memory span",
                             span >= config.tau_wm_span, span,
                             config.tau_wm_span),
        "recall": GateCheck("delayed recall", recall >= config.tau_recall,
                            recall, config.tau_recall),
    }
    return CHCReport(vrp=vrp, hallucination=hall, wm_span=span,
                     delayed_recall=recall, checks=checks,
                     passed=all(c.passed for c in checks.values()))


@dataclass
class AllocationResult:
    allocation: Mapping[str, float]
    uniform_split: bool

    def to_json(self) -> dict:
        return {"allocation": {k: self.allocation[k]
                               for k in sorted(self.allocation)},
                "uniform_split": self.uniform_split}


def suggest_allocation(scores: Mapping[str, object],
                       weights: Mapping[str, float],
                       elasticities: Mapping[str, float],
                       budget: float) -> AllocationResult:
    """Split a budget across axes in proportion to weighted elasticities."""
    if budget <= 0:
        raise ConfigError("budget must be positive")
    names = sorted(set(scores) & set(weights) & set(elasticities))
    if not names:
        raise ConfigError("no axes shared by scores, weights, elasticities")
    for name in names:
        if elasticities[name] < 0:
            raise ConfigError(f"elasticity for {name} must be nonnegative")
        if weights[name] < 0:
            raise ConfigError(f"weight for {name} must be nonnegative")
    mass = {n: weights[n] * elasticities[n] for n in names}
    total = sum(mass.values())
    uniform = total == 0
    if uniform:
        alloc = {n: budget / len(names) for n in names}
    else:
        alloc = {n: budget * m / total for n, m in mass.items()}
    # absorb rounding drift into the largest entry, then walk it one ulp
    # at a time until the compensated sum lands on the budget exactly
    top = max(alloc, key=alloc.get)
    alloc[top] = budget - math.fsum(v for n, v in alloc.items() if n != top)
    for _ in range(64):
        drift = budget - math.fsum(alloc.values())
        if drift == 0:
            break
        alloc[top] = math.nextafter(alloc[top], math.copysign(math.inf, drift))
    return AllocationResult(allocation=alloc, uniform_split=uniform)
