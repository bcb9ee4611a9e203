"""Per-axis estimators for the ten capability axes.

Each estimator reduces traces to a raw statistic, which the shared
anchor map turns into a normalized score in [0,1]. Estimators raise
NoDataError when the needed observables are absent; the vector builder
turns that into a distinct "no_data" axis state, which downstream
consumers must never conflate with a measured zero.

Bootstrap intervals resample the natural unit of each estimator:
episodes for A/P/T/W/$, families for G/M, revision events for R,
tasks for S, real episodes for E.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .battery import AXES, Battery, EpisodeTrace, FamilyAggregate, RevisionEvent, family_aggregate
from .errors import ConfigError, NoDataError
from .stats import CIResult, ResamplePlan, bootstrap_ci, did_delta

_LOG_CLAMP = 1e-6  # floor applied to qualities before taking logs
_BRIER_EPS = 1e-12
_LIFT_EPS = 1e-9


def calibrate(raw: float, anchors: tuple[float, float]) -> float:
    """Map a raw statistic onto [0,1] through (low, high) anchor points."""
    lo, hi = anchors
    if lo >= hi:
        raise ConfigError(f"degenerate anchor ({lo}, {hi})")
    return float(min(1.0, max(0.0, (raw - lo) / (hi - lo))))


@dataclass
class AxisResult:
    axis: str
    raw: Optional[float]
    value: Optional[float]
    status: str  # "ok" | "partial" | "no_data"
    n: int = 0
    ci: Optional[tuple[float, float]] = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def has_value(self) -> bool:
        return self.value is not None

    def to_json(self) -> dict:
        return {
            "axis": self.axis,
            "raw": self.raw,
            "score": self.value,
            "status": self.status,
            "n": self.n,
            "ci": list(self.ci) if self.ci else None,
            "diagnostics": self.diagnostics,
        }


def _interval(units: Sequence, statistic: Callable[[np.ndarray], float],
              plan: Optional[ResamplePlan]) -> Optional[tuple[float, float]]:
    """Percentile interval for a statistic over resampled unit indices."""
    if plan is None or len(units) == 0:
        return None
    idx = np.arange(len(units), dtype=float)
    res = bootstrap_ci(idx, plan, statistic=lambda ix: statistic(ix.astype(int)))
    if not res.has_interval:
        return None
    return (res.lo, res.hi)


def _finish(axis: str, raw: float, anchors: Mapping[str, tuple[float, float]],
            n: int, raw_ci: Optional[tuple[float, float]],
            diagnostics: dict, status: str = "ok") -> AxisResult:
    anchor = anchors[axis]
    ci = None
    if raw_ci is not None:
        ci = (calibrate(raw_ci[0], anchor), calibrate(raw_ci[1], anchor))
        diagnostics["raw_ci"] = list(raw_ci)
    return AxisResult(axis=axis, raw=raw, value=calibrate(raw, anchor),
                      status=status, n=n, ci=ci, diagnostics=diagnostics)


# ---------------------------------------------------------------------------
# A, G, P: bounded-ratio means and coverage
# ---------------------------------------------------------------------------

def axis_A(traces: Sequence[EpisodeTrace], horizon_cap: int,
           anchors: Mapping[str, tuple[float, float]],
           plan: Optional[ResamplePlan] = None) -> AxisResult:
    """Uninterrupted-run length relative to the horizon cap."""
    vals = np.array([min(t.uninterrupted_actions / horizon_cap, 1.0)
                     for t in traces if t.uninterrupted_actions is not None])
    if vals.size == 0:
        raise NoDataError("no traces carry uninterrupted_actions")
    raw = float(vals.mean())
    ci = _interval(vals, lambda ix: float(vals[ix].mean()), plan)
    return _finish("A", raw, anchors, vals.size, ci, {})


def axis_G(aggregates: Mapping[str, FamilyAggregate],
           anchors: Mapping[str, tuple[float, float]],
           plan: Optional[ResamplePlan] = None) -> AxisResult:
    """Fraction of families with data whose mean quality clears the threshold."""
    flags = np.array([1.0 if agg.covered else 0.0
                      for agg in aggregates.values() if agg.has_data])
    if flags.size == 0:
        raise NoDataError("no family has any traces")
    raw = float(flags.mean())
    ci = _interval(flags, lambda ix: float(flags[ix].mean()), plan)
    diag = {
        "families_with_data": int(flags.size),
        "families_covered": int(flags.sum()),
        "families_no_data": sorted(f for f, a in aggregates.items() if not a.has_data),
    }
    return _finish("G", raw, anchors, flags.size, ci, diag)


def axis_P(traces: Sequence[EpisodeTrace], depth_anchor: int,
           anchors: Mapping[str, tuple[float, float]],
           plan: Optional[ResamplePlan] = None) -> AxisResult:
    """Verified plan depth relative to the depth anchor."""
    vals = np.array([min(t.plan_depth / depth_anchor, 1.0)
                     for t in traces if t.plan_depth is not None])
    if vals.size == 0:
        raise NoDataError("no traces carry plan_depth")
    raw = float(vals.mean())
    ci = _interval(vals, lambda ix: float(vals[ix].mean()), plan)
    return _finish("P", raw, anchors, vals.size, ci, {})


# ---------------------------------------------------------------------------
# M: retention decay and recall
# ---------------------------------------------------------------------------

def _retention_fit(lags: np.ndarray, quals: np.ndarray) -> float:
    """Decay rate from a log-linear least-squares fit of quality on lag."""
    logs = np.log(np.maximum(quals, _LOG_CLAMP))
    slope = np.polyfit(lags, logs, 1)[0]
    return float(-slope)


def _empirical_half_life(lags: np.ndarray, quals: np.ndarray) -> Optional[float]:
    """First lag at which mean quality halves, by linear interpolation."""
    order = np.argsort(lags)
    uniq, start = np.unique(lags[order], return_index=True)
    means = np.array([quals[lags == u].mean() for u in uniq])
    if uniq.size < 2:
        return None
    target = means[0] / 2.0
    for i in range(uniq.size - 1):
        hi, lo = means[i], means[i + 1]
        if hi >= target >= lo:
            if hi == lo:
                return float(uniq[i + 1])
            frac = (hi - target) / (hi - lo)
            return float(uniq[i] + frac * (uniq[i + 1] - uniq[i]))
    return None


def retention_score(decay_rate: float, lambda_max: float) -> float:
    """exp(-rate/rate_max), clipped to [0,1]; rate 0 keeps a full score."""
    return float(min(1.0, math.exp(-max(decay_rate, 0.0) / lambda_max)))


def axis_M(traces: Sequence[EpisodeTrace], battery: Battery,
           recall_at_k: Optional[float] = None,
           plan: Optional[ResamplePlan] = None) -> AxisResult:
    """Long-lag retention plus recall, median across persistence families.

    Families are "persistence" families when their traces carry lag_days.
    Retention is a log-linear decay fit; recall is pooled hit rate per
    family, or the supplied override. Families without recall data fall
    back to the retention component alone and flip the status to partial.
    """
    if recall_at_k is not None and not 0.0 <= recall_at_k <= 1.0:
        raise ConfigError("recall_at_k must lie in [0,1]")
    by_family: dict[str, list[EpisodeTrace]] = {}
    for t in traces:
        if t.lag_days is None:
            continue
        task = battery.tasks.get(t.task_id)
        if task is None:
            continue
        by_family.setdefault(task.family, []).append(t)
    if not by_family:
        raise NoDataError("no traces carry lag_days")

    per_family: dict[str, dict] = {}
    m_hats: list[float] = []
    skipped: list[str] = []
    missing_recall: list[str] = []
    for fam, fam_traces in sorted(by_family.items()):
        lags = np.array([t.lag_days for t in fam_traces], dtype=float)
        quals = np.array([t.quality for t in fam_traces], dtype=float)
        if np.unique(lags).size < 2:
            skipped.append(fam)
            continue
        rate = _retention_fit(lags, quals)
        m1 = retention_score(rate, battery.lambda_max)
        if recall_at_k is not None:
            m2 = recall_at_k
        else:
            hits = sum(t.recall_hits for t in fam_traces if t.recall_hits is not None
                       and t.recall_total is not None)
            total = sum(t.recall_total for t in fam_traces if t.recall_hits is not None
                        and t.recall_total is not None)
            m2 = hits / total if total else None
        m_hat = m1 if m2 is None else (m1 + m2) / 2.0
        if m2 is None:
            missing_recall.append(fam)
        per_family[fam] = {
            "decay_rate": rate,
            "retention": m1,
            "recall": m2,
            "score": m_hat,
            "half_life_days": _empirical_half_life(lags, quals),
            "n": len(fam_traces),
        }
        m_hats.append(m_hat)
    if not m_hats:
        raise NoDataError("every persistence family has a single lag")

    vals = np.array(m_hats)
    raw = float(np.median(vals))
    ci = _interval(vals, lambda ix: float(np.median(vals[ix])), plan)
    status = "partial" if missing_recall else "ok"
    diag = {"families": per_family, "skipped_single_lag": skipped,
            "families_without_recall": missing_recall}
    return _finish("M", raw, battery.anchors, vals.size, ci, diag, status=status)


# ---------------------------------------------------------------------------
# T: tool coverage, drift-robust success, repertoire size
# ---------------------------------------------------------------------------

def _tool_components(traces: Sequence[EpisodeTrace], battery: Battery,
                     required: frozenset[str]) -> tuple[float, float, float, dict]:
    used = frozenset().union(*(t.tool_categories_used for t in traces)) if traces else frozenset()
    cov = len(used & required) / len(required)

    succ_by_mag: dict[float, list[int]] = {}
    for t in traces:
        mag = battery.drift_magnitude(t.drift_tag)
        if mag is None:
            mag = 0.0  # untagged episodes count as undrifted
        ok = 1 if t.quality >= battery.tasks[t.task_id].quality_target else 0
        succ_by_mag.setdefault(mag, []).append(ok)
    total = sum(len(v) for v in succ_by_mag.values())
    succ = sum(sum(v) for v in succ_by_mag.values()) / total if total else 0.0

    repertoire = len(used)
    size = min(1.0, math.log1p(repertoire) / math.log1p(battery.size_prior_max))
    curve = {f"{mag:g}": float(np.mean(v)) for mag, v in sorted(succ_by_mag.items())}
    diag = {"coverage": cov, "success": succ, "size_factor": size,
            "repertoire": repertoire, "success_by_drift": curve}
    return cov, succ, size, diag


def axis_T(traces: Sequence[EpisodeTrace], battery: Battery,
           plan: Optional[ResamplePlan] = None) -> AxisResult:
    """Geometric mean of required-tool coverage, drifted success, and breadth."""
    required = frozenset().union(*(t.required_tools for t in battery.tasks.values()))
    if not required:
        raise NoDataError("battery declares no required tool categories")
    known = [t for t in traces if t.task_id in battery.tasks]
    if not known:
        raise NoDataError("no traces available for the tool axis")

    cov, succ, size, diag = _tool_components(known, battery, required)
    raw = (cov * succ * size) ** (1 / 3)

    def stat(ix: np.ndarray) -> float:
        sub = [known[i] for i in ix]
        c, s, z, _ = _tool_components(sub, battery, required)
        return (c * s * z) ** (1 / 3)

    ci = _interval(known, stat, plan)
    return _finish("T", raw, battery.anchors, len(known), ci, diag)


# ---------------------------------------------------------------------------
# R: audited self-revision gains
# ---------------------------------------------------------------------------

def axis_R(events: Sequence[RevisionEvent], battery: Battery,
           plan: Optional[ResamplePlan] = None) -> AxisResult:
    """Autonomy-weighted positive difference-in-differences gains, scaled by Z.

    Absence of revision events is a measured zero: the system showed no
    self-revision, so the raw statistic is 0 rather than no-data.
    """
    excluded = []
    kept: list[RevisionEvent] = []
    for ev in events:
        if ev.holdout_mismatch:
            excluded.append({"event_id": ev.event_id, "reason": "holdout mismatch"})
        elif ev.c_ctrl_pre is None or ev.c_ctrl_post is None:
            excluded.append({"event_id": ev.event_id, "reason": "missing control"})
        else:
            kept.append(ev)

    aP, aI, aV = battery.stage_weights
    contributions = []
    per_event = []
    for ev in kept:
        delta = did_delta(ev.c_rev_pre, ev.c_rev_post, ev.c_ctrl_pre, ev.c_ctrl_post)
        rho = aP * ev.stage_autonomy[0] + aI * ev.stage_autonomy[1] + aV * ev.stage_autonomy[2]
        contributions.append(rho * max(delta, 0.0))
        per_event.append({"event_id": ev.event_id, "did": delta, "autonomy": rho,
                          "contribution": rho * max(delta, 0.0)})

    z = battery.revision_scale
    total = sum(contributions)
    raw = float(min(1.0, max(0.0, total / z)))
    vals = np.array(contributions) if contributions else np.array([])
    ci = _interval(vals, lambda ix: float(min(1.0, max(0.0, vals[ix].sum() / z))), plan)
    diag = {"events": per_event, "excluded": excluded, "scale": z,
            "total_contribution": total}
    return _finish("R", raw, battery.anchors, len(kept), ci, diag)


# ---------------------------------------------------------------------------
# S: coordination lift with deadlock penalty
# ---------------------------------------------------------------------------

def _comm_ratio(t: EpisodeTrace) -> Optional[float]:
    if t.comm_tokens is None or not t.uninterrupted_actions:
        return None
    return t.comm_tokens / t.uninterrupted_actions


def _flag_mean(values: list[Optional[bool]]) -> float:
    known = [1.0 if v else 0.0 for v in values if v is not None]
    return float(np.mean(known)) if known else 0.0


@dataclass
class _TaskLift:
    task_id: str
    lift: float
    conflict: list[Optional[bool]]
    chatter: list[Optional[bool]]
    collapse: list[Optional[bool]]


def axis_S(traces: Sequence[EpisodeTrace], battery: Battery,
           plan: Optional[ResamplePlan] = None) -> AxisResult:
    """Headroom-normalized multi-agent lift over solo runs, penalty-deflated.

    Needs per task a solo (concurrency 1) mean and at least one
    multi-agent mean; pathology flags are read at the selected best
    concurrency, with chatter inferred from comm ratio against the solo
    median when the flag was not logged.
    """
    by_task: dict[str, dict[int, list[EpisodeTrace]]] = {}
    for t in traces:
        if t.concurrency is None:
            continue
        by_task.setdefault(t.task_id, {}).setdefault(t.concurrency, []).append(t)
    if not any(m > 1 for groups in by_task.values() for m in groups):
        raise NoDataError("no multi-agent traces")

    solo_ratios = [r for groups in by_task.values() for tr in groups.get(1, ())
                   if (r := _comm_ratio(tr)) is not None]
    tau_comm = float(np.median(solo_ratios)) if solo_ratios else None

    def chatter_flag(tr: EpisodeTrace) -> Optional[bool]:
        if tr.episode_flags is not None and tr.episode_flags.chatter is not None:
            return tr.episode_flags.chatter
        r = _comm_ratio(tr)
        if r is None or tau_comm is None:
            return None
        return r > tau_comm

    tasks: list[_TaskLift] = []
    for task_id, groups in sorted(by_task.items()):
        if 1 not in groups or not any(m > 1 for m in groups):
            continue
        c1 = float(np.mean([t.quality for t in groups[1]]))
        multi = {m: float(np.mean([t.quality for t in grp]))
                 for m, grp in groups.items() if m > 1}
        best_q = max(multi.values())
        best_ms = [m for m, q in multi.items() if q == best_q]
        if len(best_ms) > 1:  # tie-break by lower comms per action
            def mean_ratio(m: int) -> float:
                rs = [r for t in groups[m] if (r := _comm_ratio(t)) is not None]
                return float(np.mean(rs)) if rs else math.inf
            best_ms.sort(key=mean_ratio)
        m_star = best_ms[0]
        lift = max(best_q - c1, 0.0) / (1.0 - c1 + _LIFT_EPS)

        star = groups[m_star]
        conflict = []
        for tr in star:
            f = tr.episode_flags
            if f is None or (f.unresolved_conflict is None and f.loop is None):
                conflict.append(None)
            else:
                conflict.append(bool(f.unresolved_conflict) or bool(f.loop))
        tasks.append(_TaskLift(
            task_id=task_id, lift=min(lift, 1.0),
            conflict=conflict,
            chatter=[chatter_flag(tr) for tr in star],
            collapse=[tr.episode_flags.mode_collapse if tr.episode_flags else None
                      for tr in star],
        ))
    if not tasks:
        raise NoDataError("no task has both solo and multi-agent runs")

    alpha, beta = battery.comm_penalty_weights

    def score(subset: Sequence[_TaskLift]) -> tuple[float, float]:
        s_bar = float(np.mean([t.lift for t in subset]))
        conflict = _flag_mean([v for t in subset for v in t.conflict])
        chatter = _flag_mean([v for t in subset for v in t.chatter])
        collapse = _flag_mean([v for t in subset for v in t.collapse])
        pi = min(1.0, max(0.0, conflict + alpha * chatter + beta * collapse))
        return float(min(1.0, max(0.0, s_bar * (1.0 - pi)))), pi

    raw, pi_deadlock = score(tasks)
    ci = _interval(tasks, lambda ix: score([tasks[i] for i in ix])[0], plan)
    diag = {"deadlock_penalty": pi_deadlock, "tau_comm": tau_comm,
            "tasks": {t.task_id: t.lift for t in tasks}}
    return _finish("S", raw, battery.anchors, len(tasks), ci, diag)


# ---------------------------------------------------------------------------
# E: embodiment (optional axis) and robotics diagnostics
# ---------------------------------------------------------------------------

def _embodied(traces: Sequence[EpisodeTrace]) -> list[EpisodeTrace]:
    return [t for t in traces
            if t.exposure_hours is not None and t.incident_counts is not None]


def _ar_ss(real: Sequence[EpisodeTrace], battery: Battery) -> tuple[float, float, dict]:
    hours = sum(t.exposure_hours for t in real)
    if hours <= 0:
        raise NoDataError("zero exposure hours")
    succ = [1.0 if t.quality >= battery.tasks[t.task_id].quality_target else 0.0
            for t in real]
    ar = float(np.mean(succ))
    counts = {k: sum(t.incident_counts.get(k, 0) for t in real)
              for k in ("nm", "min", "maj", "crit")}
    w = battery.ss_severity_weights
    rates = {k: 100.0 * counts[k] / hours for k in counts}
    ss = 0.0 if counts["crit"] > 0 else 1.0 - min(1.0, sum(
        wi * rates[k] for wi, k in zip(w, ("nm", "min", "maj", "crit"))))
    failures = counts["min"] + counts["maj"] + counts["crit"]
    incidents = sum(counts.values())
    diag = {
        "exposure_hours": hours,
        "incident_counts": counts,
        "incident_rates_per_100h": rates,
        "mtbf_hours": hours / failures if failures else None,
        "mtbsi_hours": hours / incidents if incidents else None,
    }
    return ar, ss, diag


def axis_E(traces: Sequence[EpisodeTrace], battery: Battery,
           plan: Optional[ResamplePlan] = None) -> AxisResult:
    """Action reliability, safety under severity-weighted incident rates,
    and sim-to-real agreement; optional axis, absent for non-embodied runs."""
    embodied = [t for t in _embodied(traces) if t.task_id in battery.tasks]
    if not embodied:
        raise NoDataError("no embodied traces (exposure hours + incident counts)")
    real = [t for t in embodied if not t.sim_flag]
    sim = [t for t in embodied if t.sim_flag]
    if not real:
        raise NoDataError("no real embodied episodes")

    ar, ss, diag = _ar_ss(real, battery)
    repairs = [t.repair_hours for t in real if t.repair_hours is not None]
    diag["mttr_hours"] = float(np.mean(repairs)) if repairs else None

    if not sim:
        diag["note"] = "no matched sim episodes; sim-to-real factor unavailable"
        return AxisResult(axis="E", raw=None, value=None, status="partial",
                          n=len(real), ci=None,
                          diagnostics={**diag, "action_reliability": ar, "safety": ss})
    ar_sim = float(np.mean([1.0 if t.quality >= battery.tasks[t.task_id].quality_target
                            else 0.0 for t in sim]))
    s2r = 1.0 - abs(ar_sim - ar)
    raw = (ar * ss * s2r) ** (1 / 3)
    diag.update({"action_reliability": ar, "safety": ss,
                 "sim_to_real": s2r, "action_reliability_sim": ar_sim})

    def stat(ix: np.ndarray) -> float:
        sub = [real[i] for i in ix]
        a, s, _ = _ar_ss(sub, battery)
        return (a * s * (1.0 - abs(ar_sim - a))) ** (1 / 3)

    ci = _interval(real, stat, plan)
    return _finish("E", raw, battery.anchors, len(real), ci, diag)


def robotics_diagnostics(traces: Sequence[EpisodeTrace], battery: Battery,
                         quality_star: Optional[float] = None,
                         physical_cost_per_hour: Optional[float] = None) -> dict:
    """Recovery autonomy, control quality, and physical throughput.

    Each diagnostic is independently None when its input columns are
    missing; recovery autonomy is also None on zero observed faults.
    """
    fault_traces = [t for t in traces
                    if t.recovered_faults is not None and t.total_faults is not None]
    total = sum(t.total_faults for t in fault_traces)
    recovered = sum(t.recovered_faults for t in fault_traces)
    ra = recovered / total if total else None

    qc_vals = [t.control_quality for t in traces if t.control_quality is not None]
    qc = float(np.mean(qc_vals)) if qc_vals else None

    phys = None
    if quality_star is not None and physical_cost_per_hour:
        hours = sum(t.exposure_hours for t in traces if t.exposure_hours is not None)
        if hours > 0:
            wins = sum(1 for t in traces
                       if t.exposure_hours is not None and t.quality >= quality_star)
            phys = (wins / hours) / physical_cost_per_hour
    return {"recovery_autonomy": ra, "control_quality": qc,
            "physical_throughput": phys}


# ---------------------------------------------------------------------------
# W: calibrated truthfulness vs a pre-registered reference
# ---------------------------------------------------------------------------

def axis_W(traces: Sequence[EpisodeTrace],
           reference_predictor: Mapping[str, float], battery: Battery,
           plan: Optional[ResamplePlan] = None) -> AxisResult:
    """One minus the Brier ratio against the reference predictor.

    reference_predictor maps task ids to reference probabilities, with
    key "default" as the fallback; it is mandatory whenever scored
    probability statements exist.
    """
    scored = [t for t in traces if t.stated_prob is not None and t.truth is not None]
    if not scored:
        raise NoDataError("no traces carry stated_prob/truth")
    if reference_predictor is None:
        raise ConfigError("reference predictor is required for the truthfulness axis")

    def ref_for(t: EpisodeTrace) -> float:
        p = reference_predictor.get(t.task_id, reference_predictor.get("default"))
        if p is None:
            raise ConfigError(f"no reference prediction for task {t.task_id!r}")
        return float(p)

    p = np.array([t.stated_prob for t in scored])
    y = np.array([float(t.truth) for t in scored])
    r = np.array([ref_for(t) for t in scored])
    brier = float(np.mean((p - y) ** 2))
    brier_ref = float(np.mean((r - y) ** 2))

    def w_of(ix: np.ndarray) -> float:
        b = float(np.mean((p[ix] - y[ix]) ** 2))
        br = float(np.mean((r[ix] - y[ix]) ** 2))
        return 1.0 - min(1.0, b / max(br, _BRIER_EPS))

    raw = 1.0 - min(1.0, brier / max(brier_ref, _BRIER_EPS))
    ci = _interval(scored, w_of, plan)
    diag = {"brier": brier, "brier_reference": brier_ref}
    return _finish("W", raw, battery.anchors, len(scored), ci, diag)


# ---------------------------------------------------------------------------
# $: cost-normalized throughput
# ---------------------------------------------------------------------------

def axis_dollar(traces: Sequence[EpisodeTrace], battery: Battery,
                quality_star: float, cost_per_hour: float,
                plan: Optional[ResamplePlan] = None) -> AxisResult:
    """Successful tasks per wall-clock hour, divided by cost per hour."""
    if not 0.0 < quality_star < 1.0:
        raise ConfigError("quality_star must lie in (0,1)")
    if cost_per_hour <= 0:
        raise ConfigError("cost_per_hour must be positive")
    stamped = [t for t in traces if t.timestamp is not None]
    if len(stamped) < 2:
        raise NoDataError("need at least two timestamped traces")
    ts = np.array([t.timestamp for t in stamped])
    span_hours = float(ts.max() - ts.min()) / 3600.0
    if span_hours <= 0:
        raise NoDataError("zero elapsed wall-clock time")

    wins = np.array([1.0 if t.quality >= quality_star else 0.0 for t in stamped])
    tph = float(wins.sum()) / span_hours
    raw = tph / cost_per_hour
    ci = _interval(stamped,
                   lambda ix: (float(wins[ix].sum()) / span_hours) / cost_per_hour,
                   plan)
    diag = {"throughput_per_hour": tph, "span_hours": span_hours,
            "successes": int(wins.sum()), "cost_per_hour": cost_per_hour}
    return _finish("$", raw, battery.anchors, len(stamped), ci, diag)


# ---------------------------------------------------------------------------
# vector builder
# ---------------------------------------------------------------------------

def estimate_axes(battery: Battery, traces: Sequence[EpisodeTrace],
                  revision_events: Sequence[RevisionEvent] = (),
                  *,
                  reference_predictor: Optional[Mapping[str, float]] = None,
                  quality_star: Optional[float] = None,
                  cost_per_hour: Optional[float] = None,
                  recall_at_k: Optional[float] = None,
                  plan: Optional[ResamplePlan] = None) -> dict[str, AxisResult]:
    """Estimate all ten axes, mapping missing evidence to no_data states."""
    results: dict[str, AxisResult] = {}

    def run(axis: str, fn: Callable[[], AxisResult]) -> None:
        try:
            results[axis] = fn()
        except NoDataError as exc:
            results[axis] = AxisResult(axis=axis, raw=None, value=None,
                                       status="no_data",
                                       diagnostics={"reason": str(exc)})

    aggregates = family_aggregate([t for t in traces if t.task_id in battery.tasks], battery)
    run("A", lambda: axis_A(traces, battery.horizon_cap, battery.anchors, plan))
    run("G", lambda: axis_G(aggregates, battery.anchors, plan))
    run("P", lambda: axis_P(traces, battery.depth_anchor, battery.anchors, plan))
    run("M", lambda: axis_M(traces, battery, recall_at_k, plan))
    run("T", lambda: axis_T(traces, battery, plan))
    run("R", lambda: axis_R(revision_events, battery, plan))
    run("S", lambda: axis_S(traces, battery, plan))
    run("E", lambda: axis_E(traces, battery, plan))

    def w_fn() -> AxisResult:
        scored = [t for t in traces if t.stated_prob is not None and t.truth is not None]
        if scored and reference_predictor is None:
            raise ConfigError("probability statements present but no reference predictor configured")
        if not scored:
            raise NoDataError("no traces carry stated_prob/truth")
        return axis_W(traces, reference_predictor, battery, plan)

    run("W", w_fn)

    def dollar_fn() -> AxisResult:
        stamped = [t for t in traces if t.timestamp is not None]
        if len(stamped) >= 2 and (quality_star is None or cost_per_hour is None):
            raise ConfigError("throughput axis needs quality_star and cost_per_hour")
        if len(stamped) < 2:
            raise NoDataError("need at least two timestamped traces")
        return axis_dollar(traces, battery, quality_star, cost_per_hour, plan)

    run("$", dollar_fn)
    return results
