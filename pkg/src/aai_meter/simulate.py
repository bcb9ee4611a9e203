"""Synthetic trace and trajectory generation.

Two generators live here. The archetype generator lays out a quantized
evaluation pool for four reference agent profiles and plays it back
through the real estimator pipeline, so the whole battery -> axes ->
composite path can be checked against a construction-side expected
table. The progression generator integrates a sublinear-gap growth law
for the normalized self-improvement rate, advances axes and superhuman
margins along responsiveness slopes, and reports the first resource
points at which the level-4 and level-5 gate sets hold.

Neither generator claims empirical validity for any real system; both
exist to exercise and verify the pipeline end to end.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .battery import (AXES, Battery, EpisodeTrace, ResourceLedger, RevisionEvent,
                      load_battery)
from .composite import CompositeResult, compute_composite
from .dynamics import (C_CLAMP, CheckpointSeries, KappaEstimate,
                       checkpoints_from_traces, kappa_estimate, step_operator)
from .errors import ConfigError, MeterError
from .gates import DEFAULT_THRESHOLDS, ExpansionEvidence, GateConfig
from .stats import ResamplePlan
from .axes import AxisResult, estimate_axes

ARCHETYPE_NAMES = ("rpa", "agentic-llm", "self-improving", "orchestrator")

# Bundled reference profiles: per-axis generation targets, the embodied
# axis deliberately absent (software-only archetypes).
ARCHETYPE_PROFILES: dict[str, dict[str, float]] = {
    "rpa": {"A": 0.98, "G": 0.06, "P": 0.03, "M": 0.12, "T": 0.12,
            "R": 0.00, "S": 0.00, "W": 0.32, "$": 0.41},
    "agentic-llm": {"A": 0.64, "G": 0.33, "P": 0.47, "M": 0.43, "T": 0.59,
                    "R": 0.00, "S": 0.18, "W": 0.58, "$": 0.37},
    "self-improving": {"A": 0.68, "G": 0.36, "P": 0.54, "M": 0.51, "T": 0.63,
                       "R": 0.27, "S": 0.23, "W": 0.61, "$": 0.42},
    "orchestrator": {"A": 0.73, "G": 0.41, "P": 0.66, "M": 0.60, "T": 0.76,
                     "R": 0.38, "S": 0.46, "W": 0.65, "$": 0.48},
}
ARCHETYPE_KAPPA = {"rpa": 0.0, "agentic-llm": 0.0,
                   "self-improving": 0.007, "orchestrator": 0.012}

# Fixed evaluation constants for the archetype battery.
QUALITY_STAR = 0.6          # win bar for the throughput axis
COST_PER_HOUR = 50.0        # published operating cost
SPAN_HOURS = 10.0           # wall-clock span of the throughput window
TIER_WIN = 0.65             # clears the win bar and the task target
TIER_PASS = 0.55            # clears the task target only
TIER_FAIL = 0.40            # clears neither
RETENTION_LAGS = (1.0, 5.0, 10.0, 20.0, 35.0)
RECALL_TOTAL_PER_TRACE = 20
SLOPE_DAYS = 10
SLOPE_FAMILIES = ("fam01", "fam02")
SLOPE_BASELINE = 0.55
REVISION_PRE = 0.5        # treated capability before the one revision event
CONTROL_LEVEL = 0.6       # matched holdout, flat across the window
_LIFT_EPS = 1e-9            # matches the coordination estimator's headroom guard
_EPOCH_BASE = 1_750_000_000.0

_GENERAL_FAMILIES = tuple(f"fam{i:02d}" for i in range(92))   # fam00 hosts coordination
_DOLLAR_FAMILIES = tuple(f"dol{i:02d}" for i in range(4))
_MEM_FAMILIES = tuple(f"mem{i:02d}" for i in range(4))
_REQUIRED_TOOLS = tuple(f"cat{i:02d}" for i in range(10))
_EXTRA_TOOLS = tuple(f"cat{i:02d}" for i in range(10, 15))
_DRIFT_CYCLE = ("none", "mild", "moderate", "severe")


def archetype_battery() -> Battery:
    """The fixed 100-family battery the archetype generator targets.

    92 general families carry the coverage and tier structure, one of
    them doubling as the coordination probe; four throughput families
    use a high task target so win-bar traces stay below it; four
    persistence families hold the retention design.
    """
    return load_battery(archetype_battery_config())


def archetype_battery_config() -> dict:
    tasks = []
    for i, fam in enumerate(_GENERAL_FAMILIES):
        for j in range(5):
            tasks.append({"id": f"{fam}-t{j}", "family": fam,
                          "quality_target": 0.5,
                          "required_tools": [_REQUIRED_TOOLS[i % 10]]})
    for fam in _DOLLAR_FAMILIES:
        for j in range(5):
            tasks.append({"id": f"{fam}-t{j}", "family": fam,
                          "quality_target": 0.97})
    for fam in _MEM_FAMILIES:
        for j in range(5):
            tasks.append({"id": f"{fam}-t{j}", "family": fam,
                          "quality_target": 0.999})
    thresholds = {fam: 0.5 for fam in _GENERAL_FAMILIES}
    thresholds.update({fam: 0.97 for fam in _DOLLAR_FAMILIES})
    thresholds.update({fam: 0.999 for fam in _MEM_FAMILIES})
    return {
        "tasks": tasks,
        "family_thresholds": thresholds,
        "drift_catalog": [{"name": "none", "magnitude": 0.0},
                          {"name": "mild", "magnitude": 0.1},
                          {"name": "moderate", "magnitude": 0.3},
                          {"name": "severe", "magnitude": 0.6}],
        "resource_schema": {"gpu-hour": 1.0, "api-call": 0.001, "self-update": 1.0},
        "weight_preset": "software",
        "seed_manifest": [f"seed-{i:03d}" for i in range(100)],
        "horizon_cap": 100,
        "depth_anchor": 100,
        "lambda_max": math.log(2.0) / 30.0,
        "recall_k": 5,
        "size_prior_max": 15.0,
        "revision_scale": 0.10,
        "proper_scoring_declared": True,
    }


@dataclass(frozen=True)
class ArchetypeSpec:
    """Generation targets for one synthetic agent profile.

    targets maps the nine software axes to means in [0,1]; kappa is the
    designed improvement slope per unit resource; noise is the scale of
    truncated symmetric per-trace perturbations (0 disables them); runs
    sizes the evidence pool (groups scale linearly with it).
    """

    name: str
    targets: Mapping[str, float]
    kappa: float = 0.0
    noise: float = 0.0
    runs: int = 100
    seed: int = 0

    def __post_init__(self) -> None:
        if self.name not in ARCHETYPE_NAMES:
            raise ConfigError(f"unknown archetype {self.name!r}; "
                              f"expected one of {ARCHETYPE_NAMES}")
        needed = set(AXES) - {"E"}
        missing = needed - set(self.targets)
        if missing:
            raise ConfigError(f"archetype {self.name}: missing targets {sorted(missing)}")
        for ax, v in self.targets.items():
            if ax not in AXES:
                raise ConfigError(f"archetype {self.name}: unknown axis {ax!r}")
            if not 0.0 <= float(v) <= 1.0:
                raise ConfigError(f"archetype {self.name}: target {ax}={v} outside [0,1]")
        if self.kappa < 0:
            raise ConfigError("kappa target must be nonnegative")
        if self.noise < 0:
            raise ConfigError("noise scale must be nonnegative")
        if self.runs < 50:
            raise ConfigError("need at least 50 runs for the quantized layout")


def default_archetype_specs(noise: float = 0.0, runs: int = 100,
                            seed: int = 0) -> list[ArchetypeSpec]:
    """The four bundled profiles, seeded deterministically."""
    return [ArchetypeSpec(name=name, targets=dict(ARCHETYPE_PROFILES[name]),
                          kappa=ARCHETYPE_KAPPA[name], noise=noise,
                          runs=runs, seed=seed + 17 * i)
            for i, name in enumerate(ARCHETYPE_NAMES)]


# ---------------------------------------------------------------------------
# quantized planning
# ---------------------------------------------------------------------------

@dataclass
class _Plan:
    """Integer layout whose playback recovers the targets exactly."""

    n: int                      # runs
    a_hits: int                 # autonomy traces at the horizon cap
    p_hits: int                 # planning traces at the depth anchor
    w_wrong: int                # maximally wrong probability statements
    dollar_wins: int            # stamped traces clearing the win bar
    covered: int                # covered families, coordination host included
    tools_used: int             # required tool categories exercised
    repertoire: int             # total tool categories exercised
    hi_flex: int                # flexible traces placed in covered families
    fillers: int                # plain traces added to tune the success rate
    lift_quality: float         # multi-agent quality on the coordination task
    retention_rate: float       # designed decay rate per day
    recall_hits: int            # pooled recall numerator per family (of 100)
    revision_gain: float        # difference-in-differences of the one event

    @property
    def total_traces(self) -> int:
        return 36 + 11 * self.n + self.fillers

    @property
    def successes(self) -> int:
        return 16 + self.hi_flex


def _expected_axes(plan: _Plan, battery: Battery,
                   targets: Mapping[str, float]) -> dict[str, float]:
    """Closed-form axis values implied by the plan.

    Mirrors the estimators' arithmetic on the planned counts so a
    noiseless playback must reproduce these numbers bit for bit (the
    retention fit is the one component reproduced only to ~1e-9).
    """
    n = plan.n
    cov = plan.tools_used / len(_REQUIRED_TOOLS)
    succ = plan.successes / plan.total_traces
    size = min(1.0, math.log1p(plan.repertoire) / math.log1p(battery.size_prior_max))
    retention = math.exp(-plan.retention_rate / battery.lambda_max)
    recall = plan.recall_hits / 100
    lift = max(plan.lift_quality - TIER_PASS, 0.0) / (1.0 - TIER_PASS + _LIFT_EPS)
    brier = plan.w_wrong / (4 * n)
    # the revision gain is recovered from the event's pre/post readings,
    # so reconstruct it through the same differences
    if plan.revision_gain > 0:
        did = (((REVISION_PRE + plan.revision_gain) - REVISION_PRE)
               - (CONTROL_LEVEL - CONTROL_LEVEL))
    else:
        did = 0.0
    return {
        "A": plan.a_hits / n,
        "G": plan.covered / 100,
        "P": plan.p_hits / n,
        "M": (retention + recall) / 2.0,
        "T": (cov * succ * size) ** (1 / 3),
        "R": min(1.0, max(0.0, did / battery.revision_scale)),
        "S": min(1.0, lift),
        "W": 1.0 - min(1.0, brier / 0.25),
        "$": (plan.dollar_wins / SPAN_HOURS) / COST_PER_HOUR,
    }


def _tool_mix_search(target_t: float, n: int, covered: int,
                     battery: Battery) -> tuple[int, int, int, int]:
    """Pick (tools_used, repertoire, hi_flex, fillers) approximating the
    tool-axis target.

    The success rate is the only continuous dial, tuned by how many
    flexible traces land in covered families and by plain fillers; the
    discrete coverage and repertoire factors are searched exhaustively.
    """
    base_total = 36 + 11 * n
    flexible = 6 * n
    lo_min = 92 - covered  # uncovered general families each need a trace
    if lo_min < 0:
        raise ConfigError("coverage target exceeds the general family count")
    best = None
    for used in range(1, len(_REQUIRED_TOOLS) + 1):
        cov = used / len(_REQUIRED_TOOLS)
        for extra in range(len(_EXTRA_TOOLS) + 1):
            rep = used + extra
            size = min(1.0, math.log1p(rep) / math.log1p(battery.size_prior_max))
            for fillers in range(0, 201):
                total = base_total + fillers
                want = target_t ** 3 / (cov * size) * total - 16
                hi = min(max(int(round(want)), 0), flexible + fillers - lo_min)
                t_val = (cov * ((16 + hi) / total) * size) ** (1 / 3)
                err = abs(t_val - target_t)
                key = (err, fillers, used, rep)
                if best is None or key < best[0]:
                    best = (key, used, rep, hi, fillers)
    _, used, rep, hi, fillers = best
    return used, rep, hi, fillers


def _build_plan(spec: ArchetypeSpec, battery: Battery) -> _Plan:
    t = spec.targets
    n = spec.runs
    dollar_wins = round(SPAN_HOURS * COST_PER_HOUR * t["$"])
    if dollar_wins > 5 * n:
        raise ConfigError(f"archetype {spec.name}: runs={n} cannot host "
                          f"{dollar_wins} throughput wins; raise runs")
    covered = round(100 * t["G"])
    if covered < 1:
        raise ConfigError("coverage target below the generator floor of 1/100")
    if covered > 91:
        raise ConfigError("coverage target above the generator ceiling of 0.91")
    if not 0.01 <= t["M"] <= 0.99:
        raise ConfigError("retention target must lie in [0.01, 0.99]")
    if t["S"] > 0.99:
        raise ConfigError("coordination target must leave headroom below 1")
    tools_used, repertoire, hi_flex, fillers = _tool_mix_search(
        t["T"], n, covered, battery)
    plan = _Plan(
        n=n,
        a_hits=round(n * t["A"]),
        p_hits=round(n * t["P"]),
        w_wrong=round(n * (1.0 - t["W"])),
        dollar_wins=dollar_wins,
        covered=covered,
        tools_used=tools_used,
        repertoire=repertoire,
        hi_flex=hi_flex,
        fillers=fillers,
        lift_quality=TIER_PASS + t["S"] * (1.0 - TIER_PASS + _LIFT_EPS),
        retention_rate=-battery.lambda_max * math.log(t["M"]),
        recall_hits=round(100 * t["M"]),
        revision_gain=t["R"] * battery.revision_scale,
    )
    t_err = abs(_expected_axes(plan, battery, t)["T"] - t["T"])
    if t_err > 0.005:
        raise ConfigError(f"archetype {spec.name}: tool-axis target {t['T']} "
                          f"unreachable under the quantized layout (off by {t_err:.4f})")
    return plan


# ---------------------------------------------------------------------------
# trace materialization
# ---------------------------------------------------------------------------

class _Noise:
    """Truncated symmetric perturbations; inert at scale zero."""

    def __init__(self, scale: float, seed: int):
        self.scale = scale
        self.rng = np.random.default_rng(seed)

    def quality(self, q: float, lo: float = 0.0, hi: float = 1.0) -> float:
        if self.scale == 0.0:
            return q
        return float(min(hi, max(lo, q + self.rng.normal(0.0, self.scale))))

    def count(self, value: int, spread: float, cap: int) -> int:
        if self.scale == 0.0:
            return value
        jitter = self.rng.normal(0.0, self.scale) * spread
        return int(min(cap, max(0, round(value + jitter))))


def _generate_traces(spec: ArchetypeSpec, plan: _Plan, battery: Battery
                     ) -> list[EpisodeTrace]:
    noise = _Noise(spec.noise, spec.seed)
    schema_hash = battery.schema_hash()
    n = plan.n
    hi_fams = list(_GENERAL_FAMILIES[1:plan.covered])
    lo_fams = list(_GENERAL_FAMILIES[plan.covered:])
    used_tools = list(_REQUIRED_TOOLS[:plan.tools_used])
    used_tools += list(_EXTRA_TOOLS[:plan.repertoire - plan.tools_used])

    traces: list[EpisodeTrace] = []
    serial = 0

    def task_in(fam: str, idx: int) -> str:
        return f"{fam}-t{idx % 5}"

    def add(task_id: str, quality: float, **kw) -> None:
        nonlocal serial
        run = serial % 100
        traces.append(EpisodeTrace(
            task_id=task_id, quality=quality,
            seed_id=f"seed-{run:03d}", schema_hash=schema_hash,
            human_interventions=float(run % 11), **kw))
        serial += 1

    # coordination probe: one task, eight solo and eight paired episodes
    for _ in range(8):
        add(task_in("fam00", 0), noise.quality(TIER_PASS), concurrency=1)
    for _ in range(8):
        add(task_in("fam00", 0), noise.quality(plan.lift_quality), concurrency=2)

    # persistence families: retention decay plus pooled recall
    recall_left = plan.recall_hits
    hits = []
    for _ in RETENTION_LAGS:
        take = min(RECALL_TOTAL_PER_TRACE, recall_left)
        hits.append(take)
        recall_left -= take
    for fam in _MEM_FAMILIES:
        for j, lag in enumerate(RETENTION_LAGS):
            q = 0.9 * math.exp(-plan.retention_rate * lag)
            add(task_in(fam, j), noise.quality(q, lo=1e-4), lag_days=lag,
                recall_hits=noise.count(hits[j], RECALL_TOTAL_PER_TRACE,
                                        RECALL_TOTAL_PER_TRACE),
                recall_total=RECALL_TOTAL_PER_TRACE)

    # throughput window: stamped traces in the dedicated families; the
    # first and last timestamps pin the span exactly
    for i in range(5 * n):
        ts = _EPOCH_BASE + (72.0 * i if i < 5 * n - 1 else SPAN_HOURS * 3600.0)
        win = i < plan.dollar_wins
        add(task_in(_DOLLAR_FAMILIES[i % 4], i // 4),
            noise.quality(TIER_WIN if win else TIER_FAIL),
            timestamp=ts,
            tool_categories_used=frozenset({used_tools[i % len(used_tools)]}))

    # flexible traces: autonomy, planning, truthfulness, fillers; the
    # first hi_flex land in covered families at the passing tier
    flex: list[dict] = []
    for i in range(n):
        flex.append({"uninterrupted_actions": battery.horizon_cap if i < plan.a_hits else 0})
    for i in range(n):
        flex.append({"plan_depth": battery.depth_anchor if i < plan.p_hits else 0})
    # the calibration block doubles as the shifted-tool probe: each trace
    # carries one tool category and one drift tag, category blocks of four
    # so every category meets every tag
    for i in range(4 * n):
        y = i % 2
        wrong = i < plan.w_wrong
        flex.append({"stated_prob": float(1 - y if wrong else y), "truth": y,
                     "drift_tag": _DRIFT_CYCLE[i % 4],
                     "tool_categories_used": frozenset(
                         {used_tools[(i // 4) % len(used_tools)]})})
    flex.extend({} for _ in range(plan.fillers))

    for i, kw in enumerate(flex):
        if "uninterrupted_actions" in kw:
            kw["uninterrupted_actions"] = noise.count(
                kw["uninterrupted_actions"], battery.horizon_cap, battery.horizon_cap)
        if "plan_depth" in kw:
            kw["plan_depth"] = noise.count(
                kw["plan_depth"], battery.depth_anchor, battery.depth_anchor)
        if "stated_prob" in kw:
            kw["stated_prob"] = noise.quality(kw["stated_prob"])
        if i < plan.hi_flex:
            fam = hi_fams[i % len(hi_fams)] if hi_fams else _GENERAL_FAMILIES[0]
            tier = TIER_PASS
        else:
            fam = lo_fams[(i - plan.hi_flex) % len(lo_fams)]
            tier = TIER_FAIL
        add(task_in(fam, i), noise.quality(tier), **kw)

    placed = {battery.tasks[tr.task_id].family for tr in traces}
    empty = [f for f in battery.families if f not in placed]
    if empty:
        raise ConfigError(f"archetype {spec.name}: families without traces: {empty[:5]}; "
                          "the targets leave too few flexible traces")
    return traces


def _generate_slope_traces(spec: ArchetypeSpec, battery: Battery
                           ) -> list[EpisodeTrace]:
    """Daily improvement window: one unit of self-directed spend per day,
    capability climbing by the designed slope."""
    noise = _Noise(spec.noise, spec.seed + 1)
    schema_hash = battery.schema_hash()
    traces = []
    for day in range(SLOPE_DAYS):
        first = True
        for fam in SLOPE_FAMILIES:
            for j in range(5):
                q = SLOPE_BASELINE + spec.kappa * day
                traces.append(EpisodeTrace(
                    task_id=f"{fam}-t{j}", quality=noise.quality(q),
                    timestamp=_EPOCH_BASE + day * 86400.0 + j * 60.0,
                    cost=1.0 if first else 0.0,
                    seed_id=f"seed-{day:03d}", schema_hash=schema_hash))
                first = False
    return traces


def _generate_revisions(spec: ArchetypeSpec, plan: _Plan) -> list[RevisionEvent]:
    if spec.targets["R"] <= 0.0:
        return []
    pre = REVISION_PRE
    post = pre + plan.revision_gain
    return [RevisionEvent(
        event_id=f"{spec.name}-rev-0", window_id="w0",
        c_rev_pre=pre, c_rev_post=post,
        c_ctrl_pre=CONTROL_LEVEL, c_ctrl_post=CONTROL_LEVEL,
        stage_autonomy=(1.0, 1.0, 1.0),
        ablation_result=pre, change_kind="tool-integration")]


# ---------------------------------------------------------------------------
# archetype simulation entry point
# ---------------------------------------------------------------------------

def trace_to_record(tr: EpisodeTrace) -> dict:
    """JSON-serializable record; inverse of the trace loader's parsing."""
    rec: dict = {"task_id": tr.task_id, "quality": tr.quality}
    for name in ("seed_id", "drift_tag", "uninterrupted_actions", "plan_depth",
                 "cost", "timestamp", "human_interventions", "concurrency",
                 "comm_tokens", "verified_actions", "lag_days", "stated_prob",
                 "truth", "incident_counts", "exposure_hours",
                 "recovered_faults", "total_faults", "control_quality",
                 "recall_hits", "recall_total", "repair_hours", "schema_hash"):
        val = getattr(tr, name)
        if val is not None:
            rec[name] = val
    if tr.sim_flag:
        rec["sim_flag"] = True
    if tr.tool_categories_used:
        rec["tool_categories_used"] = sorted(tr.tool_categories_used)
    if tr.episode_flags is not None:
        rec["episode_flags"] = {k: v for k, v in vars(tr.episode_flags).items()
                                if v is not None}
    return rec


def write_traces_jsonl(traces: Sequence[EpisodeTrace], path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for tr in traces:
            fh.write(json.dumps(trace_to_record(tr), sort_keys=True) + "\n")


def revision_to_record(ev: RevisionEvent) -> dict:
    """JSON-serializable record; inverse of the revision-event loader."""
    rec: dict = {
        "event_id": ev.event_id, "window_id": ev.window_id,
        "c_rev_pre": ev.c_rev_pre, "c_rev_post": ev.c_rev_post,
        "c_ctrl_pre": ev.c_ctrl_pre, "c_ctrl_post": ev.c_ctrl_post,
        "stage_autonomy": list(ev.stage_autonomy),
        "change_kind": ev.change_kind,
    }
    if ev.ablation_result is not None:
        rec["ablation_result"] = ev.ablation_result
    if ev.artifacts:
        rec["artifacts"] = dict(ev.artifacts)
    if ev.holdout_mismatch:
        rec["holdout_mismatch"] = True
    return rec


def write_revisions_jsonl(events: Sequence[RevisionEvent],
                          path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ev in events:
            fh.write(json.dumps(revision_to_record(ev), sort_keys=True) + "\n")


@dataclass
class ArchetypeRun:
    """One archetype's synthetic evidence plus both sides of the check."""

    spec: ArchetypeSpec
    traces: list[EpisodeTrace]
    slope_traces: list[EpisodeTrace]
    revision_events: list[RevisionEvent]
    expected: dict[str, float]
    estimated: dict[str, AxisResult]
    composite: CompositeResult
    kappa_hat: KappaEstimate
    maintenance: Optional[dict]
    expansion: Optional[ExpansionEvidence]
    plan_summary: dict

    @property
    def estimated_values(self) -> dict[str, Optional[float]]:
        return {ax: res.value for ax, res in self.estimated.items()}

    def to_json(self) -> dict:
        return {
            "archetype": self.spec.name,
            "noise": self.spec.noise,
            "runs": self.spec.runs,
            "seed": self.spec.seed,
            "expected": self.expected,
            "estimated": {ax: r.to_json() for ax, r in self.estimated.items()},
            "composite": self.composite.to_json(),
            "kappa": self.kappa_hat.to_json(),
            "kappa_target": self.spec.kappa,
            "plan": self.plan_summary,
        }


def closure_evidence_doc(run: "ArchetypeRun") -> Optional[dict]:
    """Maintenance / expansion evidence in the on-disk closure format."""
    doc: dict = {}
    if run.maintenance is not None:
        doc["maintenance"] = {
            **{k: v for k, v in run.maintenance.items() if k != "rows"},
            "rows": [list(r) for r in run.maintenance["rows"]],
        }
    if run.expansion is not None:
        e = run.expansion
        doc["expansion"] = {
            "did_delta": e.did_delta, "did_ci": list(e.did_ci),
            "composite_pre": e.composite_pre,
            "composite_ablated": e.composite_ablated,
            "did_on_ablated": e.did_on_ablated, "epsilon": 0.01,
        }
    return doc or None


def write_archetype_dir(run: "ArchetypeRun", out_dir: Union[str, Path]) -> list[str]:
    """Write one archetype's evidence pool as a system input directory.

    Always writes ``traces.jsonl``; adds ``slope.jsonl``,
    ``revisions.jsonl``, and ``closures.json`` when the run carries that
    evidence. Returns the file names written, in order.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_traces_jsonl(run.traces, out / "traces.jsonl")
    written = ["traces.jsonl"]
    if run.slope_traces:
        write_traces_jsonl(run.slope_traces, out / "slope.jsonl")
        written.append("slope.jsonl")
    if run.revision_events:
        write_revisions_jsonl(run.revision_events, out / "revisions.jsonl")
        written.append("revisions.jsonl")
    closures = closure_evidence_doc(run)
    if closures is not None:
        with open(out / "closures.json", "w", encoding="utf-8") as fh:
            json.dump(closures, fh, indent=1, sort_keys=True)
            fh.write("\n")
        written.append("closures.json")
    return written


@dataclass
class SimulationResult:
    battery: Battery
    runs: list[ArchetypeRun]

    def table(self) -> list[dict]:
        """One row per archetype: expected and estimated axes, both
        zero-policy composites, and the slope estimate."""
        rows = []
        for run in self.runs:
            rows.append({
                "archetype": run.spec.name,
                "expected": dict(run.expected),
                "estimated": run.estimated_values,
                "index_strict": run.composite.strict_index,
                "index_floor": run.composite.floor_index,
                "kappa": run.kappa_hat.point,
                "kappa_ci": run.kappa_hat.ci,
            })
        return rows


def simulate_archetypes(specs: Sequence[ArchetypeSpec],
                        battery: Optional[Battery] = None,
                        kappa_plan: Optional[ResamplePlan] = None
                        ) -> SimulationResult:
    """Generate the archetype pool and verify it through the estimators.

    Each run carries the construction-side expected table alongside the
    values the real pipeline recovers from the emitted traces. With the
    noise scale at zero the two agree to float precision.
    """
    if battery is None:
        battery = archetype_battery()
    elif battery.to_config() != archetype_battery().to_config():
        raise ConfigError("battery layout differs from archetype_battery(); "
                          "the quantized generator needs its exact structure")
    if kappa_plan is None:
        kappa_plan = ResamplePlan(mode="block", replicates=200, seed=7)

    runs = []
    for spec in specs:
        plan = _build_plan(spec, battery)
        traces = _generate_traces(spec, plan, battery)
        slope_traces = _generate_slope_traces(spec, battery)
        revisions = _generate_revisions(spec, plan)
        expected = _expected_axes(plan, battery, spec.targets)

        estimated = estimate_axes(
            battery, traces, revisions,
            reference_predictor={"default": 0.5},
            quality_star=QUALITY_STAR, cost_per_hour=COST_PER_HOUR)
        composite = compute_composite(estimated, battery.weights,
                                      zero_policy="strict",
                                      weight_preset=battery.weight_preset)
        series = checkpoints_from_traces(slope_traces, battery)
        kappa_hat = kappa_estimate(series, plan=kappa_plan)

        maintenance = None
        expansion = None
        if spec.kappa > 0:
            drop = [1.0, 0.98, 0.96, 0.97, 0.99, 0.95, 0.96]
            maintenance = {
                "baseline": 0.60, "alpha": 0.86, "days": 7,
                "rows": [(d + 1, 0.60 * drop[d]) for d in range(7)],
            }
        if revisions:
            ev = revisions[0]
            gain = plan.revision_gain
            expansion = ExpansionEvidence(
                did_delta=gain, did_ci=(0.8 * gain, 1.2 * gain),
                composite_pre=ev.c_rev_pre, composite_ablated=ev.ablation_result,
                did_on_ablated=0.0)

        runs.append(ArchetypeRun(
            spec=spec, traces=traces, slope_traces=slope_traces,
            revision_events=revisions, expected=expected, estimated=estimated,
            composite=composite, kappa_hat=kappa_hat,
            maintenance=maintenance, expansion=expansion,
            plan_summary={
                "traces": plan.total_traces,
                "successes": plan.successes,
                "covered_families": plan.covered,
                "tools_used": plan.tools_used,
                "repertoire": plan.repertoire,
                "fillers": plan.fillers,
            }))
    return SimulationResult(battery=battery, runs=runs)


# ---------------------------------------------------------------------------
# progression dynamics
# ---------------------------------------------------------------------------

_LEVEL5_FLOORS = {"S": 0.9, "W": 0.9, "$": 0.9}


@dataclass(frozen=True)
class ProgressionSpec:
    """Growth-law and responsiveness constants for the level progression.

    The normalized rate obeys d(rate)/dR = a * (1 - rate)^beta; axes
    grow along rho4 until the level-4 row and along rho5 until the
    level-5 floors; per-family superhuman margins grow along mu. The
    capability coupling inverts the rate normalizer and integrates the
    raw slope, clipped inside the open unit interval.
    """

    a: float = 0.5
    beta: float = 0.5
    normalizer: str = "mm"
    normalizer_scale: float = 0.01
    r_min: float = 1.0
    rho4: Union[float, Mapping[str, float]] = 0.02
    rho5: Union[float, Mapping[str, float]] = 0.02
    mu: Sequence[float] = (0.15, 0.2, 0.25, 0.3, 0.5)
    margins0: Sequence[float] = (-2.0, -2.0, -1.5, -1.0, -1.0)
    kappa_bar0: float = 0.0
    c0: float = 0.78
    axes0: Optional[Mapping[str, float]] = None
    gate_config: GateConfig = field(default_factory=lambda: GateConfig(kappa_star=0.005))
    step_delta: float = 1.0
    step_size: float = 0.001
    r_budget: float = 50.0

    def __post_init__(self) -> None:
        if self.a <= 0:
            raise ConfigError("growth coefficient a must be positive")
        if not 0.0 < self.beta < 1.0:
            raise ConfigError("gap exponent beta must lie strictly inside (0,1)")
        if self.normalizer not in ("mm", "logistic"):
            raise ConfigError(f"unknown normalizer {self.normalizer!r}")
        if self.normalizer_scale <= 0:
            raise ConfigError("normalizer scale must be positive")
        if self.r_min <= 0:
            raise ConfigError("resource-rate floor must be positive")
        if not 0.0 <= self.kappa_bar0 < 1.0:
            raise ConfigError("initial normalized rate must lie in [0,1)")
        if not 0.0 < self.c0 < 1.0:
            raise ConfigError("initial capability must lie in (0,1)")
        if len(self.mu) != len(self.margins0):
            raise ConfigError("margin growth rates and starting margins must align")
        if any(m < 0 for m in self.mu):
            raise ConfigError("margin growth rates must be nonnegative")
        for rho in (self.rho4, self.rho5):
            vals = rho.values() if isinstance(rho, Mapping) else [rho]
            if any(v < 0 for v in vals):
                raise ConfigError("axis responsiveness slopes must be nonnegative")
        if self.step_size <= 0 or self.step_size > self.r_budget:
            raise ConfigError("step size must be positive and below the budget")
        if self.step_delta <= 0:
            raise ConfigError("link step must be positive")
        if self.axes0 is not None:
            for ax, v in self.axes0.items():
                if not 0.0 <= v <= 1.0:
                    raise ConfigError(f"initial axis {ax}={v} outside [0,1]")

    def rho_for(self, axis: str, level: int) -> float:
        rho = self.rho4 if level == 4 else self.rho5
        if isinstance(rho, Mapping):
            if axis not in rho:
                raise ConfigError(f"no responsiveness slope for axis {axis!r}")
            return float(rho[axis])
        return float(rho)

    def start_axes(self) -> dict[str, float]:
        if self.axes0 is not None:
            return dict(self.axes0)
        return dict(DEFAULT_THRESHOLDS[3])


def rate_escape_resource(a: float, beta: float, kappa_bar0: float,
                         kappa_bar_target: float) -> float:
    """Resource needed for the growth law to lift the normalized rate to
    the target, integrating the gap ODE in closed form."""
    if a <= 0 or not 0.0 < beta < 1.0:
        raise ConfigError("need a > 0 and beta strictly inside (0,1)")
    if not 0.0 <= kappa_bar0 <= kappa_bar_target < 1.0:
        raise ConfigError("targets must satisfy 0 <= start <= target < 1")
    u0 = 1.0 - kappa_bar0
    ut = 1.0 - kappa_bar_target
    return (u0 ** (1.0 - beta) - ut ** (1.0 - beta)) / ((1.0 - beta) * a)


def _psi(kappa: float, spec: ProgressionSpec) -> float:
    if spec.normalizer == "mm":
        return kappa / (kappa + spec.normalizer_scale)
    return 1.0 / (1.0 + math.exp(-kappa / spec.normalizer_scale))


def _psi_inverse(kappa_bar: float, spec: ProgressionSpec) -> float:
    kb = min(max(kappa_bar, 1e-15), 1.0 - 1e-15)
    if spec.normalizer == "mm":
        return spec.normalizer_scale * kb / (1.0 - kb)
    return spec.normalizer_scale * math.log(kb / (1.0 - kb))


@dataclass
class _AxisPath:
    """Piecewise-linear axis trajectory with exact crossing times."""

    x0: float
    theta4: float
    theta5: float
    rho4: float
    rho5: float

    def __post_init__(self) -> None:
        self.t4 = 0.0 if self.x0 >= self.theta4 else (
            (self.theta4 - self.x0) / self.rho4 if self.rho4 > 0 else math.inf)
        start5 = max(self.x0, self.theta4) if math.isfinite(self.t4) else self.x0
        if start5 >= self.theta5:
            self.t5 = self.t4
        elif not math.isfinite(self.t4) or self.rho5 <= 0:
            self.t5 = math.inf
        else:
            self.t5 = self.t4 + (self.theta5 - start5) / self.rho5

    def values(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if not math.isfinite(self.t4):
            return np.minimum(self.x0 + self.rho4 * r, self.theta4)
        start5 = max(self.x0, self.theta4)
        cap = max(self.theta5, self.x0)
        phase1 = np.minimum(self.x0 + self.rho4 * r, self.theta4)
        phase2 = np.minimum(start5 + self.rho5 * (r - self.t4), cap)
        return np.where(r < self.t4, phase1, phase2)


@dataclass
class ProgressionResult:
    """Dense trajectory, gate timeline, and transition resources."""

    spec: ProgressionSpec
    r: np.ndarray
    kappa_bar: np.ndarray
    kappa: np.ndarray
    capability: np.ndarray
    axes: dict[str, np.ndarray]
    margins: np.ndarray  # families x steps
    gate_bits: dict[str, np.ndarray]
    crossings: dict[str, dict[str, float]]
    r4: Optional[float]
    r5: Optional[float]
    diagnostics: Optional[str]

    @property
    def t4(self) -> Optional[float]:
        return None if self.r4 is None else self.r4 / self.spec.r_min

    @property
    def t5(self) -> Optional[float]:
        return None if self.r5 is None else self.r5 / self.spec.r_min

    def kappa_bar_crossing(self, target: float) -> Optional[float]:
        """First resource point at which the normalized rate reaches the
        target, linearly interpolated between integration nodes."""
        idx = np.nonzero(self.kappa_bar >= target)[0]
        if idx.size == 0:
            return None
        i = int(idx[0])
        if i == 0:
            return float(self.r[0])
        k0, k1 = self.kappa_bar[i - 1], self.kappa_bar[i]
        frac = (target - k0) / (k1 - k0) if k1 > k0 else 0.0
        return float(self.r[i - 1] + frac * (self.r[i] - self.r[i - 1]))

    def to_json(self) -> dict:
        return {
            "r4": self.r4, "r5": self.r5,
            "t4": self.t4, "t5": self.t5,
            "diagnostics": self.diagnostics,
            "crossings": self.crossings,
            "steps": int(self.r.size),
            "budget": self.spec.r_budget,
        }

    def write_csv(self, path: Union[str, Path], max_rows: int = 2000) -> None:
        """Downsampled trajectory with the per-step gate bits."""
        stride = max(1, int(math.ceil(self.r.size / max_rows)))
        keep = sorted(set(range(0, self.r.size, stride)) | {self.r.size - 1})
        names = sorted(self.axes)
        bits = sorted(self.gate_bits)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(["r", "kappa_bar", "kappa", "capability"]
                              + [f"axis_{a}" for a in names]
                              + ["margin_min"] + bits) + "\n")
            for i in keep:
                row = [f"{self.r[i]:.6f}", f"{self.kappa_bar[i]:.9f}",
                       f"{self.kappa[i]:.6g}", f"{self.capability[i]:.9f}"]
                row += [f"{self.axes[a][i]:.6f}" for a in names]
                row += [f"{self.margins[:, i].min():.6f}"]
                row += [str(int(self.gate_bits[b][i])) for b in bits]
                fh.write(",".join(row) + "\n")


def _margin_crossing(margins0: Sequence[float], mu: Sequence[float],
                     target: float) -> Optional[float]:
    """Resource at which the slowest margin reaches the target; None when
    a short margin has no growth."""
    worst = 0.0
    for m0, g in zip(margins0, mu):
        if m0 >= target:
            continue
        if g <= 0:
            return None
        worst = max(worst, (target - m0) / g)
    return worst


def _first_true(r: np.ndarray, flags: np.ndarray,
                values: Optional[np.ndarray] = None,
                target: Optional[float] = None) -> Optional[float]:
    """First resource point where a monotone condition holds; linear
    interpolation against the underlying values when they are given."""
    idx = np.nonzero(flags)[0]
    if idx.size == 0:
        return None
    i = int(idx[0])
    if i == 0 or values is None or target is None:
        return float(r[i])
    v0, v1 = values[i - 1], values[i]
    if v1 <= v0:
        return float(r[i])
    frac = (target - v0) / (v1 - v0)
    return float(r[i - 1] + min(max(frac, 0.0), 1.0) * (r[i] - r[i - 1]))


def simulate_progression(spec: ProgressionSpec) -> ProgressionResult:
    """Integrate the growth law and report the level-4/5 transitions.

    The gap variable u = 1 - rate is advanced with classical
    fourth-order steps; capability integrates the inverted normalizer
    alongside. Axes and margins follow their responsiveness slopes
    exactly. Transitions are the first resource points where every gate
    in the corresponding set holds; unmet sets inside the budget yield
    a "budget exceeded" diagnostic instead of an error.
    """
    h = spec.step_size
    steps = int(math.ceil(spec.r_budget / h))
    r = np.empty(steps + 1)
    u_arr = np.empty(steps + 1)
    c_arr = np.empty(steps + 1)

    def du(u: float) -> float:
        return -spec.a * max(u, 0.0) ** spec.beta

    def dc(u: float) -> float:
        return _psi_inverse(1.0 - u, spec)

    u = 1.0 - spec.kappa_bar0
    c = spec.c0
    r[0], u_arr[0], c_arr[0] = 0.0, u, c
    for i in range(1, steps + 1):
        k1u, k1c = du(u), dc(u)
        u2 = max(u + 0.5 * h * k1u, 0.0)
        k2u, k2c = du(u2), dc(u2)
        u3 = max(u + 0.5 * h * k2u, 0.0)
        k3u, k3c = du(u3), dc(u3)
        u4 = max(u + h * k3u, 0.0)
        k4u, k4c = du(u4), dc(u4)
        u = max(u + h / 6.0 * (k1u + 2 * k2u + 2 * k3u + k4u), 0.0)
        c = c + h / 6.0 * (k1c + 2 * k2c + 2 * k3c + k4c)
        c = min(max(c, C_CLAMP), 1.0 - C_CLAMP)
        r[i], u_arr[i], c_arr[i] = i * h, u, c

    kappa_bar = 1.0 - u_arr
    kappa = np.array([_psi_inverse(kb, spec) for kb in kappa_bar])

    config = spec.gate_config
    thresholds4 = config.thresholds[4]
    axes0 = spec.start_axes()
    paths: dict[str, _AxisPath] = {}
    for axis, x0 in axes0.items():
        theta4 = thresholds4.get(axis, x0)
        theta5 = max(theta4, _LEVEL5_FLOORS.get(axis, theta4))
        paths[axis] = _AxisPath(x0=x0, theta4=theta4, theta5=theta5,
                                rho4=spec.rho_for(axis, 4),
                                rho5=spec.rho_for(axis, 5))
    axes_vals = {axis: p.values(r) for axis, p in paths.items()}

    margins = np.vstack([m0 + mu * r for m0, mu in zip(spec.margins0, spec.mu)])
    zeta = config.superhuman_zeta

    # level-4 gate set
    kbar_star = _psi(config.kappa_star, spec)
    target4 = step_operator(step_operator(spec.c0, config.step_link, spec.step_delta),
                            config.step_link, spec.step_delta)
    axes4_ok = np.all([axes_vals[a] >= thresholds4[a] - 1e-12
                       for a in thresholds4 if a in axes_vals], axis=0)
    rate_ok = kappa_bar >= kbar_star
    parity_ok = np.all(margins >= 0.0, axis=0)
    step4_ok = c_arr >= target4

    cross4 = {
        "axes": max((paths[a].t4 for a in thresholds4 if a in paths), default=0.0),
        "rate": _first_true(r, rate_ok, kappa_bar, kbar_star),
        "parity": _margin_crossing(spec.margins0, spec.mu, 0.0),
        "capability_step": _first_true(r, step4_ok, c_arr, target4),
    }
    bits4 = axes4_ok & rate_ok & parity_ok & step4_ok

    unmet4 = [name for name, val in cross4.items()
              if val is None or not math.isfinite(val) or val > spec.r_budget]
    r4 = None if unmet4 else max(v for v in cross4.values())

    # level-5 gate set: axis floors, superhuman margins, a second
    # double-step from the level-4 capability
    cross5: dict[str, Optional[float]] = {}
    floors5_ok = np.all([axes_vals[a] >= _LEVEL5_FLOORS[a] - 1e-12
                         for a in _LEVEL5_FLOORS if a in axes_vals], axis=0)
    margins5_ok = np.all(margins >= zeta, axis=0)
    if r4 is not None:
        c_at_r4 = float(np.interp(r4, r, c_arr))
        target5 = step_operator(step_operator(c_at_r4, config.step_link,
                                              spec.step_delta),
                                config.step_link, spec.step_delta)
        step5_ok = c_arr >= target5
        cross5 = {
            "axes_floors": max((paths[a].t5 for a in _LEVEL5_FLOORS if a in paths),
                               default=0.0),
            "margins": _margin_crossing(spec.margins0, spec.mu, zeta),
            "capability_step": _first_true(r, step5_ok, c_arr, target5),
        }
        bits5 = floors5_ok & margins5_ok & step5_ok
    else:
        step5_ok = np.zeros_like(step4_ok)
        bits5 = np.zeros_like(bits4)

    unmet5 = [name for name, val in cross5.items()
              if val is None or not math.isfinite(val) or val > spec.r_budget]
    r5 = None
    if r4 is not None and not unmet5:
        r5 = max(r4, *[v for v in cross5.values()])

    diagnostics = None
    if r4 is None:
        diagnostics = ("budget exceeded before the level-4 gates held: "
                       + ", ".join(sorted(unmet4)))
    elif r5 is None:
        diagnostics = ("budget exceeded before the level-5 gates held: "
                       + ", ".join(sorted(unmet5)))

    return ProgressionResult(
        spec=spec, r=r, kappa_bar=kappa_bar, kappa=kappa, capability=c_arr,
        axes=axes_vals, margins=margins,
        gate_bits={"level4_axes": axes4_ok, "level4_rate": rate_ok,
                   "level4_parity": parity_ok, "level4_step": step4_ok,
                   "level4_all": bits4,
                   "level5_floors": floors5_ok, "level5_margins": margins5_ok,
                   "level5_step": step5_ok, "level5_all": bits5},
        crossings={"level4": cross4, "level5": cross5},
        r4=r4, r5=r5, diagnostics=diagnostics)
