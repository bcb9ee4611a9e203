"""Battery tuple, trace data model, JSONL ingestion, and admissibility checks.

The battery is the static evaluation contract: tasks partitioned into
families, per-task quality targets, family coverage thresholds, a drift
catalog, a resource schema, calibration anchors, and axis weights.
Traces are one JSON object per line with field names matching
EpisodeTrace; unknown fields are ignored with a warning. Missing
optional fields stay absent (never silently zero): estimators skip
absent-field traces and record the effective sample size.
"""
from __future__ import annotations

import datetime as _dt
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence, Union

from .errors import ConfigError, MeterError

log = logging.getLogger(__name__)

AXES = ("A", "G", "P", "M", "T", "R", "S", "E", "W", "$")

# Weight presets. "software" folds E's weight into P/M/T; "robotics"
# boosts E and the physical-skill axes. Zero weight means the axis is
# excluded from the composite.
WEIGHT_PRESETS: dict[str, dict[str, float]] = {
    "default": {"A": 1.0, "G": 1.0, "P": 1.0, "M": 1.0, "T": 1.0,
                "R": 1.5, "S": 1.0, "E": 0.5, "W": 1.0, "$": 1.0},
    "software": {"A": 1.0, "G": 1.0, "P": 1.25, "M": 1.25, "T": 1.25,
                 "R": 1.5, "S": 1.0, "E": 0.0, "W": 1.0, "$": 1.0},
    "robotics": {"A": 1.0, "G": 1.0, "P": 1.1, "M": 1.0, "T": 1.1,
                 "R": 1.5, "S": 1.0, "E": 1.25, "W": 1.0, "$": 1.0},
}


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DriftTag:
    name: str
    magnitude: float


@dataclass(frozen=True)
class TaskSpec:
    task_id: str
    family: str
    quality_target: float
    required_tools: frozenset[str] = frozenset()


@dataclass(frozen=True)
class EpisodeFlags:
    """Coordination pathology flags; None means the flag was not logged."""

    unresolved_conflict: Optional[bool] = None
    loop: Optional[bool] = None
    chatter: Optional[bool] = None
    mode_collapse: Optional[bool] = None


@dataclass
class EpisodeTrace:
    """One evaluation run's observables.

    Only task_id and quality are mandatory; every other field is
    optional and stays None when absent from the record.
    """

    task_id: str
    quality: float
    seed_id: Optional[str] = None
    drift_tag: Optional[str] = None
    uninterrupted_actions: Optional[int] = None
    plan_depth: Optional[int] = None
    cost: Optional[float] = None
    timestamp: Optional[float] = None  # epoch seconds
    human_interventions: Optional[float] = None
    concurrency: Optional[int] = None
    comm_tokens: Optional[int] = None
    verified_actions: Optional[int] = None
    episode_flags: Optional[EpisodeFlags] = None
    lag_days: Optional[float] = None
    stated_prob: Optional[float] = None
    truth: Optional[int] = None
    incident_counts: Optional[dict[str, int]] = None  # keys: nm, min, maj, crit
    exposure_hours: Optional[float] = None
    sim_flag: bool = False
    tool_categories_used: frozenset[str] = frozenset()
    recovered_faults: Optional[int] = None
    total_faults: Optional[int] = None
    # engine-recognized optional columns
    control_quality: Optional[float] = None
    recall_hits: Optional[int] = None
    recall_total: Optional[int] = None
    repair_hours: Optional[float] = None
    schema_hash: Optional[str] = None


@dataclass
class RevisionEvent:
    """A self-revision episode with matched-holdout capability readings."""

    event_id: str
    window_id: str
    c_rev_pre: float
    c_rev_post: float
    c_ctrl_pre: Optional[float]
    c_ctrl_post: Optional[float]
    stage_autonomy: tuple[float, float, float] = (0.0, 0.0, 0.0)
    ablation_result: Optional[float] = None
    change_kind: str = "patch"
    artifacts: dict = field(default_factory=dict)
    holdout_mismatch: bool = False

    def __post_init__(self) -> None:
        caps = [self.c_rev_pre, self.c_rev_post, self.c_ctrl_pre,
                self.c_ctrl_post, self.ablation_result]
        for v in caps:
            if v is not None and not 0.0 <= v <= 1.0:
                raise ConfigError(f"revision event {self.event_id}: capability {v} outside [0,1]")
        for a in self.stage_autonomy:
            if not 0.0 <= a <= 1.0:
                raise ConfigError(f"revision event {self.event_id}: stage autonomy outside [0,1]")


@dataclass
class ResourceLedger:
    """Ordered (timestamp, event-kind, quantity) spend records."""

    records: list[tuple[float, str, float]]

    def __post_init__(self) -> None:
        ts = [r[0] for r in self.records]
        if ts != sorted(ts):
            raise ConfigError("resource ledger records must be time-ordered")
        if any(r[2] < 0 for r in self.records):
            raise ConfigError("resource quantities must be nonnegative")

    def cumulative(self, t: float, schema: Mapping[str, float]) -> float:
        """R(t): total spend at or before t under the unit-cost schema."""
        total = 0.0
        for ts, kind, qty in self.records:
            if ts > t:
                break
            if kind not in schema:
                raise ConfigError(f"ledger event kind {kind!r} missing from resource schema")
            total += schema[kind] * qty
        return total


@dataclass
class Battery:
    tasks: dict[str, TaskSpec]
    family_thresholds: dict[str, float]
    drift_catalog: list[DriftTag]
    resource_schema: dict[str, float]
    anchors: dict[str, tuple[float, float]]
    weights: dict[str, float]
    min_family_size: int = 5
    seed_manifest: list[str] = field(default_factory=list)
    horizon_cap: int = 100
    depth_anchor: int = 100
    lambda_max: float = 0.0231  # per day
    recall_k: int = 5
    size_prior_max: float = 8.0
    revision_scale: float = 0.10
    stage_weights: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)
    comm_penalty_weights: tuple[float, float] = (0.25, 0.25)
    loop_thresholds: tuple[int, int] = (3, 3)
    ss_severity_weights: tuple[float, float, float, float] = (0.25, 1.0, 5.0, 20.0)
    proper_scoring_declared: bool = False
    weight_preset: str = "custom"

    @property
    def families(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {}
        for t in self.tasks.values():
            out.setdefault(t.family, []).append(t.task_id)
        return out

    def drift_magnitude(self, tag: Optional[str]) -> Optional[float]:
        if tag is None:
            return None
        for d in self.drift_catalog:
            if d.name == tag:
                return d.magnitude
        return None

    def schema_hash(self) -> str:
        return resource_schema_hash(self.resource_schema)

    def to_config(self) -> dict:
        """Plain-dict form; load_battery(to_config()) round-trips."""
        return {
            "tasks": [
                {"id": t.task_id, "family": t.family,
                 "quality_target": t.quality_target,
                 "required_tools": sorted(t.required_tools)}
                for t in sorted(self.tasks.values(), key=lambda t: t.task_id)
            ],
            "family_thresholds": dict(sorted(self.family_thresholds.items())),
            "drift_catalog": [{"name": d.name, "magnitude": d.magnitude}
                              for d in self.drift_catalog],
            "resource_schema": dict(sorted(self.resource_schema.items())),
            "anchors": {k: list(v) for k, v in sorted(self.anchors.items())},
            "weights": dict(sorted(self.weights.items())),
            "weight_preset": self.weight_preset,
            "min_family_size": self.min_family_size,
            "seed_manifest": list(self.seed_manifest),
            "horizon_cap": self.horizon_cap,
            "depth_anchor": self.depth_anchor,
            "lambda_max": self.lambda_max,
            "recall_k": self.recall_k,
            "size_prior_max": self.size_prior_max,
            "revision_scale": self.revision_scale,
            "stage_weights": list(self.stage_weights),
            "comm_penalty_weights": list(self.comm_penalty_weights),
            "loop_thresholds": list(self.loop_thresholds),
            "ss_severity_weights": list(self.ss_severity_weights),
            "proper_scoring_declared": self.proper_scoring_declared,
        }


@dataclass
class FamilyAggregate:
    family: str
    mean_quality: Optional[float]
    covered: Optional[bool]
    count: int

    @property
    def has_data(self) -> bool:
        return self.count > 0


# ---------------------------------------------------------------------------
# loading and validation
# ---------------------------------------------------------------------------

def resource_schema_hash(schema: Mapping[str, float]) -> str:
    """SHA-256 of the canonically serialized resource schema."""
    canonical = json.dumps({k: schema[k] for k in sorted(schema)},
                           sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _read_config_document(path: Union[str, Path]) -> dict:
    p = Path(path)
    text = p.read_bytes()
    if p.suffix.lower() == ".toml":
        try:
            import tomllib  # type: ignore[import-not-found]
        except ModuleNotFoundError:
            import tomli as tomllib  # type: ignore[no-redef]
        return tomllib.loads(text.decode("utf-8"))
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed config document {p}: {exc}") from exc


def load_battery(source: Union[str, Path, Mapping]) -> Battery:
    """Build and validate a Battery from a config document (JSON/TOML) or dict."""
    doc = dict(source) if isinstance(source, Mapping) else _read_config_document(source)

    raw_tasks = doc.get("tasks")
    if not raw_tasks:
        raise ConfigError("battery config needs a nonempty 'tasks' list")
    tasks: dict[str, TaskSpec] = {}
    for entry in raw_tasks:
        tid = str(entry["id"])
        if tid in tasks:
            raise ConfigError(f"duplicate task id {tid!r}")
        q_star = float(entry["quality_target"])
        if not 0.0 < q_star < 1.0:
            raise ConfigError(f"task {tid!r}: quality target {q_star} outside (0,1)")
        tasks[tid] = TaskSpec(
            task_id=tid,
            family=str(entry["family"]),
            quality_target=q_star,
            required_tools=frozenset(entry.get("required_tools", ())),
        )

    thresholds = {str(k): float(v) for k, v in doc.get("family_thresholds", {}).items()}
    families: dict[str, list[str]] = {}
    for t in tasks.values():
        families.setdefault(t.family, []).append(t.task_id)
    for fam in families:
        if fam not in thresholds:
            raise ConfigError(f"family {fam!r} has no coverage threshold")
    for fam, tau in thresholds.items():
        if fam not in families:
            raise ConfigError(f"threshold given for unknown family {fam!r}")
        if not 0.0 < tau < 1.0:
            raise ConfigError(f"family {fam!r}: threshold {tau} outside (0,1)")

    m_min = int(doc.get("min_family_size", 5))
    if m_min < 5:
        raise ConfigError("min_family_size must be at least 5")
    for fam, members in families.items():
        if len(members) < m_min:
            raise ConfigError(f"family too small: {fam!r} has {len(members)} tasks, needs {m_min}")

    anchors: dict[str, tuple[float, float]] = {}
    raw_anchors = doc.get("anchors", {})
    for axis in AXES:
        lo, hi = raw_anchors.get(axis, (0.0, 1.0))
        lo, hi = float(lo), float(hi)
        if lo >= hi:
            raise ConfigError(f"degenerate anchor for axis {axis}: ({lo}, {hi})")
        anchors[axis] = (lo, hi)
    for axis in raw_anchors:
        if axis not in AXES:
            raise ConfigError(f"anchor given for unknown axis {axis!r}")

    preset = doc.get("weight_preset")
    if "weights" in doc:
        weights = {str(k): float(v) for k, v in doc["weights"].items()}
        preset_name = preset or "custom"
    elif preset:
        if preset not in WEIGHT_PRESETS:
            raise ConfigError(f"unknown weight preset {preset!r}")
        weights = dict(WEIGHT_PRESETS[preset])
        preset_name = preset
    else:
        weights = dict(WEIGHT_PRESETS["default"])
        preset_name = "default"
    for axis, w in weights.items():
        if axis not in AXES:
            raise ConfigError(f"weight given for unknown axis {axis!r}")
        if w < 0:
            raise ConfigError(f"axis {axis}: weight must be nonnegative (0 excludes the axis)")

    drift = [DriftTag(str(d["name"]), float(d["magnitude"]))
             for d in doc.get("drift_catalog", [])]
    if len({d.name for d in drift}) != len(drift):
        raise ConfigError("duplicate drift tag names in catalog")

    stage_weights = tuple(float(v) for v in doc.get("stage_weights", (1 / 3, 1 / 3, 1 / 3)))
    if len(stage_weights) != 3 or abs(sum(stage_weights) - 1.0) > 1e-9:
        raise ConfigError("stage_weights must be three values summing to 1")

    battery = Battery(
        tasks=tasks,
        family_thresholds=thresholds,
        drift_catalog=drift,
        resource_schema={str(k): float(v) for k, v in doc.get("resource_schema", {}).items()},
        anchors=anchors,
        weights=weights,
        min_family_size=m_min,
        seed_manifest=[str(s) for s in doc.get("seed_manifest", [])],
        horizon_cap=int(doc.get("horizon_cap", 100)),
        depth_anchor=int(doc.get("depth_anchor", 100)),
        lambda_max=float(doc.get("lambda_max", 0.0231)),
        recall_k=int(doc.get("recall_k", 5)),
        size_prior_max=float(doc.get("size_prior_max", 8.0)),
        revision_scale=float(doc.get("revision_scale", 0.10)),
        stage_weights=stage_weights,  # type: ignore[arg-type]
        comm_penalty_weights=tuple(float(v) for v in doc.get("comm_penalty_weights", (0.25, 0.25))),  # type: ignore[arg-type]
        loop_thresholds=tuple(int(v) for v in doc.get("loop_thresholds", (3, 3))),  # type: ignore[arg-type]
        ss_severity_weights=tuple(float(v) for v in doc.get("ss_severity_weights", (0.25, 1.0, 5.0, 20.0))),  # type: ignore[arg-type]
        proper_scoring_declared=bool(doc.get("proper_scoring_declared", False)),
        weight_preset=preset_name,
    )
    if battery.horizon_cap < 1 or battery.depth_anchor < 1:
        raise ConfigError("horizon_cap and depth_anchor must be positive")
    if battery.lambda_max <= 0 or battery.revision_scale <= 0:
        raise ConfigError("lambda_max and revision_scale must be positive")
    if any(v < 0 for v in battery.resource_schema.values()):
        raise ConfigError("resource schema unit costs must be nonnegative")
    return battery


def _parse_timestamp(value) -> float:
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        return _dt.datetime.fromisoformat(value).timestamp()
    raise ConfigError(f"unparseable timestamp {value!r}")


_TRACE_FIELDS = {
    "task_id", "seed_id", "drift_tag", "quality", "uninterrupted_actions",
    "plan_depth", "cost", "timestamp", "human_interventions", "concurrency",
    "comm_tokens", "verified_actions", "episode_flags", "lag_days",
    "stated_prob", "truth", "incident_counts", "exposure_hours", "sim_flag",
    "tool_categories_used", "recovered_faults", "total_faults",
    "control_quality", "recall_hits", "recall_total", "repair_hours",
    "schema_hash",
}
_COUNT_FIELDS = ("uninterrupted_actions", "plan_depth", "human_interventions",
                 "concurrency", "comm_tokens", "verified_actions",
                 "recovered_faults", "total_faults", "recall_hits", "recall_total")


def trace_from_record(rec: Mapping, warn_unknown: Optional[set] = None) -> EpisodeTrace:
    """Build one EpisodeTrace from a parsed JSONL record."""
    unknown = set(rec) - _TRACE_FIELDS
    if unknown:
        if warn_unknown is None or not unknown <= warn_unknown:
            log.warning("ignoring unknown trace fields: %s", ", ".join(sorted(unknown)))
        if warn_unknown is not None:
            warn_unknown |= unknown
    if "task_id" not in rec or "quality" not in rec:
        raise MeterError("trace record needs task_id and quality")
    q = float(rec["quality"])
    if not 0.0 <= q <= 1.0:
        raise MeterError(f"trace quality {q} outside [0,1]")

    flags = None
    if rec.get("episode_flags") is not None:
        f = rec["episode_flags"]
        flags = EpisodeFlags(
            unresolved_conflict=f.get("unresolved_conflict"),
            loop=f.get("loop"),
            chatter=f.get("chatter"),
            mode_collapse=f.get("mode_collapse"),
        )
    incidents = None
    if rec.get("incident_counts") is not None:
        incidents = {k: int(v) for k, v in rec["incident_counts"].items()}
        bad = set(incidents) - {"nm", "min", "maj", "crit"}
        if bad:
            raise MeterError(f"unknown incident classes: {sorted(bad)}")
        if any(v < 0 for v in incidents.values()):
            raise MeterError("incident counts must be nonnegative")

    kwargs: dict = {}
    for name in _COUNT_FIELDS:
        if rec.get(name) is not None:
            val = rec[name]
            if val < 0:
                raise MeterError(f"trace field {name} must be nonnegative, got {val}")
            kwargs[name] = int(val) if name != "human_interventions" else float(val)

    stated = rec.get("stated_prob")
    truth = rec.get("truth")
    if stated is not None and truth is None:
        raise MeterError("stated_prob present without truth")

    return EpisodeTrace(
        task_id=str(rec["task_id"]),
        quality=q,
        seed_id=None if rec.get("seed_id") is None else str(rec["seed_id"]),
        drift_tag=None if rec.get("drift_tag") is None else str(rec["drift_tag"]),
        cost=None if rec.get("cost") is None else float(rec["cost"]),
        timestamp=None if rec.get("timestamp") is None else _parse_timestamp(rec["timestamp"]),
        episode_flags=flags,
        lag_days=None if rec.get("lag_days") is None else float(rec["lag_days"]),
        stated_prob=None if stated is None else float(stated),
        truth=None if truth is None else int(truth),
        incident_counts=incidents,
        exposure_hours=None if rec.get("exposure_hours") is None else float(rec["exposure_hours"]),
        sim_flag=bool(rec.get("sim_flag", False)),
        tool_categories_used=frozenset(rec.get("tool_categories_used", ())),
        control_quality=None if rec.get("control_quality") is None else float(rec["control_quality"]),
        repair_hours=None if rec.get("repair_hours") is None else float(rec["repair_hours"]),
        schema_hash=None if rec.get("schema_hash") is None else str(rec["schema_hash"]),
        **kwargs,
    )


def load_traces(paths: Union[str, Path, Sequence[Union[str, Path]]],
                battery: Optional[Battery] = None) -> list[EpisodeTrace]:
    """Read JSONL trace files; validates drift tags when a battery is given."""
    if isinstance(paths, (str, Path)):
        paths = [paths]
    traces: list[EpisodeTrace] = []
    warned: set = set()
    for path in paths:
        with open(path, "r", encoding="utf-8") as fh:
            for ln, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    rec = json.loads(line)
                    trace = trace_from_record(rec, warn_unknown=warned)
                except MeterError as exc:
                    raise MeterError(f"{path}:{ln}: {exc}") from exc
                except (ValueError, KeyError, TypeError) as exc:
                    raise MeterError(f"{path}:{ln}: malformed trace record ({exc})") from exc
                traces.append(trace)
    if battery is not None:
        known = {d.name for d in battery.drift_catalog}
        for tr in traces:
            if tr.drift_tag is not None and tr.drift_tag not in known:
                raise MeterError(f"trace drift tag {tr.drift_tag!r} not in battery catalog")
    return traces


def load_revision_events(path: Union[str, Path]) -> list[RevisionEvent]:
    """Read revision events from a JSONL file."""
    events = []
    with open(path, "r", encoding="utf-8") as fh:
        for ln, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            try:
                events.append(RevisionEvent(
                    event_id=str(rec["event_id"]),
                    window_id=str(rec.get("window_id", "")),
                    c_rev_pre=float(rec["c_rev_pre"]),
                    c_rev_post=float(rec["c_rev_post"]),
                    c_ctrl_pre=None if rec.get("c_ctrl_pre") is None else float(rec["c_ctrl_pre"]),
                    c_ctrl_post=None if rec.get("c_ctrl_post") is None else float(rec["c_ctrl_post"]),
                    stage_autonomy=tuple(float(v) for v in rec.get("stage_autonomy", (0, 0, 0))),  # type: ignore[arg-type]
                    ablation_result=None if rec.get("ablation_result") is None else float(rec["ablation_result"]),
                    change_kind=str(rec.get("change_kind", "patch")),
                    artifacts=dict(rec.get("artifacts", {})),
                    holdout_mismatch=bool(rec.get("holdout_mismatch", False)),
                ))
            except (KeyError, ValueError, TypeError) as exc:
                raise MeterError(f"{path}:{ln}: malformed revision event ({exc})") from exc
    return events


# ---------------------------------------------------------------------------
# admissibility and family aggregation
# ---------------------------------------------------------------------------

@dataclass
class AdmissibilityReport:
    items: dict[str, dict]

    @property
    def passed(self) -> bool:
        return all(item["passed"] for item in self.items.values())

    def to_json(self) -> dict:
        return {"passed": self.passed, "items": self.items}


def validate_admissibility(battery: Battery, traces: Sequence[EpisodeTrace]) -> AdmissibilityReport:
    """Check the machine-verifiable admissibility items.

    (a) proper scoring is a declared config flag; (b) family sizes;
    (c) every cataloged drift magnitude appears in the traces;
    (d) a single resource-schema hash across the window;
    (e) every trace seed is disclosed in the manifest.
    """
    items: dict[str, dict] = {}

    items["a_proper_scoring"] = {
        "passed": battery.proper_scoring_declared,
        "detail": "declared by config" if battery.proper_scoring_declared
        else "config does not declare proper scoring rules",
    }

    small = {fam: len(members) for fam, members in battery.families.items()
             if len(members) < battery.min_family_size}
    items["b_family_sizes"] = {
        "passed": not small,
        "detail": "all families meet the minimum size" if not small
        else f"undersized families: {small}",
    }

    seen_tags = {t.drift_tag for t in traces if t.drift_tag is not None}
    seen_mags = {battery.drift_magnitude(tag) for tag in seen_tags}
    missing = [d.name for d in battery.drift_catalog if d.magnitude not in seen_mags]
    items["c_drift_support"] = {
        "passed": not missing,
        "detail": "all cataloged drift magnitudes observed" if not missing
        else f"no traces under drift tags: {missing}",
    }

    expected = battery.schema_hash()
    seen_hashes = {t.schema_hash for t in traces if t.schema_hash is not None}
    stray = sorted(h for h in seen_hashes if h != expected)
    items["d_resource_schema"] = {
        "passed": not stray,
        "detail": "single schema hash across the window" if not stray
        else f"traces carry {len(stray)} schema hash(es) differing from the battery's",
    }

    undisclosed = sorted({t.seed_id for t in traces
                          if t.seed_id is not None and t.seed_id not in battery.seed_manifest})
    items["e_seed_disclosure"] = {
        "passed": not undisclosed,
        "detail": "all trace seeds disclosed" if not undisclosed
        else f"seeds missing from manifest: {undisclosed[:10]}",
    }
    return AdmissibilityReport(items=items)


def family_aggregate(traces: Sequence[EpisodeTrace], battery: Battery) -> dict[str, FamilyAggregate]:
    """Per-family mean quality, coverage indicator, and trace count.

    Families without traces are returned with count 0 and covered=None
    ("no data"); the G axis excludes them.
    """
    sums: dict[str, float] = {}
    counts: dict[str, int] = {}
    for tr in traces:
        task = battery.tasks.get(tr.task_id)
        if task is None:
            raise MeterError(f"trace references unknown task {tr.task_id!r}")
        sums[task.family] = sums.get(task.family, 0.0) + tr.quality
        counts[task.family] = counts.get(task.family, 0) + 1
    out: dict[str, FamilyAggregate] = {}
    for fam in battery.families:
        n = counts.get(fam, 0)
        if n == 0:
            out[fam] = FamilyAggregate(family=fam, mean_quality=None, covered=None, count=0)
            continue
        mean_q = sums[fam] / n
        out[fam] = FamilyAggregate(
            family=fam,
            mean_quality=mean_q,
            covered=bool(mean_q >= battery.family_thresholds[fam]),
            count=n,
        )
    return out
