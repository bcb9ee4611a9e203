"""End-to-end measurement reports with reproducible evidence bundles.

Each input path names one measured system: either a directory holding
``traces.jsonl`` (required) plus optional ``slope.jsonl`` (a timestamped
improvement window), ``revisions.jsonl`` (self-revision ledger), and
``closures.json`` (maintenance / expansion evidence), or a bare ``.jsonl``
file treated as an axis-evidence pool alone.

The full pipeline runs per system — admissibility, axis estimation,
composite, improvement dynamics, level gates, delegability frontier —
and the results land in a single bundle document. The bundle is
byte-stable for a fixed master seed: every resampling plan derives its
seed from the master, no wall-clock values are embedded, and the JSON is
written with sorted keys. SHA-256 checksums of every input file and of
the bundle itself make the output verifiable after the fact. Plots are
rendered from the bundle alone, so a saved bundle can be re-plotted
without the original traces.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass, field, fields as dc_fields
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from . import __version__
from .axes import AxisResult, estimate_axes
from .battery import (AXES, Battery, EpisodeTrace, WEIGHT_PRESETS,
                      load_battery, load_revision_events, load_traces,
                      validate_admissibility)
from .composite import CompositeResult, compute_composite
from .dynamics import checkpoints_from_traces, kappa_estimate
from .errors import ConfigError, MeterError
from .frontier import (FrontierEstimate, InterventionBudget, PolicyRun,
                       delegability_frontier, frontier_summaries)
from .gates import (Closures, DynamicsEvidence, ExpansionEvidence,
                    FamilyDynamics, GateConfig, assign_level,
                    expansion_closure, maintenance_closure)
from .stats import ResamplePlan

ENGINE_NAME = "aai-meter"

# file names recognized inside a system input directory
TRACES_FILE = "traces.jsonl"
SLOPE_FILE = "slope.jsonl"
REVISIONS_FILE = "revisions.jsonl"
CLOSURES_FILE = "closures.json"

_SETTINGS_KEYS = frozenset({
    "quality_star", "cost_per_hour", "reference_predictor", "kappa_star",
    "replicates", "h_max", "bins", "zero_policy", "gates",
})
_GATE_FIELDS = frozenset(f.name for f in dc_fields(GateConfig)) - {"kappa_star"}


# ---------------------------------------------------------------------------
# settings and input discovery
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ReportSettings:
    """Resolved analysis constants shared by every system in a report.

    ``kappa_star`` may be None only while gates are not requested; the
    gate stage refuses to run without it. A document that omits the
    whole ``report`` section keeps these defaults except ``kappa_star``,
    which then must come from the built-in default configuration.
    """

    quality_star: float = 0.6
    cost_per_hour: float = 50.0
    reference_predictor: Mapping[str, float] = field(
        default_factory=lambda: {"default": 0.5})
    kappa_star: Optional[float] = 0.005
    replicates: int = 200
    h_max: float = 10.0
    bins: Optional[tuple[float, ...]] = None
    zero_policy: str = "strict"
    gate_overrides: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if not 0 <= self.quality_star <= 1:
            raise ConfigError("quality_star must lie in [0, 1]")
        if self.cost_per_hour <= 0:
            raise ConfigError("cost_per_hour must be positive")
        if self.replicates < 0:
            raise ConfigError("replicates must be nonnegative")
        if self.h_max <= 0:
            raise ConfigError("h_max must be positive")
        if self.zero_policy not in ("strict", "floor"):
            raise ConfigError("zero_policy must be 'strict' or 'floor'")
        if self.kappa_star is not None and self.kappa_star <= 0:
            raise ConfigError("kappa_star must be positive")
        bad = sorted(set(self.gate_overrides) - _GATE_FIELDS)
        if bad:
            raise ConfigError(f"unknown gate settings: {bad}")

    @classmethod
    def from_doc(cls, doc: Mapping) -> "ReportSettings":
        unknown = sorted(set(doc) - _SETTINGS_KEYS)
        if unknown:
            raise ConfigError(f"unknown report settings: {unknown}")
        kwargs: dict = {}
        for key in ("quality_star", "cost_per_hour", "h_max"):
            if key in doc:
                kwargs[key] = float(doc[key])
        if "replicates" in doc:
            kwargs["replicates"] = int(doc["replicates"])
        if "zero_policy" in doc:
            kwargs["zero_policy"] = str(doc["zero_policy"])
        if "reference_predictor" in doc:
            ref = doc["reference_predictor"]
            if not isinstance(ref, Mapping):
                raise ConfigError("reference_predictor must map task ids to "
                                  "baseline Brier scores")
            kwargs["reference_predictor"] = {str(k): float(v)
                                             for k, v in ref.items()}
        if "bins" in doc and doc["bins"] is not None:
            kwargs["bins"] = tuple(float(b) for b in doc["bins"])
        if "gates" in doc:
            gates = doc["gates"]
            if not isinstance(gates, Mapping):
                raise ConfigError("gates settings must be a mapping")
            if "kappa_star" in gates:
                raise ConfigError("kappa_star belongs at the report level, "
                                  "not inside the gates section")
            kwargs["gate_overrides"] = dict(gates)
        # an explicit document must name kappa_star itself; the packaged
        # default applies only when no document was supplied at all
        kwargs["kappa_star"] = (float(doc["kappa_star"])
                                if doc.get("kappa_star") is not None else None)
        return cls(**kwargs)

    def to_json(self) -> dict:
        return {
            "quality_star": self.quality_star,
            "cost_per_hour": self.cost_per_hour,
            "reference_predictor": dict(self.reference_predictor),
            "kappa_star": self.kappa_star,
            "replicates": self.replicates,
            "h_max": self.h_max,
            "bins": list(self.bins) if self.bins is not None else None,
            "zero_policy": self.zero_policy,
            "gates": dict(self.gate_overrides),
        }

    def gate_config(self) -> GateConfig:
        if self.kappa_star is None:
            raise ConfigError("required config field 'kappa_star' is missing")
        return GateConfig(kappa_star=self.kappa_star, **self.gate_overrides)


def load_config_doc(path: Union[str, Path]) -> tuple[Battery, ReportSettings, str]:
    """Parse a config document: battery fields at the top level plus an
    optional ``report`` section. Returns the battery, the settings, and
    the document's SHA-256 checksum."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc}") from exc
    try:
        doc = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"config: {path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, Mapping):
        raise ConfigError(f"config: {path}: document must be a JSON object")
    battery = load_battery(doc)
    section = doc.get("report", {})
    if not isinstance(section, Mapping):
        raise ConfigError(f"config: {path}: 'report' must be a JSON object")
    settings = ReportSettings.from_doc(section)
    return battery, settings, hashlib.sha256(raw).hexdigest()


@dataclass(frozen=True)
class SystemInput:
    """One measured system's evidence files."""

    name: str
    root: Path
    traces: Path
    slope: Optional[Path] = None
    revisions: Optional[Path] = None
    closures: Optional[Path] = None

    @property
    def files(self) -> list[Path]:
        return [p for p in (self.traces, self.slope, self.revisions,
                            self.closures) if p is not None]


def discover_systems(paths: Sequence[Union[str, Path]]) -> list[SystemInput]:
    """Resolve each input path to a system: a directory with the
    recognized file names, or a bare trace file."""
    if not paths:
        raise ConfigError("no input systems supplied")
    systems: list[SystemInput] = []
    seen: set[str] = set()
    for p in paths:
        path = Path(p)
        if path.is_dir():
            traces = path / TRACES_FILE
            if not traces.is_file():
                raise MeterError(f"battery: {path}: missing {TRACES_FILE}")

            def _opt(fname: str) -> Optional[Path]:
                f = path / fname
                return f if f.is_file() else None

            item = SystemInput(name=path.name or str(path), root=path,
                               traces=traces, slope=_opt(SLOPE_FILE),
                               revisions=_opt(REVISIONS_FILE),
                               closures=_opt(CLOSURES_FILE))
        elif path.is_file():
            item = SystemInput(name=path.stem, root=path, traces=path)
        else:
            raise MeterError(f"battery: {path}: no such file or directory")
        if item.name in seen:
            raise ConfigError(f"duplicate system name '{item.name}'; "
                              "input paths must have distinct basenames")
        seen.add(item.name)
        systems.append(item)
    return systems


# ---------------------------------------------------------------------------
# per-system measurement
# ---------------------------------------------------------------------------

def _sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _derived_seed(master: int, index: int, salt: int) -> int:
    """Stable per-system, per-purpose seed derived from the master."""
    return (master * 1_000_003 + index * 1_009 + salt) % (2 ** 31)


def _staged(stage: str, system: str, fn, *args, **kwargs):
    """Run one pipeline stage, prefixing errors with the stage and the
    system so failures point at the module and record that caused them."""
    try:
        return fn(*args, **kwargs)
    except MeterError as err:
        raise type(err)(f"{stage}[{system}]: {err}") from err


def _consecutive_days(traces: Sequence[EpisodeTrace]) -> int:
    stamps = sorted(t.timestamp for t in traces if t.timestamp is not None)
    if not stamps:
        return 0
    days = sorted({int((s - stamps[0]) // 86400.0) for s in stamps})
    best = cur = 1
    for a, b in zip(days, days[1:]):
        cur = cur + 1 if b == a + 1 else 1
        best = max(best, cur)
    return best


def _retention_series(traces: Sequence[EpisodeTrace]) -> list[list[float]]:
    by_lag: dict[float, list[float]] = {}
    for tr in traces:
        if tr.lag_days is not None:
            by_lag.setdefault(float(tr.lag_days), []).append(tr.quality)
    return [[lag, float(np.mean(qs))] for lag, qs in sorted(by_lag.items())]


def _tool_shift_table(battery: Battery,
                      traces: Sequence[EpisodeTrace]) -> Optional[dict]:
    """Per-category success rate at the smallest positive cataloged
    drift magnitude; None when no such evidence exists."""
    positive = [d.magnitude for d in battery.drift_catalog if d.magnitude > 0]
    if not positive:
        return None
    magnitude = min(positive)
    names = {d.name for d in battery.drift_catalog if d.magnitude == magnitude}
    counts: dict[str, list[int]] = {}
    for tr in traces:
        if tr.drift_tag in names and tr.tool_categories_used:
            ok = tr.quality >= battery.tasks[tr.task_id].quality_target
            for cat in tr.tool_categories_used:
                hit_total = counts.setdefault(cat, [0, 0])
                hit_total[0] += int(ok)
                hit_total[1] += 1
    if not counts:
        return None
    table = {cat: hits / total for cat, (hits, total) in sorted(counts.items())}
    return {"magnitude": magnitude, "per_category": table}


def _policy_runs(traces: Sequence[EpisodeTrace]) -> list[PolicyRun]:
    by_run: dict[str, list[EpisodeTrace]] = {}
    for tr in traces:
        if tr.seed_id is not None:
            by_run.setdefault(tr.seed_id, []).append(tr)
    runs = []
    for run_id, members in sorted(by_run.items()):
        quality = float(np.mean([t.quality for t in members]))
        helps = float(np.mean([t.human_interventions or 0.0 for t in members]))
        runs.append(PolicyRun(run_id=run_id, mean_quality=quality,
                              mean_interventions=helps))
    return runs


def load_closure_evidence(path: Path, epsilon_default: float = 0.01) -> Closures:
    """Parse closure evidence: an optional ``maintenance`` block with a
    baseline, retention factor, window length, and daily rows, and an
    optional ``expansion`` block with the difference-in-differences
    summary of a revision plus its ablation."""
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: cannot parse closure evidence ({exc})") \
            from exc
    if not isinstance(doc, Mapping):
        raise ConfigError(f"{path}: closure evidence must be a JSON object")
    unknown = sorted(set(doc) - {"maintenance", "expansion"})
    if unknown:
        raise ConfigError(f"{path}: unknown closure sections: {unknown}")
    maintenance = expansion = None
    try:
        if "maintenance" in doc:
            m = doc["maintenance"]
            rows = [tuple(row) for row in m["rows"]]
            maintenance = maintenance_closure(
                float(m["baseline"]), rows,
                alpha=float(m.get("alpha", 0.8)),
                days=int(m.get("days", 7)))
        if "expansion" in doc:
            e = doc["expansion"]
            ci = e["did_ci"]
            evidence = ExpansionEvidence(
                did_delta=float(e["did_delta"]),
                did_ci=(float(ci[0]), float(ci[1])),
                composite_pre=float(e["composite_pre"]),
                composite_ablated=(None if e.get("composite_ablated") is None
                                   else float(e["composite_ablated"])),
                did_on_ablated=(None if e.get("did_on_ablated") is None
                                else float(e["did_on_ablated"])))
            expansion = expansion_closure(
                evidence, epsilon=float(e.get("epsilon", epsilon_default)))
    except (KeyError, ValueError, TypeError, IndexError) as exc:
        raise ConfigError(f"{path}: malformed closure evidence "
                          f"({exc!r})") from exc
    return Closures(maintenance=maintenance, expansion=expansion)


@dataclass
class SystemResult:
    """Everything measured for one system, pre-serialization."""

    name: str
    admissibility: dict
    axes: dict[str, AxisResult]
    composite: CompositeResult
    dynamics_doc: dict
    gates_doc: Optional[dict]
    frontier_doc: Optional[dict]
    frontier_estimate: Optional[FrontierEstimate]
    notes: list[str]

    def to_json(self) -> dict:
        return {
            "admissibility": self.admissibility,
            "axes": {ax: res.to_json() for ax, res in sorted(self.axes.items())},
            "composite": self.composite.to_json(),
            "dynamics": self.dynamics_doc,
            "gates": self.gates_doc,
            "frontier": self.frontier_doc,
            "notes": list(self.notes),
        }


def _measure_system(item: SystemInput, index: int, battery: Battery,
                    settings: ReportSettings, weights: Mapping[str, float],
                    weight_label: str, master_seed: int,
                    earlier: Optional[FrontierEstimate],
                    with_gates: bool = True) -> SystemResult:
    notes: list[str] = []
    name = item.name

    # ingest
    traces = _staged("battery", name, load_traces, item.traces,
                     battery=battery)
    revisions = (_staged("battery", name, load_revision_events, item.revisions)
                 if item.revisions is not None else [])
    admissibility = validate_admissibility(battery, traces).to_json()

    # axes and composite
    axes = _staged("axes", name, estimate_axes, battery, traces, revisions,
                   reference_predictor=dict(settings.reference_predictor),
                   quality_star=settings.quality_star,
                   cost_per_hour=settings.cost_per_hour)
    composite = _staged("composite", name, compute_composite, axes, weights,
                        zero_policy=settings.zero_policy,
                        weight_preset=weight_label)
    if composite.policies_diverge:
        notes.append(
            f"zero-policy divergence: index {composite.strict_index:.6g} "
            f"under 'strict' vs {composite.floor_index:.6g} under 'floor'")

    # improvement dynamics
    replicates = settings.replicates
    families: list[FamilyDynamics] = []
    kappa_doc = None
    dynamics_note = None
    if item.slope is not None:
        slope_traces = _staged("battery", name, load_traces, item.slope,
                               battery=battery)
        plan = (ResamplePlan(mode="block", replicates=replicates,
                             seed=_derived_seed(master_seed, index, 1))
                if replicates > 0 else None)
        series = _staged("dynamics", name, checkpoints_from_traces,
                         slope_traces, battery)
        kappa_doc = _staged("dynamics", name, kappa_estimate, series,
                            plan=plan).to_json()
        window_days = _consecutive_days(slope_traces)
        fams = sorted({battery.tasks[t.task_id].family for t in slope_traces})
        for fi, fam in enumerate(fams):
            fam_plan = (ResamplePlan(mode="block", replicates=replicates,
                                     seed=_derived_seed(master_seed, index,
                                                        10 + fi))
                        if replicates > 0 else None)
            fam_series = _staged("dynamics", name, checkpoints_from_traces,
                                 slope_traces, battery, family=fam)
            est = _staged("dynamics", name, kappa_estimate, fam_series,
                          plan=fam_plan)
            families.append(FamilyDynamics(
                family=fam, kappa=est.point, kappa_ci=est.ci,
                consecutive_days=window_days))
    else:
        dynamics_note = ("no timestamped improvement window supplied; "
                         "slope estimates skipped")

    retention = _retention_series(traces)
    span = max((row[0] for row in retention), default=None)
    shift = _tool_shift_table(battery, traces)
    tool_count = len(set().union(
        *(tr.tool_categories_used or frozenset() for tr in traces))) \
        if traces else 0
    drift_curve = (axes["T"].diagnostics or {}).get("success_by_drift", {}) \
        if "T" in axes else {}
    dynamics_doc = {
        "kappa": kappa_doc,
        "families": [
            {"family": f.family, "kappa": f.kappa,
             "ci": list(f.kappa_ci) if f.kappa_ci is not None else None,
             "consecutive_days": f.consecutive_days}
            for f in families],
        "retention": retention,
        "persistence_span_days": span,
        "tool_shift": shift,
        "tool_success_by_drift": [[float(mag), rate] for mag, rate
                                  in sorted(drift_curve.items(),
                                            key=lambda kv: float(kv[0]))],
        "raw_tool_count": tool_count,
        "note": dynamics_note,
    }

    # level gates
    gates_doc = None
    if with_gates:
        gate_config = _staged("gates", name, settings.gate_config)
        closures = (_staged("gates", name, load_closure_evidence,
                            item.closures)
                    if item.closures is not None else Closures())
        evidence = DynamicsEvidence(
            families=tuple(families),
            persistence_span_days=span,
            parity_coverage=None,
            raw_tool_count=tool_count,
            tool_success_under_shift=(shift or {}).get("per_category", {}),
            composite=composite.index,
        )
        gates_doc = _staged("gates", name, assign_level, axes, evidence,
                            closures, gate_config).to_json()

    # delegability frontier
    frontier_doc = None
    estimate = None
    runs = _policy_runs(traces)
    if len(runs) >= 2:
        plan = (ResamplePlan(mode="iid", replicates=replicates,
                             seed=_derived_seed(master_seed, index, 2))
                if replicates > 0 else None)
        estimate = _staged("frontier", name, delegability_frontier, runs,
                           InterventionBudget(settings.h_max),
                           bins=settings.bins, plan=plan, window_id=name)
        chain = (earlier if earlier is not None
                 and tuple(earlier.bins) == tuple(estimate.bins) else None)
        try:
            summary = frontier_summaries(estimate, settings.quality_star,
                                         earlier=chain)
            frontier_doc = {"estimate": estimate.to_json(),
                            "summary": summary.to_json()}
        except MeterError as err:
            frontier_doc = {"estimate": estimate.to_json(),
                            "summary": None, "note": str(err)}
    else:
        notes.append("frontier skipped: fewer than two seeded runs")

    return SystemResult(name=name, admissibility=admissibility, axes=axes,
                        composite=composite, dynamics_doc=dynamics_doc,
                        gates_doc=gates_doc, frontier_doc=frontier_doc,
                        frontier_estimate=estimate, notes=notes)


# ---------------------------------------------------------------------------
# bundle assembly
# ---------------------------------------------------------------------------

@dataclass
class ReportBundle:
    """The assembled report document plus canonical serialization."""

    doc: dict

    def to_json_bytes(self) -> bytes:
        return (json.dumps(self.doc, sort_keys=True, indent=1,
                           separators=(",", ": ")) + "\n").encode("utf-8")

    @property
    def checksum(self) -> str:
        return hashlib.sha256(self.to_json_bytes()).hexdigest()

    @property
    def order(self) -> list[str]:
        return list(self.doc["order"])


def _axis_ci(res: AxisResult) -> Optional[list[float]]:
    return list(res.ci) if res.ci is not None else None


def _table_rows(results: Sequence[SystemResult]) -> list[dict]:
    rows = []
    for res in results:
        axes_cells = {
            ax: {"raw": r.raw, "score": r.value, "ci": _axis_ci(r),
                 "status": r.status}
            for ax, r in sorted(res.axes.items())}
        rows.append({
            "system": res.name,
            "axes": axes_cells,
            "index": res.composite.index,
            "index_strict": res.composite.strict_index,
            "index_floor": res.composite.floor_index,
            "zero_policy": res.composite.zero_policy,
            "level": (res.gates_doc or {}).get("level"),
        })
    return rows


def run_report(paths: Sequence[Union[str, Path]],
               config_path: Optional[Union[str, Path]] = None,
               *, seed: int = 0, preset: Optional[str] = None,
               battery: Optional[Battery] = None,
               settings: Optional[ReportSettings] = None,
               with_gates: bool = True) -> ReportBundle:
    """Measure every input system and assemble the evidence bundle.

    ``config_path`` names a JSON document with battery fields at the top
    level and an optional ``report`` section; without it the packaged
    reference battery and default settings apply (``battery`` and
    ``settings`` allow direct injection). ``preset`` overrides the
    composite weight preset by name. The master ``seed`` drives every
    resampling plan, so two runs with equal inputs and seed produce
    byte-identical bundles. ``with_gates=False`` skips level assignment,
    the only stage that requires ``kappa_star``.
    """
    systems = discover_systems(paths)
    config_checksum = None
    config_source = None
    if config_path is not None:
        battery, settings, config_checksum = load_config_doc(config_path)
        config_source = str(config_path)
    else:
        if battery is None:
            from .simulate import archetype_battery
            battery = archetype_battery()
        if settings is None:
            settings = ReportSettings()

    if preset is not None:
        if preset not in WEIGHT_PRESETS:
            raise ConfigError(f"unknown weight preset '{preset}'; choose "
                              f"one of {sorted(WEIGHT_PRESETS)}")
        weights, weight_label = dict(WEIGHT_PRESETS[preset]), preset
    else:
        weights, weight_label = dict(battery.weights), battery.weight_preset

    inputs = []
    for item in systems:
        files = {f.name if item.root.is_dir() else str(f): _sha256_file(f)
                 for f in item.files}
        inputs.append({"system": item.name, "files": files})

    results: list[SystemResult] = []
    earlier: Optional[FrontierEstimate] = None
    for index, item in enumerate(systems):
        res = _measure_system(item, index, battery, settings, weights,
                              weight_label, int(seed), earlier,
                              with_gates=with_gates)
        if res.frontier_estimate is not None:
            earlier = res.frontier_estimate
        results.append(res)

    notes: list[str] = []
    diverged = [r for r in results if r.composite.policies_diverge]
    if diverged:
        parts = ", ".join(
            f"{r.name} (strict {r.composite.strict_index:.6g}, "
            f"floor {r.composite.floor_index:.6g})" for r in diverged)
        notes.append(
            "zero-policy divergence: axes at exact zero are excluded from "
            "the geometric mean under 'strict' but floored under 'floor'; "
            f"the two headline indices differ for: {parts}. Single-number "
            "comparisons across systems must fix one policy; the table "
            "reports both.")

    doc = {
        "engine": {"name": ENGINE_NAME, "version": __version__},
        "master_seed": int(seed),
        "config": {
            "source": config_source,
            "checksum": config_checksum,
            "battery": battery.to_config(),
            "report": settings.to_json(),
            "weight_preset": weight_label,
        },
        "inputs": inputs,
        "order": [item.name for item in systems],
        "systems": {res.name: res.to_json() for res in results},
        "table": _table_rows(results),
        "notes": notes,
    }
    return ReportBundle(doc=doc)


# ---------------------------------------------------------------------------
# bundle output: JSON, checksums, CSV tables
# ---------------------------------------------------------------------------

def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple, dict)):
        return json.dumps(value, sort_keys=True)
    return str(value)


def _write_csv(path: Path, header: Sequence[str],
               rows: Sequence[Sequence]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    path.write_text(buf.getvalue(), encoding="utf-8")


def _csv_tables(doc: dict) -> dict[str, tuple[list[str], list[list]]]:
    order = doc["order"]
    systems = doc["systems"]

    axes_rows, comp_rows, dyn_rows, gate_rows = [], [], [], []
    frontier_rows, summary_rows = [], []
    for name in order:
        sys_doc = systems[name]
        for ax in AXES:
            res = sys_doc["axes"].get(ax)
            if res is None:
                continue
            ci = res.get("ci") or [None, None]
            axes_rows.append([name, ax, res.get("raw"), res.get("score"),
                              ci[0], ci[1], res.get("status"), res.get("n")])
        comp = sys_doc["composite"]
        comp_rows.append([name, comp.get("zero_policy"), comp.get("index"),
                          comp.get("strict_index"), comp.get("floor_index"),
                          comp.get("adjusted_index"), comp.get("uniformity"),
                          comp.get("weight_preset"),
                          comp.get("strict_index") != comp.get("floor_index")])
        dyn = sys_doc["dynamics"]
        if dyn.get("kappa"):
            k = dyn["kappa"]
            ci = k.get("ci") or [None, None]
            dyn_rows.append([name, "pooled", "", k.get("point"), ci[0], ci[1],
                             "", k.get("n"), k.get("method")])
        for fam in dyn.get("families", []):
            ci = fam.get("ci") or [None, None]
            dyn_rows.append([name, "family", fam.get("family"),
                             fam.get("kappa"), ci[0], ci[1],
                             fam.get("consecutive_days"), "", ""])
        gates = sys_doc.get("gates") or {}
        level = gates.get("level")
        for candidate in sorted(gates.get("verdicts", {}), key=int):
            for check in gates["verdicts"][candidate]:
                gate_rows.append([name, level, candidate, check.get("name"),
                                  check.get("passed"), check.get("observed"),
                                  check.get("required"), check.get("note")])
        frontier = sys_doc.get("frontier")
        if frontier and frontier.get("estimate"):
            est = frontier["estimate"]
            for a, raw, proj, lo, hi in zip(est["bins"], est["raw"],
                                            est["projected"], est["ci_lo"],
                                            est["ci_hi"]):
                frontier_rows.append([name, a, raw, proj, lo, hi])
            summary = frontier.get("summary")
            if summary:
                summary_rows.append([name, summary.get("fd"),
                                     summary.get("auf_above"),
                                     summary.get("q_target"),
                                     summary.get("delta_vs_earlier")])

    return {
        "axes.csv": (["system", "axis", "raw", "score", "ci_lo", "ci_hi",
                      "status", "n"], axes_rows),
        "composite.csv": (["system", "zero_policy", "index", "index_strict",
                           "index_floor", "index_adjusted", "uniformity",
                           "weight_preset", "policies_diverge"], comp_rows),
        "dynamics.csv": (["system", "series", "family", "kappa", "ci_lo",
                          "ci_hi", "consecutive_days", "n", "method"],
                         dyn_rows),
        "gates.csv": (["system", "assigned_level", "candidate", "check",
                       "passed", "observed", "required", "note"], gate_rows),
        "frontier.csv": (["system", "autonomy", "raw", "projected", "ci_lo",
                          "ci_hi"], frontier_rows),
        "frontier_summary.csv": (["system", "fd", "auf_above", "q_target",
                                  "delta_vs_earlier"], summary_rows),
    }


def write_bundle(bundle: ReportBundle, out_dir: Union[str, Path]) -> dict:
    """Write ``bundle.json``, its checksum sidecar, and the CSV tables.

    Returns a manifest: the bundle path, its SHA-256 checksum, and the
    table paths, all as strings.
    """
    out = Path(out_dir)
    (out / "tables").mkdir(parents=True, exist_ok=True)
    payload = bundle.to_json_bytes()
    bundle_path = out / "bundle.json"
    bundle_path.write_bytes(payload)
    checksum = hashlib.sha256(payload).hexdigest()
    (out / "bundle.sha256").write_text(f"{checksum}  bundle.json\n",
                                       encoding="utf-8")
    tables = {}
    for fname, (header, rows) in _csv_tables(bundle.doc).items():
        path = out / "tables" / fname
        _write_csv(path, header, rows)
        tables[fname] = str(path)
    return {"bundle": str(bundle_path), "checksum": checksum,
            "tables": tables}


# ---------------------------------------------------------------------------
# plots: deterministic, self-contained SVG
# ---------------------------------------------------------------------------

_PALETTE = ("#2563eb", "#dc2626", "#16a34a", "#9333ea", "#ea580c", "#0891b2")
_SVG_W, _SVG_H = 640, 400
_ML, _MR, _MT, _MB = 62, 20, 40, 48


@dataclass
class PlotReport:
    """Which plots were written and which were skipped, with reasons."""

    written: dict[str, str] = field(default_factory=dict)
    skipped: dict[str, str] = field(default_factory=dict)


def _sx(x: float, lo: float, hi: float) -> float:
    return _ML + (x - lo) / (hi - lo) * (_SVG_W - _ML - _MR)


def _sy(y: float, lo: float, hi: float) -> float:
    return _SVG_H - _MB - (y - lo) / (hi - lo) * (_SVG_H - _MT - _MB)


def _svg_frame(title: str, x_label: str, y_label: str,
               x_dom: tuple[float, float], y_dom: tuple[float, float],
               x_ticks: Sequence[float], y_ticks: Sequence[float]) -> list[str]:
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_SVG_W}" '
        f'height="{_SVG_H}" viewBox="0 0 {_SVG_W} {_SVG_H}">',
        f'<rect width="{_SVG_W}" height="{_SVG_H}" fill="#ffffff"/>',
        f'<text x="{_SVG_W / 2:.1f}" y="22" text-anchor="middle" '
        f'font-family="sans-serif" font-size="15" fill="#111">{title}</text>',
    ]
    x0, x1 = _sx(x_dom[0], *x_dom), _sx(x_dom[1], *x_dom)
    y0, y1 = _sy(y_dom[0], *y_dom), _sy(y_dom[1], *y_dom)
    parts.append(f'<line x1="{x0:.1f}" y1="{y0:.1f}" x2="{x1:.1f}" '
                 f'y2="{y0:.1f}" stroke="#444" stroke-width="1"/>')
    parts.append(f'<line x1="{x0:.1f}" y1="{y0:.1f}" x2="{x0:.1f}" '
                 f'y2="{y1:.1f}" stroke="#444" stroke-width="1"/>')
    for t in x_ticks:
        px = _sx(t, *x_dom)
        parts.append(f'<line x1="{px:.1f}" y1="{y0:.1f}" x2="{px:.1f}" '
                     f'y2="{y0 + 4:.1f}" stroke="#444"/>')
        parts.append(f'<text x="{px:.1f}" y="{y0 + 18:.1f}" '
                     'text-anchor="middle" font-family="sans-serif" '
                     f'font-size="11" fill="#333">{t:g}</text>')
    for t in y_ticks:
        py = _sy(t, *y_dom)
        parts.append(f'<line x1="{x0 - 4:.1f}" y1="{py:.1f}" x2="{x0:.1f}" '
                     f'y2="{py:.1f}" stroke="#444"/>')
        parts.append(f'<text x="{x0 - 8:.1f}" y="{py + 4:.1f}" '
                     'text-anchor="end" font-family="sans-serif" '
                     f'font-size="11" fill="#333">{t:g}</text>')
    parts.append(f'<text x="{(x0 + x1) / 2:.1f}" y="{_SVG_H - 10}" '
                 'text-anchor="middle" font-family="sans-serif" '
                 f'font-size="12" fill="#111">{x_label}</text>')
    parts.append(f'<text x="16" y="{(y0 + y1) / 2:.1f}" text-anchor="middle" '
                 'font-family="sans-serif" font-size="12" fill="#111" '
                 f'transform="rotate(-90 16 {(y0 + y1) / 2:.1f})">'
                 f'{y_label}</text>')
    return parts


def _svg_legend(parts: list[str], names: Sequence[str]) -> None:
    for i, name in enumerate(names):
        color = _PALETTE[i % len(_PALETTE)]
        y = _MT + 14 + 16 * i
        parts.append(f'<line x1="{_SVG_W - 170}" y1="{y - 4}" '
                     f'x2="{_SVG_W - 150}" y2="{y - 4}" stroke="{color}" '
                     'stroke-width="2.5"/>')
        parts.append(f'<text x="{_SVG_W - 144}" y="{y}" '
                     'font-family="sans-serif" font-size="11" '
                     f'fill="#111">{name}</text>')


def _polyline(points: Sequence[tuple[float, float]], color: str,
              dashed: bool = False) -> str:
    coords = " ".join(f"{x:.1f},{y:.1f}" for x, y in points)
    dash = ' stroke-dasharray="6 4"' if dashed else ""
    return (f'<polyline points="{coords}" fill="none" stroke="{color}" '
            f'stroke-width="2"{dash}/>')


def _markers(points: Sequence[tuple[float, float]], color: str) -> str:
    return "".join(f'<circle cx="{x:.1f}" cy="{y:.1f}" r="3" '
                   f'fill="{color}"/>' for x, y in points)


def _frontier_svg(doc: dict) -> Optional[str]:
    order = doc["order"]
    series = []
    q_target = None
    for name in order:
        frontier = doc["systems"][name].get("frontier")
        if not frontier or not frontier.get("estimate"):
            continue
        est = frontier["estimate"]
        pts = [(float(a), float(v)) for a, v in zip(est["bins"],
                                                    est["projected"])
               if v is not None]
        if len(pts) < 2:
            continue
        series.append((name, pts))
        if est.get("q_target") is not None:
            q_target = float(est["q_target"])
    if not series:
        return None
    ticks = [0.0, 0.25, 0.5, 0.75, 1.0]
    parts = _svg_frame("Delegability frontier", "required autonomy",
                       "projected quality", (0.0, 1.0), (0.0, 1.0),
                       ticks, ticks)
    scale = [[(_sx(a, 0, 1), _sy(q, 0, 1)) for a, q in pts]
             for _, pts in series]
    if len(series) >= 2:
        first, last = scale[0], scale[-1]
        ring = " ".join(f"{x:.1f},{y:.1f}" for x, y in last + first[::-1])
        parts.append(f'<polygon points="{ring}" fill="#16a34a" '
                     'fill-opacity="0.15" stroke="none"/>')
    if q_target is not None:
        py = _sy(q_target, 0, 1)
        parts.append(_polyline([(_sx(0, 0, 1), py), (_sx(1, 0, 1), py)],
                               "#555", dashed=True))
        parts.append(f'<text x="{_sx(1, 0, 1) - 4:.1f}" y="{py - 6:.1f}" '
                     'text-anchor="end" font-family="sans-serif" '
                     f'font-size="11" fill="#555">Q* = {q_target:g}</text>')
    for i, ((name, _), pts) in enumerate(zip(series, scale)):
        color = _PALETTE[i % len(_PALETTE)]
        parts.append(_polyline(pts, color))
        parts.append(_markers(pts, color))
    _svg_legend(parts, [name for name, _ in series])
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _retention_svg(doc: dict) -> Optional[str]:
    order = doc["order"]
    series = []
    for name in order:
        rows = doc["systems"][name]["dynamics"].get("retention") or []
        pts = [(float(lag), float(q)) for lag, q in rows]
        if len(pts) >= 2:
            series.append((name, pts))
    if not series:
        return None
    max_lag = max(p[0] for _, pts in series for p in pts)
    x_ticks = sorted({p[0] for _, pts in series for p in pts})[:8]
    parts = _svg_frame("Retention by lag", "lag (days)", "mean quality",
                       (0.0, max_lag), (0.0, 1.0), x_ticks,
                       [0.0, 0.25, 0.5, 0.75, 1.0])
    for i, (name, pts) in enumerate(series):
        color = _PALETTE[i % len(_PALETTE)]
        scaled = [(_sx(x, 0, max_lag), _sy(y, 0, 1)) for x, y in pts]
        parts.append(_polyline(scaled, color))
        parts.append(_markers(scaled, color))
    _svg_legend(parts, [name for name, _ in series])
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _tool_success_svg(doc: dict) -> Optional[str]:
    order = doc["order"]
    series = []
    for name in order:
        rows = doc["systems"][name]["dynamics"].get("tool_success_by_drift") \
            or []
        pts = [(float(m), float(s)) for m, s in rows]
        if len(pts) >= 2:
            series.append((name, sorted(pts)))
    if not series:
        return None
    max_mag = max(p[0] for _, pts in series for p in pts)
    x_ticks = sorted({p[0] for _, pts in series for p in pts})[:8]
    parts = _svg_frame("Tool success under drift", "drift magnitude",
                       "success rate", (0.0, max_mag), (0.0, 1.0), x_ticks,
                       [0.0, 0.25, 0.5, 0.75, 1.0])
    for i, (name, pts) in enumerate(series):
        color = _PALETTE[i % len(_PALETTE)]
        scaled = [(_sx(x, 0, max_mag), _sy(y, 0, 1)) for x, y in pts]
        parts.append(_polyline(scaled, color))
        parts.append(_markers(scaled, color))
    _svg_legend(parts, [name for name, _ in series])
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_plots(bundle: Union[ReportBundle, dict],
               out_dir: Union[str, Path]) -> PlotReport:
    """Render the bundle's plot series as self-contained SVG files.

    Reads only the bundle document, so a saved ``bundle.json`` can be
    re-plotted without the original traces. Series that are absent or
    degenerate are skipped with a note instead of an empty plot.
    """
    doc = bundle.doc if isinstance(bundle, ReportBundle) else bundle
    out = Path(out_dir) / "plots"
    out.mkdir(parents=True, exist_ok=True)
    report = PlotReport()
    jobs = (
        ("frontier.svg", _frontier_svg,
         "no frontier estimates with two or more covered bins"),
        ("retention.svg", _retention_svg,
         "no retention series with two or more lags"),
        ("tool_success.svg", _tool_success_svg,
         "no drifted tool-success series with two or more magnitudes"),
    )
    for fname, render, absent in jobs:
        svg = render(doc)
        if svg is None:
            report.skipped[fname] = absent
            continue
        path = out / fname
        path.write_text(svg, encoding="utf-8")
        report.written[fname] = str(path)
    return report
