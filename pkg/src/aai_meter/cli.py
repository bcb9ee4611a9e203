"""Command-line interface for the measurement engine.

Subcommands cover the pipeline stages individually (``validate``,
``axes``, ``index``, ``dynamics``, ``gates``, ``frontier``), synthetic
pool generation (``simulate``), and the full evidence bundle
(``report``). Exit codes: 0 on success, 2 when inputs or configuration
fail validation, 1 on unexpected errors.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from .battery import AXES, WEIGHT_PRESETS, load_traces, validate_admissibility
from .errors import MeterError
from .report import (ReportBundle, ReportSettings, discover_systems,
                     emit_plots, load_config_doc, run_report, write_bundle)

_PRESETS = tuple(sorted(WEIGHT_PRESETS))


def _fmt(value: Optional[float], nd: int = 4) -> str:
    return "--" if value is None else f"{value:.{nd}f}"


def _load_battery_arg(args) -> tuple:
    """Battery plus settings from ``--config``, or the packaged defaults."""
    if args.config is not None:
        battery, settings, _ = load_config_doc(args.config)
        return battery, settings
    from .simulate import archetype_battery
    return archetype_battery(), ReportSettings()


def _pipeline(args, with_gates: bool) -> ReportBundle:
    return run_report(args.systems, args.config, seed=args.seed,
                      preset=args.preset, with_gates=with_gates)


# ---------------------------------------------------------------------------
# subcommand handlers
# ---------------------------------------------------------------------------

def _cmd_validate(args) -> int:
    battery, _ = _load_battery_arg(args)
    systems = discover_systems(args.systems)
    failed = False
    for item in systems:
        traces = load_traces(item.traces, battery=battery)
        report = validate_admissibility(battery, traces)
        verdict = "pass" if report.passed else "FAIL"
        print(f"{item.name}: {verdict} ({len(traces)} traces)")
        for key, entry in sorted(report.items.items()):
            mark = "ok" if entry["passed"] else "FAIL"
            print(f"  [{mark}] {key}: {entry.get('detail', '')}")
        failed = failed or not report.passed
    return 2 if failed else 0


def _cmd_axes(args) -> int:
    bundle = _pipeline(args, with_gates=False)
    width = max(len(n) for n in bundle.order)
    print(f"{'system':<{width}}  " + "  ".join(f"{ax:>6}" for ax in AXES))
    for name in bundle.order:
        axes = bundle.doc["systems"][name]["axes"]
        cells = "  ".join(
            f"{_fmt((axes.get(ax) or {}).get('score')):>6}" for ax in AXES)
        print(f"{name:<{width}}  {cells}")
    return 0


def _cmd_index(args) -> int:
    bundle = _pipeline(args, with_gates=False)
    for row in bundle.doc["table"]:
        line = (f"{row['system']}: index={_fmt(row['index'])} "
                f"(zero_policy={row['zero_policy']})")
        if row["index_strict"] != row["index_floor"]:
            line += (f" | diverging: strict={_fmt(row['index_strict'])} "
                     f"floor={_fmt(row['index_floor'])}")
        print(line)
    return 0


def _cmd_dynamics(args) -> int:
    bundle = _pipeline(args, with_gates=False)
    for name in bundle.order:
        dyn = bundle.doc["systems"][name]["dynamics"]
        if dyn.get("kappa"):
            k = dyn["kappa"]
            ci = k.get("ci")
            ci_txt = (f" ci=[{_fmt(ci[0], 6)}, {_fmt(ci[1], 6)}]"
                      if ci else "")
            print(f"{name}: kappa={_fmt(k['point'], 6)}{ci_txt} "
                  f"n={k.get('n')}")
            for fam in dyn.get("families", []):
                print(f"  {fam['family']}: kappa={_fmt(fam['kappa'], 6)} "
                      f"consecutive_days={fam['consecutive_days']}")
        else:
            print(f"{name}: {dyn.get('note', 'no slope evidence')}")
    return 0


def _cmd_gates(args) -> int:
    bundle = _pipeline(args, with_gates=True)
    for name in bundle.order:
        gates = bundle.doc["systems"][name]["gates"]
        level = gates["level"]
        label = "none" if level is None else str(level)
        blocked = level + 1 if level is not None else 0
        verdicts = gates.get("verdicts", {})
        blockers = [c["name"] for c in verdicts.get(str(blocked), [])
                    if not c["passed"]]
        suffix = ""
        if blockers:
            suffix = (f" (level {blocked} blocked by: "
                      f"{'; '.join(blockers[:3])})")
        print(f"{name}: level {label}{suffix}")
    return 0


def _cmd_frontier(args) -> int:
    bundle = _pipeline(args, with_gates=False)
    for name in bundle.order:
        frontier = bundle.doc["systems"][name].get("frontier")
        if not frontier:
            print(f"{name}: no frontier (fewer than two seeded runs)")
            continue
        summary = frontier.get("summary")
        if summary is None:
            print(f"{name}: {frontier.get('note', 'no frontier summary')}")
            continue
        delta = summary.get("delta_vs_earlier")
        delta_txt = f" dAUF={delta:+.4f}" if delta is not None else ""
        print(f"{name}: FD={_fmt(summary['fd'])} "
              f"AUF={_fmt(summary['auf_above'])} "
              f"Q*={summary['q_target']:g}{delta_txt}")
    return 0


def _cmd_simulate(args) -> int:
    from .report import ReportSettings
    from .simulate import (ProgressionSpec, archetype_battery_config,
                           default_archetype_specs, simulate_archetypes,
                           simulate_progression, write_archetype_dir)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    specs = default_archetype_specs(noise=args.noise, runs=args.runs,
                                    seed=args.seed)
    result = simulate_archetypes(specs)

    config_doc = archetype_battery_config()
    config_doc["report"] = ReportSettings().to_json()
    config_path = out / "config.json"
    with open(config_path, "w", encoding="utf-8") as fh:
        json.dump(config_doc, fh, indent=1, sort_keys=True)
        fh.write("\n")

    for run in result.runs:
        files = write_archetype_dir(run, out / run.spec.name)
        print(f"{run.spec.name}: wrote {', '.join(files)}")
        worst = max(
            abs(run.estimated[ax].value - run.expected[ax])
            for ax in run.expected
            if run.estimated[ax].value is not None)
        print(f"  index strict={_fmt(run.composite.strict_index)} "
              f"floor={_fmt(run.composite.floor_index)} "
              f"kappa={_fmt(run.kappa_hat.point, 6)} "
              f"max|est-target|={worst:.2e}")

    table_path = out / "archetypes.json"
    with open(table_path, "w", encoding="utf-8") as fh:
        json.dump([run.to_json() for run in result.runs], fh,
                  indent=1, sort_keys=True)
        fh.write("\n")

    progression = simulate_progression(ProgressionSpec())
    progression_path = out / "progression.csv"
    progression.write_csv(progression_path)
    r4 = progression.r4, progression.r5
    print(f"progression: first level-4 gate hold at R={_fmt(r4[0], 3)}, "
          f"level-5 at R={_fmt(r4[1], 3)}")
    print(f"config: {config_path}")
    print(f"tables: {table_path}, {progression_path}")
    return 0


def _cmd_report(args) -> int:
    bundle = _pipeline(args, with_gates=True)
    out = Path(args.out)
    manifest = write_bundle(bundle, out)
    plots = emit_plots(bundle, out)

    width = max(len(n) for n in bundle.order)
    print(f"{'system':<{width}}  level  index    strict   floor")
    for row in bundle.doc["table"]:
        level = "none" if row["level"] is None else str(row["level"])
        print(f"{row['system']:<{width}}  {level:<5}  "
              f"{_fmt(row['index'])}   {_fmt(row['index_strict'])}   "
              f"{_fmt(row['index_floor'])}")
    for note in bundle.doc["notes"]:
        print(f"note: {note}")
    print(f"bundle: {manifest['bundle']} (sha256 {manifest['checksum']})")
    print(f"tables: {', '.join(sorted(manifest['tables']))}")
    if plots.written:
        print(f"plots: {', '.join(sorted(plots.written))}")
    for fname, reason in sorted(plots.skipped.items()):
        print(f"plot skipped: {fname} ({reason})")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aai-meter",
        description="Capability measurement over agent evaluation traces.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", default=None,
                        help="config document: battery fields plus an "
                             "optional 'report' section")
    common.add_argument("--seed", type=int, default=0,
                        help="master seed for every resampling plan")
    common.add_argument("--out", metavar="DIR", default=None,
                        help="output directory (report, simulate)")
    common.add_argument("--preset", choices=_PRESETS, default=None,
                        help="composite weight preset override")

    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, handler, help_text: str, *, systems: bool = True):
        p = sub.add_parser(name, parents=[common], help=help_text)
        if systems:
            p.add_argument("systems", nargs="+", metavar="SYSTEM",
                           help="system input: a directory with "
                                "traces.jsonl (plus optional slope.jsonl, "
                                "revisions.jsonl, closures.json) or a bare "
                                ".jsonl trace file")
        p.set_defaults(handler=handler)
        return p

    add("validate", _cmd_validate,
        "check traces against the battery's admissibility items")
    add("axes", _cmd_axes, "estimate the normalized capability axes")
    add("index", _cmd_index, "composite capability index per system")
    add("dynamics", _cmd_dynamics,
        "self-improvement slope from a timestamped window")
    add("gates", _cmd_gates, "level gate verdicts per system")
    add("frontier", _cmd_frontier,
        "delegability frontier: fraction delegable and area above target")
    sim = add("simulate", _cmd_simulate,
              "generate the reference archetype pools and the progression "
              "trajectory", systems=False)
    sim.add_argument("--noise", type=float, default=0.0,
                     help="perturbation scale for the generated traces")
    sim.add_argument("--runs", type=int, default=100,
                     help="episode-count unit per archetype (>= 50)")
    add("report", _cmd_report,
        "full evidence bundle: axes, composite, dynamics, gates, frontier, "
        "tables, and plots")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.out is None:
        args.out = "aai-sim" if args.command == "simulate" else "aai-report"
    try:
        return args.handler(args)
    except MeterError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except Exception as err:  # pragma: no cover - defensive
        print(f"internal error: {err!r}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
