"""Report pipeline: settings, discovery, bundle assembly, outputs, plots."""
import hashlib
import json
from pathlib import Path

import pytest

from aai_meter.errors import ConfigError, MeterError
from aai_meter.report import (PlotReport, ReportSettings, discover_systems,
                              emit_plots, load_closure_evidence,
                              load_config_doc, run_report, write_bundle)
from aai_meter.simulate import (archetype_battery, archetype_battery_config,
                                default_archetype_specs, simulate_archetypes,
                                write_archetype_dir, write_traces_jsonl)

ARCHETYPES = ("rpa", "agentic-llm", "self-improving", "orchestrator")
EXPECTED_LEVELS = {"rpa": 0, "agentic-llm": 1, "self-improving": 2,
                   "orchestrator": 2}


@pytest.fixture(scope="module")
def sim(tmp_path_factory):
    """Simulated archetype pools written out as system directories."""
    root = tmp_path_factory.mktemp("systems")
    result = simulate_archetypes(default_archetype_specs())
    paths = []
    for run in result.runs:
        d = root / run.spec.name
        write_archetype_dir(run, d)
        paths.append(d)
    config = archetype_battery_config()
    config["report"] = ReportSettings().to_json()
    config_path = root / "config.json"
    config_path.write_text(json.dumps(config, sort_keys=True))
    return {"result": result, "paths": paths, "config": config_path,
            "root": root}


@pytest.fixture(scope="module")
def bundle(sim):
    return run_report(sim["paths"], seed=11)


class TestReportSettings:
    def test_serialization_round_trip(self):
        base = ReportSettings()
        assert ReportSettings.from_doc(base.to_json()) == base

    def test_unknown_report_key_rejected(self):
        with pytest.raises(ConfigError, match="kapa_star"):
            ReportSettings.from_doc({"kapa_star": 0.005})

    def test_unknown_gate_key_rejected(self):
        with pytest.raises(ConfigError, match="gate"):
            ReportSettings.from_doc({"gates": {"no_such_bound": 1}})

    def test_kappa_star_must_sit_at_report_level(self):
        with pytest.raises(ConfigError, match="kappa_star"):
            ReportSettings.from_doc({"gates": {"kappa_star": 0.005}})

    @pytest.mark.parametrize("fields", [
        {"zero_policy": "zero"},
        {"quality_star": 1.5},
        {"cost_per_hour": 0.0},
        {"h_max": -1.0},
        {"replicates": -5},
        {"kappa_star": 0.0},
    ])
    def test_invalid_values_rejected(self, fields):
        with pytest.raises(ConfigError):
            ReportSettings(**fields)

    def test_document_without_kappa_star_defers_the_error(self):
        settings = ReportSettings.from_doc({"quality_star": 0.6})
        assert settings.kappa_star is None
        with pytest.raises(ConfigError, match="kappa_star"):
            settings.gate_config()

    def test_gate_overrides_feed_the_config(self):
        settings = ReportSettings(gate_overrides={"tool_gate_count": 5})
        assert settings.gate_config().tool_gate_count == 5


class TestDiscovery:
    def test_directory_with_all_files(self, sim):
        item = discover_systems([sim["paths"][2]])[0]
        assert item.name == "self-improving"
        assert item.traces.name == "traces.jsonl"
        assert item.slope is not None
        assert item.revisions is not None
        assert item.closures is not None

    def test_bare_trace_file(self, tmp_path, sim):
        pool = tmp_path / "pool.jsonl"
        write_traces_jsonl(sim["result"].runs[0].traces, pool)
        item = discover_systems([pool])[0]
        assert item.name == "pool"
        assert item.slope is None and item.closures is None

    def test_directory_without_traces_rejected(self, tmp_path):
        empty = tmp_path / "empty"
        empty.mkdir()
        with pytest.raises(MeterError, match="traces.jsonl"):
            discover_systems([empty])

    def test_missing_path_rejected(self, tmp_path):
        with pytest.raises(MeterError, match="no such file"):
            discover_systems([tmp_path / "ghost"])

    def test_duplicate_names_rejected(self, tmp_path, sim):
        a = tmp_path / "one" / "same"
        b = tmp_path / "two" / "same"
        for d in (a, b):
            d.mkdir(parents=True)
            write_traces_jsonl(sim["result"].runs[0].traces,
                               d / "traces.jsonl")
        with pytest.raises(ConfigError, match="duplicate"):
            discover_systems([a, b])

    def test_empty_input_rejected(self):
        with pytest.raises(ConfigError, match="no input"):
            discover_systems([])


class TestRunReport:
    def test_four_row_table_in_input_order(self, bundle):
        assert bundle.order == list(ARCHETYPES)
        assert [row["system"] for row in bundle.doc["table"]] \
            == list(ARCHETYPES)

    def test_axis_scores_match_direct_estimation(self, sim, bundle):
        for run in sim["result"].runs:
            cells = bundle.doc["systems"][run.spec.name]["axes"]
            for ax, res in run.estimated.items():
                assert cells[ax]["score"] == res.value
                assert cells[ax]["raw"] == res.raw

    def test_table_carries_raw_scores_and_intervals(self, bundle):
        row = bundle.doc["table"][3]
        cell = row["axes"]["A"]
        assert set(cell) == {"raw", "score", "ci", "status"}
        assert cell["status"] == "ok"

    def test_both_zero_policies_reported(self, bundle):
        for row in bundle.doc["table"]:
            assert "index_strict" in row and "index_floor" in row
        diverging = [row["system"] for row in bundle.doc["table"]
                     if row["index_strict"] != row["index_floor"]]
        assert diverging == ["rpa", "agentic-llm"]

    def test_divergence_note_names_both_policies(self, bundle):
        notes = " ".join(bundle.doc["notes"])
        assert "strict" in notes and "floor" in notes
        assert "rpa" in notes and "agentic-llm" in notes

    def test_gate_ladder(self, bundle):
        for row in bundle.doc["table"]:
            assert row["level"] == EXPECTED_LEVELS[row["system"]], \
                row["system"]

    def test_admissibility_passes_for_generated_pools(self, bundle):
        for name in ARCHETYPES:
            assert bundle.doc["systems"][name]["admissibility"]["passed"]

    def test_dynamics_slope_matches_design(self, sim, bundle):
        for run in sim["result"].runs:
            dyn = bundle.doc["systems"][run.spec.name]["dynamics"]
            assert dyn["kappa"]["point"] == pytest.approx(run.spec.kappa,
                                                          abs=1e-9)
            fams = dyn["families"]
            assert [f["family"] for f in fams] == ["fam01", "fam02"]
            assert all(f["consecutive_days"] == 10 for f in fams)

    def test_retention_and_tool_shift_evidence(self, bundle):
        dyn = bundle.doc["systems"]["orchestrator"]["dynamics"]
        assert [row[0] for row in dyn["retention"]] == [1, 5, 10, 20, 35]
        assert dyn["persistence_span_days"] == 35
        assert dyn["tool_shift"]["magnitude"] == pytest.approx(0.1)
        assert len(dyn["tool_shift"]["per_category"]) >= 3
        curve = dict(dyn["tool_success_by_drift"])
        assert set(curve) == {0.0, 0.1, 0.3, 0.6}

    def test_frontier_estimates_with_chained_delta(self, bundle):
        first = bundle.doc["systems"]["rpa"]["frontier"]
        assert first["summary"]["delta_vs_earlier"] is None
        for name in ARCHETYPES[1:]:
            frontier = bundle.doc["systems"][name]["frontier"]
            assert frontier["summary"]["delta_vs_earlier"] is not None
            assert frontier["estimate"]["bins"][0] == 0.0
            assert frontier["estimate"]["bins"][-1] == 1.0

    def test_frontier_projection_nonincreasing(self, bundle):
        for name in ARCHETYPES:
            est = bundle.doc["systems"][name]["frontier"]["estimate"]
            values = [v for v in est["projected"] if v is not None]
            assert all(a >= b - 1e-12 for a, b in zip(values, values[1:]))

    def test_input_checksums_recompute(self, sim, bundle):
        for entry in bundle.doc["inputs"]:
            root = sim["root"] / entry["system"]
            for fname, digest in entry["files"].items():
                data = (root / fname).read_bytes()
                assert hashlib.sha256(data).hexdigest() == digest

    def test_engine_stamp_and_seed(self, bundle):
        import aai_meter
        assert bundle.doc["engine"]["name"] == "aai-meter"
        assert bundle.doc["engine"]["version"] == aai_meter.__version__
        assert bundle.doc["master_seed"] == 11

    def test_config_snapshot_matches_battery(self, bundle):
        assert bundle.doc["config"]["battery"] \
            == archetype_battery().to_config()
        assert bundle.doc["config"]["report"]["kappa_star"] == 0.005

    def test_same_seed_byte_identical(self, sim, bundle):
        again = run_report(sim["paths"], seed=11)
        assert again.to_json_bytes() == bundle.to_json_bytes()
        assert again.checksum == bundle.checksum

    def test_different_seed_differs(self, sim, bundle):
        other = run_report(sim["paths"], seed=12)
        assert other.to_json_bytes() != bundle.to_json_bytes()

    def test_config_document_flow(self, sim):
        out = run_report(sim["paths"][:1], sim["config"], seed=0)
        raw = Path(sim["config"]).read_bytes()
        assert out.doc["config"]["checksum"] \
            == hashlib.sha256(raw).hexdigest()
        assert out.doc["config"]["source"] == str(sim["config"])
        assert out.doc["table"][0]["level"] == 0

    def test_missing_kappa_star_with_gates_names_the_field(self, sim,
                                                           tmp_path):
        config = archetype_battery_config()
        config["report"] = {"quality_star": 0.6}
        path = tmp_path / "nokappa.json"
        path.write_text(json.dumps(config))
        with pytest.raises(ConfigError, match="kappa_star"):
            run_report(sim["paths"][:1], path, seed=0)

    def test_gates_can_be_skipped(self, sim, tmp_path):
        config = archetype_battery_config()
        config["report"] = {"quality_star": 0.6}
        path = tmp_path / "nokappa.json"
        path.write_text(json.dumps(config))
        out = run_report(sim["paths"][:1], path, seed=0, with_gates=False)
        assert out.doc["table"][0]["level"] is None
        assert out.doc["systems"]["rpa"]["gates"] is None

    def test_stage_and_locus_in_errors(self, sim, tmp_path):
        bad = tmp_path / "badsys"
        bad.mkdir()
        (bad / "traces.jsonl").write_text(
            '{"task_id": "fam00-t0", "quality": 2.0}\n')
        with pytest.raises(MeterError, match=r"battery\[badsys\].*:1:"):
            run_report([bad], seed=0)

    def test_preset_override_changes_weighting(self, sim, bundle):
        other = run_report(sim["paths"][2:3], seed=11, preset="robotics")
        comp = other.doc["systems"]["self-improving"]["composite"]
        base = bundle.doc["systems"]["self-improving"]["composite"]
        assert comp["weight_preset"] == "robotics"
        assert comp["index"] != base["index"]

    def test_unknown_preset_rejected(self, sim):
        with pytest.raises(ConfigError, match="preset"):
            run_report(sim["paths"][:1], seed=0, preset="naval")

    def test_bare_trace_file_runs_axes_only_evidence(self, sim, tmp_path):
        pool = tmp_path / "solo.jsonl"
        write_traces_jsonl(sim["result"].runs[3].traces, pool)
        out = run_report([pool], seed=5)
        doc = out.doc["systems"]["solo"]
        assert doc["dynamics"]["kappa"] is None
        assert "improvement window" in doc["dynamics"]["note"]
        assert doc["gates"]["level"] is None or doc["gates"]["level"] <= 1


class TestClosureEvidence:
    def test_simulated_evidence_parses_and_passes(self, sim):
        closures = load_closure_evidence(sim["paths"][2] / "closures.json")
        assert closures.maintenance is not None
        assert closures.maintenance.passed
        assert closures.expansion is not None
        assert closures.expansion.passed

    def test_unknown_section_rejected(self, tmp_path):
        path = tmp_path / "closures.json"
        path.write_text('{"upkeep": {}}')
        with pytest.raises(ConfigError, match="upkeep"):
            load_closure_evidence(path)

    def test_malformed_rows_name_the_file(self, tmp_path):
        path = tmp_path / "closures.json"
        path.write_text('{"maintenance": {"baseline": 0.6, "rows": "x"}}')
        with pytest.raises(ConfigError, match="closures.json"):
            load_closure_evidence(path)

    def test_failing_maintenance_fails(self, tmp_path):
        path = tmp_path / "closures.json"
        doc = {"maintenance": {"baseline": 0.6, "alpha": 0.9, "days": 3,
                               "rows": [[1, 0.59], [2, 0.30], [3, 0.58]]}}
        path.write_text(json.dumps(doc))
        closures = load_closure_evidence(path)
        assert not closures.maintenance.passed

    def test_persistent_ablation_gain_fails_expansion(self, tmp_path):
        path = tmp_path / "closures.json"
        doc = {"expansion": {"did_delta": 0.05, "did_ci": [0.04, 0.06],
                             "composite_pre": 0.5,
                             "composite_ablated": 0.5,
                             "did_on_ablated": 0.05}}
        path.write_text(json.dumps(doc))
        closures = load_closure_evidence(path)
        assert not closures.expansion.passed


class TestBundleOutputs:
    def test_write_bundle_checksum_sidecar(self, bundle, tmp_path):
        manifest = write_bundle(bundle, tmp_path)
        payload = Path(manifest["bundle"]).read_bytes()
        assert hashlib.sha256(payload).hexdigest() == manifest["checksum"]
        sidecar = (tmp_path / "bundle.sha256").read_text()
        assert sidecar.split()[0] == manifest["checksum"]

    def test_rewrite_is_byte_identical(self, bundle, tmp_path):
        first = write_bundle(bundle, tmp_path / "a")
        second = write_bundle(bundle, tmp_path / "b")
        assert Path(first["bundle"]).read_bytes() \
            == Path(second["bundle"]).read_bytes()
        for fname, path in first["tables"].items():
            assert Path(path).read_bytes() \
                == Path(second["tables"][fname]).read_bytes()

    def test_tables_have_expected_headers(self, bundle, tmp_path):
        manifest = write_bundle(bundle, tmp_path)
        heads = {
            "axes.csv": "system,axis,raw,score",
            "composite.csv": "system,zero_policy,index",
            "dynamics.csv": "system,series,family,kappa",
            "gates.csv": "system,assigned_level,candidate,check",
            "frontier.csv": "system,autonomy,raw,projected",
            "frontier_summary.csv": "system,fd,auf_above",
        }
        for fname, prefix in heads.items():
            text = Path(manifest["tables"][fname]).read_text()
            assert text.startswith(prefix), fname

    def test_axes_csv_has_one_row_per_system_axis(self, bundle, tmp_path):
        manifest = write_bundle(bundle, tmp_path)
        lines = Path(manifest["tables"]["axes.csv"]).read_text().splitlines()
        assert len(lines) - 1 == 4 * 10

    def test_gates_csv_covers_every_candidate(self, bundle, tmp_path):
        manifest = write_bundle(bundle, tmp_path)
        text = Path(manifest["tables"]["gates.csv"]).read_text()
        for candidate in "01234":
            assert f"rpa,0,{candidate}," in text


class TestPlots:
    def test_all_three_plots_render(self, bundle, tmp_path):
        report = emit_plots(bundle, tmp_path)
        assert sorted(report.written) \
            == ["frontier.svg", "retention.svg", "tool_success.svg"]
        assert report.skipped == {}
        for path in report.written.values():
            text = Path(path).read_text()
            assert text.startswith("<svg ")
            assert "<polyline" in text

    def test_frontier_overlay_has_target_line_and_shading(self, bundle,
                                                          tmp_path):
        report = emit_plots(bundle, tmp_path)
        svg = Path(report.written["frontier.svg"]).read_text()
        assert "Q* = 0.6" in svg
        assert "<polygon" in svg
        for name in ARCHETYPES:
            assert name in svg

    def test_single_estimate_draws_no_shading(self, sim, tmp_path):
        single = run_report(sim["paths"][:1], seed=3)
        report = emit_plots(single, tmp_path)
        svg = Path(report.written["frontier.svg"]).read_text()
        assert "<polygon" not in svg

    def test_plots_skip_with_notes_when_series_absent(self, tmp_path, sim):
        run = sim["result"].runs[0]
        keep = [t for t in run.traces if t.lag_days is None]
        pool = tmp_path / "nolag.jsonl"
        write_traces_jsonl(keep, pool)
        bundle = run_report([pool], seed=0, with_gates=False)
        report = emit_plots(bundle, tmp_path)
        assert "retention.svg" in report.skipped
        assert "lag" in report.skipped["retention.svg"]

    def test_emit_plots_accepts_saved_documents(self, bundle, tmp_path):
        doc = json.loads(bundle.to_json_bytes())
        report = emit_plots(doc, tmp_path)
        assert isinstance(report, PlotReport)
        assert "frontier.svg" in report.written

    def test_plots_deterministic(self, bundle, tmp_path):
        a = emit_plots(bundle, tmp_path / "a")
        b = emit_plots(bundle, tmp_path / "b")
        for fname in a.written:
            assert Path(a.written[fname]).read_bytes() \
                == Path(b.written[fname]).read_bytes()


class TestConfigDocument:
    def test_load_config_doc_round_trip(self, sim):
        battery, settings, checksum = load_config_doc(sim["config"])
        assert battery.to_config() == archetype_battery().to_config()
        assert settings == ReportSettings()
        assert len(checksum) == 64

    def test_invalid_json_rejected(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text("{nope")
        with pytest.raises(ConfigError, match="JSON"):
            load_config_doc(path)

    def test_non_object_rejected(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text("[1, 2]")
        with pytest.raises(ConfigError, match="object"):
            load_config_doc(path)

    def test_missing_file_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            load_config_doc(tmp_path / "ghost.json")
