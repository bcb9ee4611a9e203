"""Simulators: archetype pool generation and progression dynamics."""
import json
import math
import time

import numpy as np
import pytest

from aai_meter.battery import load_battery, load_traces, validate_admissibility
from aai_meter.errors import ConfigError
from aai_meter.gates import DEFAULT_THRESHOLDS, GateConfig, expansion_closure
from aai_meter.simulate import (
    ARCHETYPE_KAPPA,
    ARCHETYPE_NAMES,
    ARCHETYPE_PROFILES,
    ArchetypeSpec,
    ProgressionSpec,
    archetype_battery,
    archetype_battery_config,
    default_archetype_specs,
    rate_escape_resource,
    simulate_archetypes,
    simulate_progression,
    trace_to_record,
    write_traces_jsonl,
)
from aai_meter.stats import ResamplePlan

# estimated values must equal the construction-side table bit for bit on
# these axes; the retention axis goes through a least-squares fit and is
# held to 1e-9 instead
BITWISE_AXES = ("A", "G", "P", "T", "R", "S", "W", "$")


@pytest.fixture(scope="module")
def battery():
    return archetype_battery()


@pytest.fixture(scope="module")
def clean_result(battery):
    return simulate_archetypes(default_archetype_specs(), battery=battery)


@pytest.fixture(scope="module")
def noisy_result(battery):
    return simulate_archetypes(default_archetype_specs(noise=0.01, seed=42),
                               battery=battery)


class TestArchetypeSpec:
    def test_unknown_name_rejected(self):
        with pytest.raises(ConfigError, match="unknown archetype"):
            ArchetypeSpec(name="agi", targets=dict(ARCHETYPE_PROFILES["rpa"]))

    def test_missing_axis_rejected(self):
        targets = dict(ARCHETYPE_PROFILES["rpa"])
        del targets["W"]
        with pytest.raises(ConfigError, match="missing targets"):
            ArchetypeSpec(name="rpa", targets=targets)

    def test_out_of_range_target_rejected(self):
        targets = dict(ARCHETYPE_PROFILES["rpa"])
        targets["A"] = 1.2
        with pytest.raises(ConfigError, match="outside"):
            ArchetypeSpec(name="rpa", targets=targets)

    def test_negative_noise_and_kappa_rejected(self):
        good = dict(ARCHETYPE_PROFILES["rpa"])
        with pytest.raises(ConfigError, match="noise"):
            ArchetypeSpec(name="rpa", targets=good, noise=-0.1)
        with pytest.raises(ConfigError, match="kappa"):
            ArchetypeSpec(name="rpa", targets=good, kappa=-0.01)

    def test_too_few_runs_rejected(self):
        with pytest.raises(ConfigError, match="runs"):
            ArchetypeSpec(name="rpa", targets=dict(ARCHETYPE_PROFILES["rpa"]),
                          runs=10)

    def test_defaults_cover_all_archetypes(self):
        specs = default_archetype_specs()
        assert [s.name for s in specs] == list(ARCHETYPE_NAMES)
        assert all(s.kappa == ARCHETYPE_KAPPA[s.name] for s in specs)
        seeds = {s.seed for s in specs}
        assert len(seeds) == len(specs)


class TestArchetypeBattery:
    def test_structure(self, battery):
        fams = battery.families
        assert len(fams) == 100
        assert all(len(tasks) == 5 for tasks in fams.values())
        assert battery.weight_preset == "software"
        assert battery.weights["E"] == 0.0

    def test_admissible_with_generated_pool(self, battery, clean_result):
        for run in clean_result.runs:
            report = validate_admissibility(battery, run.traces)
            assert report.passed, report.to_json()

    def test_round_trips_through_loader(self, battery):
        again = load_battery(battery.to_config())
        assert again.to_config() == battery.to_config()

    def test_foreign_battery_rejected(self, battery):
        config = archetype_battery_config()
        config["family_thresholds"] = dict(config["family_thresholds"])
        config["family_thresholds"]["fam00"] = 0.6
        other = load_battery(config)
        with pytest.raises(ConfigError, match="layout differs"):
            simulate_archetypes(default_archetype_specs(), battery=other)


class TestCleanPlayback:
    def test_estimates_match_expected_table(self, clean_result):
        for run in clean_result.runs:
            for axis in BITWISE_AXES:
                est = run.estimated[axis].value
                assert est == run.expected[axis], (run.spec.name, axis)
            m_est = run.estimated["M"].value
            assert m_est == pytest.approx(run.expected["M"], abs=1e-9)

    def test_expected_tracks_targets(self, clean_result):
        for run in clean_result.runs:
            t = run.spec.targets
            for axis in ("A", "G", "P"):
                assert run.expected[axis] == t[axis], (run.spec.name, axis)
            for axis in ("W", "$", "S", "R"):
                assert run.expected[axis] == pytest.approx(t[axis], abs=1e-12)
            assert run.expected["M"] == pytest.approx(t["M"], abs=1e-9)
            assert run.expected["T"] == pytest.approx(t["T"], abs=0.005)

    def test_estimates_hit_targets_within_three_percent(self, clean_result):
        for run in clean_result.runs:
            for axis, target in run.spec.targets.items():
                est = run.estimated[axis].value
                assert abs(est - target) <= 0.03, (run.spec.name, axis)

    def test_embodied_axis_reports_no_data(self, clean_result):
        for run in clean_result.runs:
            assert run.estimated["E"].status == "no_data"
            assert run.estimated["E"].value is None

    def test_axis_statuses_ok(self, clean_result):
        for run in clean_result.runs:
            for axis in BITWISE_AXES + ("M",):
                assert run.estimated[axis].status == "ok", (run.spec.name, axis)

    def test_slope_recovered_exactly(self, clean_result):
        for run in clean_result.runs:
            assert run.kappa_hat.point == pytest.approx(run.spec.kappa, abs=1e-9)
            lo, hi = run.kappa_hat.ci
            assert lo - 1e-12 <= run.spec.kappa <= hi + 1e-12

    def test_static_archetypes_have_flat_slopes(self, clean_result):
        by_name = {run.spec.name: run for run in clean_result.runs}
        assert by_name["rpa"].kappa_hat.point == 0.0
        assert by_name["agentic-llm"].kappa_hat.point == 0.0

    def test_zero_axes_split_the_index_policies(self, clean_result):
        for run in clean_result.runs:
            comp = run.composite
            has_zero = any(run.expected[ax] == 0.0 for ax in run.expected)
            if has_zero:
                assert comp.strict_index == 0.0
                assert comp.floor_index > 0.0
                assert comp.policies_diverge
            else:
                assert comp.strict_index > 0.0
                assert comp.strict_index == comp.floor_index

    def test_index_ordering_matches_capability_ordering(self, clean_result):
        floors = [run.composite.floor_index for run in clean_result.runs]
        assert floors == sorted(floors)

    def test_improving_archetypes_carry_closure_evidence(self, clean_result):
        for run in clean_result.runs:
            if run.spec.kappa > 0:
                assert run.maintenance is not None
                assert run.maintenance["days"] == 7
            else:
                assert run.maintenance is None
        orch = clean_result.runs[-1]
        assert orch.expansion is not None
        closure = expansion_closure(orch.expansion)
        assert closure.passed, closure.reason

    def test_table_accessor(self, clean_result):
        rows = clean_result.table()
        assert [r["archetype"] for r in rows] == list(ARCHETYPE_NAMES)
        for row in rows:
            assert set(row["expected"]) == set(ARCHETYPE_PROFILES[row["archetype"]])
            assert row["index_floor"] >= row["index_strict"]

    def test_run_serialization(self, clean_result):
        blob = json.dumps([run.to_json() for run in clean_result.runs])
        parsed = json.loads(blob)
        assert parsed[0]["archetype"] == "rpa"
        assert parsed[3]["kappa"]["point"] == pytest.approx(0.012, abs=1e-9)


class TestNoisyPlayback:
    def test_estimates_stay_near_targets(self, noisy_result):
        for run in noisy_result.runs:
            for axis, target in run.spec.targets.items():
                est = run.estimated[axis].value
                assert abs(est - target) <= 0.03, (run.spec.name, axis)

    def test_slope_ci_contains_target(self, noisy_result):
        for run in noisy_result.runs:
            lo, hi = run.kappa_hat.ci
            assert lo - 1e-3 <= run.spec.kappa <= hi + 1e-3
            if run.spec.kappa > 0:
                assert lo <= run.spec.kappa <= hi

    def test_same_seed_reproduces_traces(self, battery):
        a = simulate_archetypes(default_archetype_specs(noise=0.01, seed=9),
                                battery=battery)
        b = simulate_archetypes(default_archetype_specs(noise=0.01, seed=9),
                                battery=battery)
        for ra, rb in zip(a.runs, b.runs):
            assert ra.traces == rb.traces
            assert ra.slope_traces == rb.slope_traces

    def test_different_seeds_differ(self, battery):
        a = simulate_archetypes(default_archetype_specs(noise=0.01, seed=1),
                                battery=battery)
        b = simulate_archetypes(default_archetype_specs(noise=0.01, seed=2),
                                battery=battery)
        assert a.runs[0].traces != b.runs[0].traces

    def test_qualities_stay_in_unit_interval(self, noisy_result):
        for run in noisy_result.runs:
            for tr in run.traces + run.slope_traces:
                assert 0.0 <= tr.quality <= 1.0


class TestTraceSerialization:
    def test_jsonl_round_trip(self, battery, clean_result, tmp_path):
        run = clean_result.runs[-1]
        path = tmp_path / "traces.jsonl"
        write_traces_jsonl(run.traces, path)
        back = load_traces(path, battery)
        assert back == run.traces

    def test_slope_traces_round_trip(self, battery, clean_result, tmp_path):
        run = clean_result.runs[2]
        path = tmp_path / "slope.jsonl"
        write_traces_jsonl(run.slope_traces, path)
        back = load_traces(path, battery)
        assert back == run.slope_traces

    def test_record_drops_absent_fields(self, clean_result):
        run = clean_result.runs[0]
        rec = trace_to_record(run.traces[0])
        assert "lag_days" not in rec
        assert rec["task_id"].startswith("fam00")


class TestProgressionSpecValidation:
    @pytest.mark.parametrize("kwargs,pattern", [
        (dict(beta=1.0), "beta"),
        (dict(beta=1.2), "beta"),
        (dict(beta=0.0), "beta"),
        (dict(beta=-0.5), "beta"),
        (dict(a=0.0), "positive"),
        (dict(a=-1.0), "positive"),
        (dict(r_min=0.0), "positive"),
        (dict(normalizer="tanh"), "normalizer"),
        (dict(normalizer_scale=0.0), "scale"),
        (dict(rho4=-0.1), "nonnegative"),
        (dict(rho5={"A": -0.1}), "nonnegative"),
        (dict(mu=(-0.1,) * 5), "nonnegative"),
        (dict(mu=(0.1,)), "align"),
        (dict(kappa_bar0=1.0), "normalized rate"),
        (dict(c0=0.0), "capability"),
        (dict(c0=1.0), "capability"),
        (dict(step_size=0.0), "step size"),
        (dict(step_size=100.0), "step size"),
        (dict(step_delta=0.0), "link step"),
        (dict(axes0={"A": 1.5}), "outside"),
    ])
    def test_bad_specs_rejected(self, kwargs, pattern):
        with pytest.raises(ConfigError, match=pattern):
            ProgressionSpec(**kwargs)

    def test_missing_axis_slope_in_mapping(self):
        spec = ProgressionSpec(rho4={"A": 0.02})
        with pytest.raises(ConfigError, match="no responsiveness slope"):
            simulate_progression(spec)


class TestRateEscape:
    def test_closed_form_reference_case(self):
        r_star = rate_escape_resource(1.0, 0.5, 0.0, 1.0 - 1e-6)
        assert r_star == pytest.approx(1.998, abs=1e-9)

    def test_closed_form_validation(self):
        with pytest.raises(ConfigError):
            rate_escape_resource(0.0, 0.5, 0.0, 0.9)
        with pytest.raises(ConfigError):
            rate_escape_resource(1.0, 1.0, 0.0, 0.9)
        with pytest.raises(ConfigError):
            rate_escape_resource(1.0, 0.5, 0.8, 0.5)

    def test_integrator_matches_closed_form(self):
        start = time.time()
        spec = ProgressionSpec(a=1.0, beta=0.5, kappa_bar0=0.0,
                               r_budget=3.0, step_size=1e-3)
        out = simulate_progression(spec)
        target = 1.0 - 1e-6
        crossing = out.kappa_bar_crossing(target)
        closed = rate_escape_resource(1.0, 0.5, 0.0, target)
        assert crossing == pytest.approx(closed, abs=1e-3)
        at_two = out.kappa_bar[int(round(2.0 / spec.step_size))]
        assert at_two >= target
        assert time.time() - start < 2.0

    def test_step_halving_stable_on_integrated_crossing(self):
        # responsiveness fast enough that the capability-step crossing,
        # an integrated quantity, decides the level-4 resource
        common = dict(a=0.5, beta=0.5, rho4=5.0, rho5=5.0,
                      mu=(5.0,) * 5, margins0=(-0.5,) * 5, r_budget=10.0)
        coarse = simulate_progression(ProgressionSpec(step_size=2e-3, **common))
        fine = simulate_progression(ProgressionSpec(step_size=1e-3, **common))
        assert coarse.r4 is not None and fine.r4 is not None
        assert coarse.crossings["level4"]["capability_step"] == coarse.r4
        assert abs(fine.r4 - coarse.r4) / coarse.r4 < 1e-3

    def test_higher_curvature_escapes_slower(self):
        lo = simulate_progression(ProgressionSpec(a=0.5, beta=0.3, r_budget=20.0))
        hi = simulate_progression(ProgressionSpec(a=0.5, beta=0.9, r_budget=20.0))
        t = 0.99
        c_lo, c_hi = lo.kappa_bar_crossing(t), hi.kappa_bar_crossing(t)
        assert c_lo is not None and c_hi is not None
        assert c_lo < c_hi


@pytest.fixture(scope="module")
def default_run():
    return simulate_progression(ProgressionSpec())


class TestProgressionTrajectory:
    def test_rate_monotone_and_bounded(self, default_run):
        kb = default_run.kappa_bar
        assert np.all(np.diff(kb) >= -1e-12)
        assert kb[0] == pytest.approx(0.0)
        assert np.all(kb <= 1.0)

    def test_capability_monotone_within_clamp(self, default_run):
        c = default_run.capability
        assert np.all(np.diff(c) >= -1e-15)
        assert np.all((c > 0.0) & (c < 1.0))

    def test_axes_respect_floors_and_caps(self, default_run):
        for axis, vals in default_run.axes.items():
            assert np.all(np.diff(vals) >= -1e-15), axis
            assert np.all(vals <= 1.0), axis

    def test_transitions_ordered(self, default_run):
        assert default_run.r4 is not None
        assert default_run.r5 is not None
        assert default_run.r4 <= default_run.r5
        assert default_run.diagnostics is None

    def test_time_is_resource_over_rate_floor(self, default_run):
        assert default_run.t4 == default_run.r4 / default_run.spec.r_min
        assert default_run.t5 == default_run.r5 / default_run.spec.r_min
        scaled = simulate_progression(ProgressionSpec(r_min=2.0))
        assert scaled.t4 == scaled.r4 / 2.0

    def test_level4_crossing_is_binding_condition(self, default_run):
        cross = default_run.crossings["level4"]
        assert default_run.r4 == max(cross.values())

    def test_gate_bits_latch_at_crossings(self, default_run):
        r, bits = default_run.r, default_run.gate_bits["level4_all"]
        first = r[np.argmax(bits)]
        assert bits[-1]
        assert first == pytest.approx(default_run.r4, abs=2 * default_run.spec.step_size)
        assert np.all(bits[np.searchsorted(r, default_run.r4) + 1:])

    def test_level5_bits_require_level4(self, default_run):
        r, bits5 = default_run.r, default_run.gate_bits["level5_all"]
        assert bits5[-1]
        first5 = r[np.argmax(bits5)]
        assert first5 >= default_run.r4 - default_run.spec.step_size

    def test_zero_responsiveness_exceeds_budget(self):
        out = simulate_progression(ProgressionSpec(rho4=0.0, r_budget=5.0))
        assert out.r4 is None
        assert out.r5 is None
        assert out.t4 is None
        assert "budget exceeded" in out.diagnostics
        assert "axes" in out.diagnostics

    def test_stalled_margins_exceed_budget(self):
        out = simulate_progression(ProgressionSpec(mu=(0.0,) * 5,
                                                   r_budget=5.0))
        assert out.r4 is None
        assert "parity" in out.diagnostics

    def test_short_budget_reports_slowest_conditions(self):
        out = simulate_progression(ProgressionSpec(r_budget=15.0))
        assert out.r4 is None
        assert "budget exceeded" in out.diagnostics

    def test_already_qualified_axes_cross_at_zero(self):
        spec = ProgressionSpec(axes0=dict(DEFAULT_THRESHOLDS[4]),
                               margins0=(0.5,) * 5, mu=(0.5,) * 5)
        out = simulate_progression(spec)
        assert out.crossings["level4"]["axes"] == 0.0
        assert out.crossings["level4"]["parity"] == 0.0

    def test_logistic_normalizer_runs(self):
        out = simulate_progression(ProgressionSpec(normalizer="logistic",
                                                   normalizer_scale=0.01,
                                                   kappa_bar0=0.6,
                                                   r_budget=30.0))
        assert out.r4 is not None
        assert np.all(np.diff(out.kappa_bar) >= -1e-12)

    def test_csv_export(self, default_run, tmp_path):
        path = tmp_path / "progression.csv"
        default_run.write_csv(path, max_rows=500)
        lines = path.read_text().splitlines()
        assert lines[0].startswith("r,kappa_bar,kappa,capability")
        assert 2 <= len(lines) <= 503
        last = lines[-1].split(",")
        assert float(last[0]) == pytest.approx(default_run.spec.r_budget)
        header = lines[0].split(",")
        assert "level4_all" in header and "level5_all" in header

    def test_serialization(self, default_run):
        blob = json.loads(json.dumps(default_run.to_json()))
        assert blob["r4"] == pytest.approx(default_run.r4)
        assert blob["diagnostics"] is None
