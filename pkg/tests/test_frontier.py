"""Exceedance curves, delegability bins, integral summaries, slope floor."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aai_meter.battery import trace_from_record
from aai_meter.errors import ConfigError, MeterError, NoDataError
from aai_meter.frontier import (
    FrontierEstimate,
    InterventionBudget,
    PolicyRun,
    delegability_frontier,
    frontier_slope,
    frontier_summaries,
    quality_frontier,
)
from aai_meter.stats import ResamplePlan


def traces(qualities_by_task):
    out = []
    for task, qs in qualities_by_task.items():
        for q in qs:
            out.append(trace_from_record({"task_id": task, "quality": q}))
    return out


class TestQualityFrontier:
    def test_step_function_exact(self):
        fr = quality_frontier(traces({"t": [0.8, 0.8, 0.8]}))
        assert fr.auf == 0.8  # exact, no quadrature error
        assert fr.evaluate(0.8) == 1.0  # inclusive threshold
        assert fr.evaluate(0.80001) == 0.0
        assert fr.evaluate(0.2) == 1.0

    def test_degenerate_mass(self):
        assert quality_frontier(traces({"t": [0.0, 0.0]})).auf == 0.0

    def test_self_difference_zero(self):
        fr = quality_frontier(traces({"t": [0.3, 0.9], "u": [0.5]}))
        for tau in (0.1, 0.4, 0.8):
            assert fr.delta_f(fr, tau) == 0.0

    def test_task_weighting(self):
        data = {"a": [1.0], "b": [0.5, 0.5]}
        fr = quality_frontier(traces(data))
        assert fr.auf == pytest.approx(0.75)  # uniform over tasks, not episodes
        assert fr.evaluate(0.6) == pytest.approx(0.5)
        fr = quality_frontier(traces(data), weights={"a": 0.2, "b": 0.8})
        assert fr.auf == pytest.approx(0.6)

    def test_grid_matches_exact_evaluation(self):
        fr = quality_frontier(traces({"a": [0.31, 0.72], "b": [0.5]}))
        for tau, val in zip(fr.taus, fr.values):
            assert val == pytest.approx(fr.evaluate(float(tau)))

    @given(st.lists(st.integers(1, 99), min_size=1, max_size=20))
    def test_nonincreasing_and_starts_at_one(self, percents):
        fr = quality_frontier(traces({"t": [p / 100 for p in percents]}))
        assert fr.evaluate(0.0) == 1.0
        assert all(a >= b for a, b in zip(fr.values, fr.values[1:]))

    def test_validation(self):
        with pytest.raises(NoDataError):
            quality_frontier([])
        tr = traces({"a": [0.5], "b": [0.5]})
        with pytest.raises(ConfigError, match="without weights"):
            quality_frontier(tr, weights={"a": 1.0})
        with pytest.raises(ConfigError, match="without traces"):
            quality_frontier(tr, weights={"a": 0.4, "b": 0.4, "c": 0.2})
        with pytest.raises(ConfigError, match="sum to 1"):
            quality_frontier(tr, weights={"a": 0.4, "b": 0.4})


class TestInterventionBudget:
    def test_endpoints(self):
        b = InterventionBudget(h_max=6.0)
        assert b.allowance(0.0) == 6.0
        assert b.allowance(1.0) == 0.0
        assert b.allowance(0.5) == 3.0

    def test_validation(self):
        with pytest.raises(ConfigError):
            InterventionBudget(h_max=0.0)
        with pytest.raises(ConfigError):
            InterventionBudget(h_max=2.0).allowance(1.5)
        with pytest.raises(ConfigError):
            PolicyRun("r", 1.2, 0.0)
        with pytest.raises(ConfigError):
            PolicyRun("r", 0.5, -1.0)


class TestDelegabilityFrontier:
    BUDGET = InterventionBudget(h_max=4.0)

    def test_fully_autonomous_policy(self):
        est = delegability_frontier([PolicyRun("p", 0.9, 0.0)], self.BUDGET)
        assert all(v == 0.9 for v in est.projected)
        assert est.full_coverage

    def test_admissibility_filter(self):
        runs = [PolicyRun("worker", 0.6, 0.0),
                PolicyRun("assisted", 0.9, self.BUDGET.h_max)]
        est = delegability_frontier(runs, self.BUDGET)
        assert est.projected[0] == 0.9
        assert est.projected[-1] == 0.6
        assert est.projected[5] == 0.6  # allowance 2.0 excludes the heavy run

    def test_raw_already_monotone(self):
        # nested admissible sets make the raw maxima nonincreasing, so the
        # projection must coincide with them
        runs = [PolicyRun(f"r{i}", q, h)
                for i, (q, h) in enumerate([(0.9, 3.5), (0.7, 1.8), (0.65, 0.4),
                                            (0.5, 0.0), (0.85, 2.2)])]
        est = delegability_frontier(runs, self.BUDGET)
        assert est.raw == est.projected
        vals = [v for v in est.projected if v is not None]
        assert all(a >= b for a, b in zip(vals, vals[1:]))

    def test_empty_bin_flagged(self):
        runs = [PolicyRun("needy", 0.8, 1.0)]
        est = delegability_frontier(runs, self.BUDGET)
        assert est.raw[-1] is None  # zero allowance at full autonomy
        assert 1.0 in est.empty_bins
        assert not est.full_coverage

    def test_bootstrap_bands(self):
        rng = np.random.default_rng(3)
        runs = [PolicyRun(f"r{i}", float(q), float(h))
                for i, (q, h) in enumerate(zip(rng.uniform(0.4, 0.9, 12),
                                               rng.uniform(0, 4, 12)))]
        est = delegability_frontier(runs, self.BUDGET,
                                    plan=ResamplePlan(replicates=120, seed=7))
        lo, hi = est.ci_lo[0], est.ci_hi[0]
        assert lo is not None and hi is not None and lo <= hi

    def test_validation(self):
        with pytest.raises(NoDataError):
            delegability_frontier([], self.BUDGET)
        run = [PolicyRun("p", 0.9, 0.0)]
        with pytest.raises(ConfigError, match="cover"):
            delegability_frontier(run, self.BUDGET, bins=[0.0, 0.5])
        with pytest.raises(ConfigError, match="increasing"):
            delegability_frontier(run, self.BUDGET, bins=[0.0, 0.5, 0.5, 1.0])


def constant_estimate(value, bins=None):
    bins = tuple(bins) if bins is not None else tuple(
        round(0.1 * j, 1) for j in range(11))
    vals = tuple(float(value) for _ in bins)
    return FrontierEstimate(bins=bins, raw=vals, projected=vals,
                            ci_lo=(None,) * len(bins),
                            ci_hi=(None,) * len(bins), empty_bins=())


def estimate_from(values, bins):
    vals = tuple(float(v) for v in values)
    return FrontierEstimate(bins=tuple(bins), raw=vals, projected=vals,
                            ci_lo=(None,) * len(bins),
                            ci_hi=(None,) * len(bins), empty_bins=())


class TestFrontierSummaries:
    def test_constant_frontier_analytic(self):
        summary = frontier_summaries(constant_estimate(0.9), q_target=0.65)
        assert summary.fd == pytest.approx(1.0, abs=1e-9)
        assert summary.auf_above == pytest.approx(0.25, abs=1e-9)

    def test_below_target_everywhere(self):
        summary = frontier_summaries(constant_estimate(0.5), q_target=0.65)
        assert summary.fd == 0.0
        assert summary.auf_above == 0.0

    def test_explicit_weights(self):
        nu = [1.0] * 11
        summary = frontier_summaries(constant_estimate(0.9), 0.65, nu=nu)
        assert summary.fd == pytest.approx(1.0, abs=1e-9)
        assert summary.auf_above == pytest.approx(0.25, abs=1e-9)
        spike = [0.0] * 11
        spike[3] = 1.0
        bins = [round(0.1 * j, 1) for j in range(11)]
        values = [0.9 if b <= 0.3 else 0.4 for b in bins]
        summary = frontier_summaries(estimate_from(values, bins), 0.65, nu=spike)
        assert summary.fd == 1.0
        assert summary.auf_above == pytest.approx(0.25)

    def test_later_dominating_estimate(self):
        bins = [round(0.1 * j, 1) for j in range(11)]
        early = estimate_from([0.7 - 0.02 * j for j in range(11)], bins)
        late = estimate_from([0.8 - 0.02 * j for j in range(11)], bins)
        summary = frontier_summaries(late, 0.65, earlier=early)
        assert summary.delta_vs_earlier > 0

    def test_bin_mismatch(self):
        other = constant_estimate(0.9, bins=[0.0, 0.5, 1.0])
        with pytest.raises(MeterError, match="different"):
            frontier_summaries(constant_estimate(0.9), 0.65, earlier=other)

    def test_needs_two_bins(self):
        est = constant_estimate(0.9, bins=[0.0, 1.0])
        broken = FrontierEstimate(bins=est.bins, raw=(0.9, None),
                                  projected=(0.9, None), ci_lo=(None, None),
                                  ci_hi=(None, None), empty_bins=(1.0,))
        with pytest.raises(MeterError, match="two non-empty"):
            frontier_summaries(broken, 0.5)

    @settings(max_examples=80, deadline=None)
    @given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)),
                    min_size=11, max_size=11),
           st.floats(0.1, 0.9))
    def test_dominance_monotonicity(self, pairs, q_target):
        bins = [round(0.1 * j, 1) for j in range(11)]
        hi = sorted((max(p) for p in pairs), reverse=True)
        lo = sorted((min(p) for p in pairs), reverse=True)
        lo = [min(a, b) for a, b in zip(lo, hi)]
        s_hi = frontier_summaries(estimate_from(hi, bins), q_target)
        s_lo = frontier_summaries(estimate_from(lo, bins), q_target)
        assert s_hi.fd >= s_lo.fd - 1e-12
        assert s_hi.auf_above >= s_lo.auf_above - 1e-12

    def test_refinement_converges(self):
        f = lambda a: 0.6 + 0.3 * math.cos(a)
        coarse = [j / 10 for j in range(11)]
        fine = [j / 20 for j in range(21)]
        auf_c = frontier_summaries(
            estimate_from([f(a) for a in coarse], coarse), 0.1).auf_above
        auf_f = frontier_summaries(
            estimate_from([f(a) for a in fine], fine), 0.1).auf_above
        assert abs(auf_c - auf_f) < 1e-3

    def test_writes_back_to_estimate(self):
        est = constant_estimate(0.9)
        frontier_summaries(est, 0.65)
        assert est.fd == pytest.approx(1.0)
        assert est.q_target == 0.65


class TestFrontierSlope:
    def test_linear_passes_floor(self):
        r = [0, 10, 20, 30]
        auf = [0.5 + 0.01 * x for x in r]
        verdict = frontier_slope(r, auf, floor=0.005)
        assert verdict.slope == pytest.approx(0.01)
        assert verdict.passed

    def test_flat_fails_positive_floor(self):
        verdict = frontier_slope([0, 10, 20], [0.5, 0.5, 0.5], floor=0.001)
        assert verdict.slope == 0.0
        assert not verdict.passed

    def test_zero_floor_accepts_nonnegative(self):
        verdict = frontier_slope([0, 10, 20], [0.5, 0.5, 0.5], floor=0.0)
        assert verdict.passed

    def test_constant_resource_errors(self):
        with pytest.raises(MeterError):
            frontier_slope([5, 5, 5], [0.1, 0.2, 0.3], floor=0.0)

    def test_ci_with_plan(self):
        rng = np.random.default_rng(1)
        r = np.arange(12.0)
        auf = 0.3 + 0.01 * r + rng.normal(0, 0.002, 12)
        verdict = frontier_slope(r, auf, floor=0.001,
                                 plan=ResamplePlan(replicates=200, seed=4))
        assert verdict.ci is not None
        assert verdict.ci[0] <= verdict.slope <= verdict.ci[1]
