"""Composite aggregation: geometric mean, gradients, uniformity, cores."""
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from aai_meter.axes import AxisResult
from aai_meter.composite import (
    CORE_DOMAINS,
    aai_core,
    aai_index,
    compute_composite,
    index_gradient,
    jaggedness_star,
    lower_median,
)
from aai_meter.battery import WEIGHT_PRESETS
from aai_meter.errors import MeterError

EQ2 = {"A": 1.0, "G": 1.0}

pos_scores = st.dictionaries(
    st.sampled_from(list("AGPMTRSEW")),
    st.floats(0.01, 1.0, allow_nan=False),
    min_size=2, max_size=9,
)


class TestAaiIndex:
    def test_equal_values_any_weights(self):
        scores = {a: 0.5 for a in "AGPT"}
        weights = {"A": 1.0, "G": 2.0, "P": 0.5, "T": 3.0}
        assert aai_index(scores, weights) == pytest.approx(0.5)

    def test_strict_zero_annihilates(self):
        assert aai_index({"A": 0.0, "G": 0.9}, EQ2, "strict") == 0.0

    def test_hand_example_sqrt(self):
        assert aai_index({"A": 0.25, "G": 1.0}, EQ2) == pytest.approx(0.5)

    def test_floor_substitutes(self):
        val = aai_index({"A": 0.0, "G": 1.0}, EQ2, "floor")
        assert val == pytest.approx(math.sqrt(0.01))

    def test_no_axes_error(self):
        with pytest.raises(MeterError):
            aai_index({}, {})
        with pytest.raises(MeterError):
            aai_index({"A": 0.5}, {"A": 0.0})

    def test_unknown_policy(self):
        with pytest.raises(MeterError):
            aai_index({"A": 0.5}, {"A": 1.0}, "maybe")

    @given(pos_scores)
    def test_equal_profile_returns_value(self, scores):
        v = 0.37
        flat = {ax: v for ax in scores}
        w = {ax: 1.0 + i for i, ax in enumerate(scores)}
        assert aai_index(flat, w) == pytest.approx(v)

    @given(pos_scores, st.floats(0.1, 10.0))
    def test_weight_scale_free(self, scores, c):
        w = {ax: 1.0 for ax in scores}
        scaled = {ax: c for ax in scores}
        assert aai_index(scores, w) == pytest.approx(aai_index(scores, scaled))

    @given(pos_scores, st.data())
    def test_monotone_in_each_axis(self, scores, data):
        ax = data.draw(st.sampled_from(sorted(scores)))
        w = {a: 1.0 for a in scores}
        base = aai_index(scores, w)
        bumped = dict(scores)
        bumped[ax] = min(1.0, scores[ax] + data.draw(st.floats(0.0, 0.5)))
        assert aai_index(bumped, w) >= base - 1e-12

    def test_preset_numbers(self):
        soft = WEIGHT_PRESETS["software"]
        assert (soft["P"], soft["M"], soft["T"], soft["E"], soft["R"]) == (1.25, 1.25, 1.25, 0.0, 1.5)
        robo = WEIGHT_PRESETS["robotics"]
        assert (robo["E"], robo["P"], robo["T"], robo["R"]) == (1.25, 1.1, 1.1, 1.5)
        dflt = WEIGHT_PRESETS["default"]
        assert (dflt["R"], dflt["E"]) == (1.5, 0.5)


class TestGradient:
    def test_symmetry(self):
        g = index_gradient({"A": 0.5, "G": 0.5}, EQ2)
        assert g["A"] == pytest.approx(0.5)
        assert g["G"] == pytest.approx(0.5)

    def test_zero_axis_undefined(self):
        g = index_gradient({"A": 0.0, "G": 0.5}, EQ2)
        assert g["A"] is None
        assert g["G"] == 0.0  # index pinned at 0 by the other axis

    def test_matches_finite_differences_in_bulk(self):
        rng = np.random.default_rng(7)
        axes = list("AGPMTRSW")
        weights = {ax: w for ax, w in zip(axes, (1, 1, 1.25, 1.25, 1.25, 1.5, 1, 1))}
        h = 1e-4
        for _ in range(300):
            scores = {ax: float(v) for ax, v in zip(axes, rng.uniform(0.05, 0.95, len(axes)))}
            grad = index_gradient(scores, weights)
            probe = str(rng.choice(axes))
            up = dict(scores, **{probe: scores[probe] + h})
            dn = dict(scores, **{probe: scores[probe] - h})
            fd = (aai_index(up, weights) - aai_index(dn, weights)) / (2 * h)
            assert grad[probe] == pytest.approx(fd, abs=1e-6)


class TestJaggedness:
    def test_uniform_profile(self):
        u, adj, flag = jaggedness_star({"A": 0.9, "G": 0.9, "P": 0.9},
                                       {"A": 1, "G": 1, "P": 1})
        assert u == 1.0
        assert adj == pytest.approx(0.9)
        assert not flag

    def test_hand_multiplier(self):
        scores = {"A": 0.2, "G": 0.8, "P": 0.8}
        u, adj, _ = jaggedness_star(scores, {a: 1.0 for a in scores})
        assert u == pytest.approx(0.25)
        assert adj == pytest.approx(aai_index(scores, {a: 1.0 for a in scores}) * 0.5)

    def test_lambda_zero_no_penalty(self):
        scores = {"A": 0.2, "G": 0.8}
        u, adj, _ = jaggedness_star(scores, EQ2, lam=0.0)
        assert adj == pytest.approx(aai_index(scores, EQ2))

    def test_lower_median_even_length(self):
        assert lower_median([0.2, 0.4, 0.6, 0.8]) == 0.4
        scores = {"A": 0.2, "G": 0.4, "P": 0.6, "M": 0.8}
        u, _, _ = jaggedness_star(scores, {a: 1.0 for a in scores}, zero_policy="floor")
        assert u == pytest.approx(0.5)

    def test_zero_median_flagged(self):
        scores = {"A": 0.0, "G": 0.0, "P": 0.5}
        u, adj, flag = jaggedness_star(scores, {a: 1.0 for a in scores})
        assert u is None
        assert adj == 0.0
        assert flag

    @given(pos_scores)
    def test_adjusted_never_exceeds_index(self, scores):
        w = {a: 1.0 for a in scores}
        _, adj, _ = jaggedness_star(scores, w)
        assert adj <= aai_index(scores, w) + 1e-12


class TestCore:
    def test_all_ones_eligible(self):
        res = aai_core({d: 1.0 for d in CORE_DOMAINS})
        assert res["score"] == pytest.approx(1.0)
        assert res["eligible"]

    def test_one_weak_core(self):
        scores = {d: 1.0 for d in CORE_DOMAINS}
        scores["working_memory"] = 0.5
        res = aai_core(scores)
        assert res["score"] == pytest.approx(0.5 ** (1 / 6))
        assert res["score"] == pytest.approx(0.8909, abs=1e-4)
        assert not res["eligible"]

    def test_zero_core_annihilates(self):
        scores = {d: 1.0 for d in CORE_DOMAINS}
        scores["fluid_reasoning"] = 0.0
        assert aai_core(scores)["score"] == 0.0

    def test_missing_core_ineligible(self):
        scores = {d: 1.0 for d in CORE_DOMAINS if d != "crystallized"}
        res = aai_core(scores)
        assert res["score"] is None
        assert not res["eligible"]
        assert "crystallized" in res["reason"]

    def test_above_human_scores_allowed(self):
        res = aai_core({d: 1.2 for d in CORE_DOMAINS})
        assert res["score"] == pytest.approx(1.2)
        assert res["eligible"]


def axis_res(ax, value, status="ok", ci=None):
    return AxisResult(axis=ax, raw=value, value=value, status=status, n=10, ci=ci)


class TestComputeComposite:
    def _results(self):
        vals = {"A": 0.64, "G": 0.33, "P": 0.47, "M": 0.43, "T": 0.59,
                "R": 0.0, "S": 0.18, "W": 0.58, "$": 0.37}
        out = {ax: axis_res(ax, v) for ax, v in vals.items()}
        out["E"] = AxisResult(axis="E", raw=None, value=None, status="no_data")
        return out

    def test_policies_both_reported(self):
        res = compute_composite(self._results(), WEIGHT_PRESETS["software"],
                                zero_policy="strict", weight_preset="software")
        assert res.strict_index == 0.0
        assert res.floor_index > 0.0
        assert res.policies_diverge
        assert res.index == 0.0

    def test_exclusions(self):
        res = compute_composite(self._results(), WEIGHT_PRESETS["software"])
        assert res.excluded["E"] == "zero weight"
        assert "E" not in res.included
        res2 = compute_composite(self._results(), WEIGHT_PRESETS["default"])
        assert res2.excluded["E"] == "no_data"

    def test_floor_policy_records_substitution(self):
        res = compute_composite(self._results(), WEIGHT_PRESETS["software"],
                                zero_policy="floor")
        assert res.floored_axes == ["R"]
        assert res.index == pytest.approx(res.floor_index)
        assert res.gradient["R"] is not None

    def test_delta_ci_present_when_axis_cis_exist(self):
        results = {ax: axis_res(ax, v, ci=(max(v - 0.05, 0.001), min(v + 0.05, 1.0)))
                   for ax, v in {"A": 0.6, "G": 0.4, "P": 0.5}.items()}
        res = compute_composite(results, {"A": 1.0, "G": 1.0, "P": 1.0})
        assert res.ci is not None
        assert res.ci[0] < res.index < res.ci[1]

    def test_core_attached(self):
        res = compute_composite(self._results(), WEIGHT_PRESETS["software"],
                                core_scores={d: 1.0 for d in CORE_DOMAINS})
        assert res.core["eligible"]

    def test_json_serializable(self):
        import json
        res = compute_composite(self._results(), WEIGHT_PRESETS["software"])
        assert json.loads(json.dumps(res.to_json()))
