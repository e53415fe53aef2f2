import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fairlens.core import (
    FAIL,
    PASS,
    UNDEFINED,
    ConfusionMatrix,
    CriterionReport,
    Dataset,
    DatasetError,
    ThresholdMap,
    correlations,
    dump_dataset,
    dumps_dataset,
    load_dataset,
    partial_correlation,
    pearson,
    point_biserial,
    pooled_ols,
    spread,
)


def small(groups, scores, targets=None):
    targets = scores if targets is None else targets
    return Dataset(groups=groups, scores=scores, targets=targets)


class TestLoadDataset:
    def test_four_rows(self):
        ds = load_dataset("group,score,target\na,1,0\na,2,1\nb,3,0\nb,4,1\n")
        assert len(ds) == 4
        assert ds.group_labels == ("a", "b")
        assert list(ds.scores) == [1, 2, 3, 4]
        assert ds.decisions is None

    def test_bad_decision_names_row(self):
        text = "group,score,target,decision\na,1,0,1\na,2,1,2\nb,3,0,0\nb,4,1,1\n"
        with pytest.raises(DatasetError) as err:
            load_dataset(text)
        assert err.value.row == 2
        assert "row 2" in str(err.value)

    def test_item_columns(self):
        text = "group,score,target,item_q1,item_q2\na,1,0,1,0\na,2,1,0,0\nb,3,0,1,1\nb,4,1,0,1\n"
        ds = load_dataset(text)
        assert ds.item_ids == ("q1", "q2")
        assert list(ds.items["q2"]) == [0, 0, 1, 1]

    def test_missing_column(self):
        with pytest.raises(DatasetError, match="target"):
            load_dataset("group,score\na,1\n")

    def test_non_numeric_score(self):
        with pytest.raises(DatasetError) as err:
            load_dataset("group,score,target\na,1,0\na,x,1\nb,3,0\nb,4,1\n")
        assert err.value.row == 2

    def test_non_finite_score_rejected(self):
        with pytest.raises(DatasetError):
            load_dataset("group,score,target\na,1,0\na,inf,1\nb,3,0\nb,4,1\n")

    def test_inconsistent_items(self):
        with pytest.raises(DatasetError, match="item"):
            load_dataset("group,score,target,item_q1\na,1,0,1\na,2,1,\nb,3,0,1\nb,4,1,0\n")

    def test_schema_mapping(self):
        ds = load_dataset("race,sat,gpa\nx,1,2\nx,2,3\ny,3,1\ny,4,0\n",
                          {"group": "race", "score": "sat", "target": "gpa"})
        assert list(ds.targets) == [2, 3, 1, 0]

    def test_group_invariants(self):
        with pytest.raises(DatasetError, match="at least 2 groups"):
            load_dataset("group,score,target\na,1,0\na,2,1\n")
        with pytest.raises(DatasetError, match="fewer than 2 records"):
            load_dataset("group,score,target\na,1,0\na,2,1\nb,3,0\n")
        # the raw constructor accepts small fixtures
        assert len(load_dataset("group,score,target\na,1,0\n", check_groups=False)) == 1

    def test_extra_columns(self):
        ds = load_dataset("group,score,target,income,id\na,1,0,5,r1\na,2,1,6,r2\nb,3,0,7,r3\nb,4,1,8,r4\n")
        assert list(ds.features) == ["income"]

    def test_round_trip(self):
        rng = np.random.default_rng(0)
        ds = Dataset(groups=["a", "b"] * 10, scores=rng.normal(size=20),
                     targets=rng.normal(size=20), decisions=rng.integers(0, 2, 20),
                     items={"q1": rng.integers(0, 2, 20)}, features={"x": rng.random(20)})
        again = load_dataset(dumps_dataset(ds))
        assert again == ds
        buf = io.StringIO()
        dump_dataset(again, buf)
        assert buf.getvalue() == dumps_dataset(ds)

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.tuples(st.sampled_from(["a", "b", "c"]),
                              st.floats(-1e6, 1e6, allow_nan=False),
                              st.floats(-1e6, 1e6, allow_nan=False)), min_size=1, max_size=30))
    def test_round_trip_property(self, rows):
        g, r, y = zip(*rows)
        ds = Dataset(groups=g, scores=r, targets=y)
        assert load_dataset(dumps_dataset(ds), check_groups=False) == ds


class TestDataset:
    def test_immutable(self):
        ds = small(["a", "b"], [1.0, 2.0])
        with pytest.raises(ValueError):
            ds.scores[0] = 5.0

    def test_binary_checks(self):
        with pytest.raises(DatasetError):
            Dataset(groups=["a"], scores=[1], targets=[1], decisions=[2])
        with pytest.raises(DatasetError):
            Dataset(groups=["a"], scores=[1], targets=[1], items={"q": [3]})

    def test_binarize(self):
        ds = small(["a", "b", "c", "c"], [1, 2, 3, 4])
        assert ds.binarize("c").group_labels == ("rest", "c")


class TestConfusionMatrix:
    def test_rates(self):
        cm = ConfusionMatrix(tp=2, fp=1, fn=0, tn=1)
        assert cm.tpr == 1.0 and cm.ppv == pytest.approx(2 / 3)
        assert cm.tnr == 0.5 and cm.npv == 1.0

    def test_undefined_rates(self):
        cm = ConfusionMatrix(tp=0, fp=0, fn=0, tn=3)
        assert cm.tpr is None and cm.ppv is None
        assert cm.tnr == 1.0

    def test_invalid(self):
        with pytest.raises(ValueError):
            ConfusionMatrix(0, 0, 0, 0)
        with pytest.raises(ValueError):
            ConfusionMatrix(-1, 1, 0, 0)


class TestThresholdMap:
    def test_round_trip(self):
        tm = ThresholdMap({"a": 0.25, "b": math.inf}, 0.5)
        again = ThresholdMap.loads(tm.dumps())
        assert again == tm
        assert "__target__,0.5" in tm.dumps()

    def test_covers(self):
        with pytest.raises(DatasetError, match="b"):
            ThresholdMap({"a": 0.0}, 0.5).check_covers(small(["a", "b"], [1, 2]))


class TestCriterionReport:
    def test_verdicts(self):
        assert CriterionReport.build("x", {"a": 1.0, "b": 1.005}, 0.005, 0.01).verdict == PASS
        assert CriterionReport.build("x", {"a": 1.0, "b": 1.5}, 0.5, 0.01).verdict == FAIL
        assert CriterionReport.build("x", {"a": None, "b": 1.0}, 0.0, 0.01).verdict == UNDEFINED
        assert CriterionReport.build("x", {"a": (1.0, None)}, 0.0, 0.01).verdict == UNDEFINED

    def test_spread(self):
        assert spread([0.2, 0.5, 0.3]) == pytest.approx(0.3)
        assert spread([math.inf, math.inf]) == 0.0
        assert spread([1.0, math.inf]) == math.inf
        assert spread([None]) is None


class TestCorrelations:
    def test_point_biserial_examples(self):
        assert point_biserial(small(["1", "1", "0", "0"], [1, 1, 0, 0]), "1") == pytest.approx(1.0)
        assert point_biserial(small(["1", "1", "0", "0"], [2, 0, 1, 1]), "1") == pytest.approx(0.0)
        assert point_biserial(small(["1", "1", "0", "0"], [3, 1, 1, 3]), "1") == pytest.approx(0.0)

    def test_point_biserial_hand(self):
        # indicator (1,1,0,0), scores (3,1,0,0): cov = 0.5, sd_a = 0.5, sd_r = sqrt(1.5)
        value = point_biserial(small(["1", "1", "0", "0"], [3, 1, 0, 0]), "1")
        assert value == pytest.approx(0.5 / (0.5 * math.sqrt(1.5)))

    def test_needs_two_groups(self):
        with pytest.raises(DatasetError, match="binarize"):
            point_biserial(small(["a", "b", "c"], [1, 2, 3]), "a")

    def test_zero_variance_undefined(self):
        assert point_biserial(small(["1", "0"], [1, 1]), "1") is None

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-100, 100, allow_nan=False), min_size=6, max_size=40))
    def test_antisymmetric(self, scores):
        groups = ["x", "y"] * (len(scores) // 2)
        ds = small(groups, scores[: len(groups)])
        a, b = point_biserial(ds, "x"), point_biserial(ds, "y")
        if a is None:
            assert b is None
        else:
            assert a == pytest.approx(-b, abs=1e-12)

    def test_r_equals_y_partials_undefined(self):
        ds = small(["1", "0"] * 10, np.arange(20.0))
        triple = correlations(ds, "1")
        assert triple.rho_ry == 1.0
        assert triple.rho_ar_given_y is None and triple.rho_ay_given_r is None

    def test_partials_match_residual_oracle(self):
        rng = np.random.default_rng(5)
        a = (rng.random(500) < 0.4).astype(float)
        r = 0.5 * a + rng.normal(size=500)
        y = 0.3 * a + 0.6 * r + rng.normal(size=500)
        ds = Dataset(groups=np.where(a == 1, "1", "0"), scores=r, targets=y)
        triple = correlations(ds, "1")

        def resid(u, v):
            design = np.column_stack([np.ones_like(v), v])
            coef, *_ = np.linalg.lstsq(design, u, rcond=None)
            return u - design @ coef

        oracle_ar_y = np.corrcoef(resid(a, y), resid(r, y))[0, 1]
        oracle_ay_r = np.corrcoef(resid(a, r), resid(y, r))[0, 1]
        assert triple.rho_ar_given_y == pytest.approx(oracle_ar_y, abs=1e-9)
        assert triple.rho_ay_given_r == pytest.approx(oracle_ay_r, abs=1e-9)

    def test_partial_identity_degenerate(self):
        assert partial_correlation(0.5, 1.0, 0.5) is None

    def test_independent_groups(self):
        rng = np.random.default_rng(1)
        r = rng.normal(size=20000)
        ds = Dataset(groups=rng.choice(["1", "0"], 20000), scores=r, targets=r + rng.normal(size=20000))
        triple = correlations(ds, "1")
        assert abs(triple.rho_ar) < 0.03 and abs(triple.rho_ay) < 0.03

    def test_gaussian_recovery(self):
        from fairlens.synth import TargetCorrelationSpec, generate_correlated
        ds = generate_correlated(TargetCorrelationSpec(0.2, 0.5, n=100_000, seed=1), 2)
        triple = correlations(ds, "1")
        assert triple.rho_ay == pytest.approx(0.2, abs=0.02)
        assert triple.rho_ry == pytest.approx(0.5, abs=0.02)

    def test_pearson_constant(self):
        assert pearson([1, 1, 1], [1, 2, 3]) is None


class TestPooledOLS:
    def test_exact_line(self):
        r = np.arange(10.0)
        fit = pooled_ols(small(["a", "b"] * 5, r, 2 * r + 1))
        assert fit.slope == pytest.approx(2) and fit.intercept == pytest.approx(1)
        assert np.allclose(fit.residuals, 0)

    def test_identity(self):
        fit = pooled_ols(small(["a", "b", "a"], [0, 1, 2], [0, 1, 2]))
        assert fit.slope == pytest.approx(1) and fit.intercept == pytest.approx(0, abs=1e-12)

    def test_target_predictor(self):
        fit = pooled_ols(small(["a", "b", "a"], [0, 2, 4], [0, 1, 2]), predictor="target")
        assert fit.slope == pytest.approx(2)

    def test_constant_predictor(self):
        with pytest.raises(DatasetError):
            pooled_ols(small(["a", "b"], [1, 1], [0, 1]))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10_000), st.integers(3, 200))
    def test_residual_properties(self, seed, n):
        rng = np.random.default_rng(seed)
        r = rng.normal(size=n) * rng.uniform(0.1, 100)
        y = rng.normal(size=n) + rng.uniform(-5, 5) * r
        fit = pooled_ols(small((["a", "b"] * n)[:n], r, y))
        scale = np.abs(y).sum() + 1
        assert abs(fit.residuals.sum()) / scale < 1e-9
        assert abs(np.dot(fit.residuals, r - r.mean())) / (scale * (np.abs(r).sum() + 1)) < 1e-9
