import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fairlens.core import Dataset, DatasetError
from fairlens.dif import dif_analyze, feature_dif, rest_score
from fairlens.regression import EQUAL_COUNT, BinSpec
from fairlens.synth import ItemResponseSpec, generate_items, make_rng


def first_item(**kwargs):
    return dif_analyze(generate_items(ItemResponseSpec(**kwargs)))[0]


class TestDifAnalyze:
    def test_no_dif(self):
        report = first_item(delta=0.0, seed=1)
        assert report.weighted_gap < 0.05 and not report.flagged

    def test_injected_gap(self):
        report = first_item(delta=0.2, seed=1)
        assert report.weighted_gap == pytest.approx(0.2, abs=0.04)
        assert report.flagged
        rates = report.per_stratum_rates
        assert all(rates[s]["a"] > rates[s]["b"] for s in rates)

    def test_impact_is_not_dif(self):
        ds = generate_items(ItemResponseSpec(delta=0.0, ability_shift=0.5, seed=2))
        matched = dif_analyze(ds, ability="target")
        assert not any(r.flagged for r in matched)
        # unconditional gaps in correct rate are larger for every item
        raw = [abs(ds.items[k][ds.mask("a")].mean() - ds.items[k][ds.mask("b")].mean())
               for k in ds.item_ids]
        assert all(r > m.weighted_gap for r, m in zip(raw, matched))
        assert max(raw) > 0.05

    def test_label_permutation(self):
        ds = generate_items(ItemResponseSpec(n_per_group=500, delta=0.1, seed=3))
        swapped = Dataset(groups=np.where(ds.groups == "a", "b", "a"), scores=ds.scores,
                          targets=ds.targets, items=ds.items)
        for r1, r2 in zip(dif_analyze(ds), dif_analyze(swapped)):
            assert r1.weighted_gap == pytest.approx(r2.weighted_gap, abs=1e-12)
            for s in r1.per_stratum_rates:
                assert r1.per_stratum_rates[s]["a"] == r2.per_stratum_rates[s]["b"]

    def test_rest_score_excludes_item(self):
        ds = generate_items(ItemResponseSpec(n_per_group=300, n_items=5, seed=4))
        flipped_items = dict(ds.items)
        flipped_items["q0"] = 1 - ds.items["q0"]
        flipped = Dataset(groups=ds.groups, scores=ds.scores, targets=ds.targets, items=flipped_items)
        assert np.array_equal(rest_score(ds, "q0"), rest_score(flipped, "q0"))
        oracle = np.mean([ds.items[k] for k in ("q1", "q2", "q3", "q4")], axis=0)
        assert np.allclose(rest_score(ds, "q0"), oracle)
        a = dif_analyze(ds)[0]
        b = dif_analyze(flipped)[0]
        assert a.stratum_sizes == b.stratum_sizes

    def test_convergence(self):
        wins = 0
        for seed in range(10):
            small = first_item(n_per_group=1000, delta=0.0, seed=seed).weighted_gap
            large = first_item(n_per_group=10000, delta=0.0, seed=seed).weighted_gap
            wins += large < small
        assert wins >= 9

    def test_no_items(self):
        with pytest.raises(DatasetError):
            dif_analyze(Dataset(groups=["a", "b"], scores=[1, 2], targets=[1, 2]))

    def test_single_item_rest_score(self):
        ds = Dataset(groups=["a", "b"] * 5, scores=range(10), targets=range(10), items={"q": [0, 1] * 5})
        with pytest.raises(DatasetError):
            dif_analyze(ds)
        assert len(dif_analyze(ds, ability="target", strata=BinSpec(EQUAL_COUNT, 2, 1))) == 1

    def test_undiagnosable(self):
        ds = Dataset(groups=["a", "b"] * 4, scores=range(8), targets=range(8),
                     items={"q1": [0, 1] * 4, "q2": [1, 1, 0, 0] * 2})
        report = dif_analyze(ds)[0]
        assert report.weighted_gap is None and not report.diagnosable and not report.flagged
        assert report.excluded_strata

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000))
    def test_gap_in_unit_interval(self, seed):
        rng = np.random.default_rng(seed)
        n = 120
        items = {f"q{i}": rng.integers(0, 2, n) for i in range(3)}
        ds = Dataset(groups=rng.choice(["a", "b", "c"], n), scores=rng.random(n),
                     targets=rng.random(n), items=items)
        for r in dif_analyze(ds, strata=BinSpec(EQUAL_COUNT, 3, 2)):
            if r.weighted_gap is not None:
                assert 0 <= r.weighted_gap <= 1
                assert r.flagged == (r.weighted_gap >= 0.05)


def loan_fixture(shift, n=20000, seed=5):
    rng = make_rng(seed)
    groups = np.repeat(["a", "b"], n // 2)
    r = rng.standard_normal(n)
    income = 2.0 * r + rng.standard_normal(n) + shift * (groups == "b")
    return Dataset(groups=groups, scores=r, targets=r, features={"income": income,
                                                                "flag": (income > 0).astype(float),
                                                                "const": np.ones(n)})


class TestFeatureDif:
    def test_independent_given_score(self):
        report = feature_dif(loan_fixture(0.0), "income")
        assert report.weighted_gap < 0.05 and not report.flagged
        assert report.matching == "score"

    def test_shifted_income(self):
        report = feature_dif(loan_fixture(-1.0), "income")
        assert report.flagged
        assert feature_dif(loan_fixture(-1.0), "flag").flagged

    def test_constant_feature(self):
        assert feature_dif(loan_fixture(-1.0), "const").weighted_gap == 0.0

    def test_item_column(self):
        ds = generate_items(ItemResponseSpec(n_per_group=2000, delta=0.2, seed=6))
        assert feature_dif(ds, "q0").flagged
