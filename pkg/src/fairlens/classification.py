"""Threshold-based parity criteria, rank criteria and the per-group cutoff solver.

Classification rule throughout: a record is predicted positive iff
``score >= r_a*`` for its group, and is a ground-truth positive iff
``target >= y*``.

Ratios whose denominator is zero are ``None`` when the numerator is also
zero and ``inf`` otherwise, so that e.g. ``(TP+FP)/TP`` with ``TP = 0`` and
``FP > 0`` stays comparable across groups. Rates whose denominator contains
the numerator (TPR, PPV, ...) are only ever ``None``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np
from scipy.stats import rankdata

from .core import (
    DEFAULT_TOLERANCE,
    ConfusionMatrix,
    CriterionReport,
    Dataset,
    DatasetError,
    ThresholdMap,
    spread,
)
from .regression import EQUAL_COUNT, BinSpec
from .synth import confusion_matrices

INF = math.inf


def extended_ratio(num: float, den: float) -> float | None:
    if den > 0:
        return num / den
    if num > 0:
        return INF
    return None


@dataclass(frozen=True)
class ThorndikianParams:
    """Weights of the (lambda1, lambda2) family.

    (1, 0) reduces to equal PPV and NPV, (0, 1) to equal TPR and TNR, and
    (1, 1) to the constant-ratio condition on both classes.
    """

    lambda1: float
    lambda2: float

    def __post_init__(self):
        for name in ("lambda1", "lambda2"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")


# ---------------------------------------------------------------------------
# Per-matrix values
# ---------------------------------------------------------------------------

def thorndike_value(cm: ConfusionMatrix) -> float | None:
    """Predicted positives over ground-truth positives, (TP+FP)/(TP+FN)."""
    return extended_ratio(cm.tp + cm.fp, cm.tp + cm.fn)


def thorndikian_values(cm: ConfusionMatrix, params: ThorndikianParams) -> tuple:
    l1, l2 = params.lambda1, params.lambda2
    return (extended_ratio(cm.tp + l1 * cm.fp, cm.tp + l2 * cm.fn),
            extended_ratio(cm.tn + l1 * cm.fn, cm.tn + l2 * cm.fp))


def _component_values(name: str, params: ThorndikianParams | None) -> Callable:
    if name == "thorndike_ratio":
        return lambda cm: (thorndike_value(cm),)
    if name == "cole_tpr":
        return lambda cm: (cm.tpr,)
    if name == "linn_ppv":
        return lambda cm: (cm.ppv,)
    if name == "separation":
        return lambda cm: (cm.tpr, cm.tnr)
    if name == "sufficiency":
        return lambda cm: (cm.ppv, cm.npv)
    if name == "thorndikian":
        if params is None:
            raise ValueError("thorndikian needs ThorndikianParams")
        return lambda cm: thorndikian_values(cm, params)
    raise ValueError(f"unknown confusion-matrix criterion {name!r}")


CRITERION_ALIASES = {
    "peterson_novick_separation": "separation",
    "equalized_odds": "separation",
    "peterson_novick_sufficiency": "sufficiency",
    "equal_opportunity": "cole_tpr",
    "predictive_parity": "linn_ppv",
}
MATRIX_CRITERIA = ("thorndike_ratio", "cole_tpr", "linn_ppv", "separation", "sufficiency",
                   "thorndikian")


def canonical_criterion(name: str) -> str:
    name = CRITERION_ALIASES.get(name, name)
    if name not in MATRIX_CRITERIA:
        raise ValueError(f"unknown confusion-matrix criterion {name!r}")
    return name


def _relative_spread(values) -> float | None:
    defined = [v for v in values if v is not None]
    if not defined:
        return None
    hi, lo = max(defined), min(defined)
    if hi == lo:
        return 0.0
    return INF if lo == 0 else hi / lo - 1.0


def matrix_report(name: str, matrices: Mapping[str, ConfusionMatrix],
                  tolerance: float = DEFAULT_TOLERANCE, params: ThorndikianParams | None = None,
                  mode: str = "absolute", extra_details: Mapping | None = None) -> CriterionReport:
    """Evaluate a parity criterion on already-counted confusion matrices.

    Disparity is the max pairwise difference across groups, taken per
    condition; two-condition criteria use the larger of the two.
    """
    name = canonical_criterion(name)
    if mode not in ("absolute", "relative"):
        raise ValueError("mode must be 'absolute' or 'relative'")
    spread_fn = spread if mode == "absolute" else _relative_spread
    values_of = _component_values(name, params)
    per_group = {g: values_of(cm) for g, cm in matrices.items()}
    n_components = len(next(iter(per_group.values())))
    spreads = [spread_fn([v[i] for v in per_group.values()]) for i in range(n_components)]
    disparity = None if any(s is None for s in spreads) else max(spreads)
    shown = {g: (v[0] if n_components == 1 else tuple(v)) for g, v in per_group.items()}
    details = {"matrices": {g: cm.as_dict() for g, cm in matrices.items()}, "mode": mode}
    if params is not None and name == "thorndikian":
        details["lambda1"], details["lambda2"] = params.lambda1, params.lambda2
    details.update(extra_details or {})
    return CriterionReport.build(name, shown, disparity, tolerance, details=details)


# ---------------------------------------------------------------------------
# Dataset-level criteria
# ---------------------------------------------------------------------------

def ground_truth_positive(dataset: Dataset, y_star: float) -> np.ndarray:
    return dataset.targets >= y_star


def predicted_positive(dataset: Dataset, thresholds: ThresholdMap) -> np.ndarray:
    thresholds.check_covers(dataset)
    cut = np.array([thresholds.cutoff(g) for g in dataset.groups]) if len(dataset) else np.array([])
    return dataset.scores >= cut


def confusion_by_group(dataset: Dataset, thresholds: ThresholdMap) -> dict[str, ConfusionMatrix]:
    pred = predicted_positive(dataset, thresholds)
    truth = ground_truth_positive(dataset, thresholds.target_cutoff)
    out = {}
    for g in dataset.group_labels:
        m = dataset.mask(g)
        p, t = pred[m], truth[m]
        out[g] = ConfusionMatrix(
            tp=int(np.sum(p & t)), fp=int(np.sum(p & ~t)),
            fn=int(np.sum(~p & t)), tn=int(np.sum(~p & ~t)))
    return out


def _dataset_report(name, dataset, thresholds, tolerance, params=None, mode="absolute"):
    return matrix_report(
        name, confusion_by_group(dataset, thresholds), tolerance, params, mode,
        extra_details={"thresholds": dict(thresholds.per_group_cutoff),
                       "target_cutoff": thresholds.target_cutoff})


def thorndike_ratio(dataset: Dataset, thresholds: ThresholdMap,
                    tolerance: float = DEFAULT_TOLERANCE, mode: str = "absolute") -> CriterionReport:
    return _dataset_report("thorndike_ratio", dataset, thresholds, tolerance, mode=mode)


def cole_tpr(dataset: Dataset, thresholds: ThresholdMap,
             tolerance: float = DEFAULT_TOLERANCE) -> CriterionReport:
    return _dataset_report("cole_tpr", dataset, thresholds, tolerance)


def linn_ppv(dataset: Dataset, thresholds: ThresholdMap,
             tolerance: float = DEFAULT_TOLERANCE) -> CriterionReport:
    return _dataset_report("linn_ppv", dataset, thresholds, tolerance)


def peterson_novick_separation(dataset: Dataset, thresholds: ThresholdMap,
                               tolerance: float = DEFAULT_TOLERANCE) -> CriterionReport:
    """Equal TPR and equal TNR across groups (equalized odds)."""
    return _dataset_report("separation", dataset, thresholds, tolerance)


def peterson_novick_sufficiency(dataset: Dataset, thresholds: ThresholdMap,
                                tolerance: float = DEFAULT_TOLERANCE) -> CriterionReport:
    """Equal PPV and equal NPV across groups."""
    return _dataset_report("sufficiency", dataset, thresholds, tolerance)


def thorndikian(dataset: Dataset, thresholds: ThresholdMap, params: ThorndikianParams,
                tolerance: float = DEFAULT_TOLERANCE) -> CriterionReport:
    return _dataset_report("thorndikian", dataset, thresholds, tolerance, params)


# ---------------------------------------------------------------------------
# Jones rank criteria
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RankTable:
    by_score: np.ndarray
    by_target: np.ndarray


def rank_table(dataset: Dataset) -> RankTable:
    """Record indices by descending score and by descending target; ties keep row order."""
    idx = np.arange(len(dataset))
    return RankTable(by_score=np.lexsort((idx, -dataset.scores)),
                     by_target=np.lexsort((idx, -dataset.targets)))


@dataclass(frozen=True)
class JonesAtN:
    n_records: int
    score_count: int
    target_count: int

    @property
    def equal(self) -> bool:
        return self.score_count == self.target_count


@dataclass(frozen=True)
class JonesGeneral:
    fair: bool
    worst_n: int | None
    worst_gap: int


def _cumulative_counts(dataset: Dataset, group: str):
    if group not in dataset.group_labels:
        raise DatasetError(f"unknown group {group!r}")
    member = dataset.mask(group).astype(np.int64)
    ranks = rank_table(dataset)
    return np.cumsum(member[ranks.by_score]), np.cumsum(member[ranks.by_target])


def top_count(n_records_total: int, n_percent: float) -> int:
    """Records in the top ``n_percent``: ceil(N * n / 100)."""
    if not 0 < n_percent <= 100:
        raise ValueError("n_percent must lie in (0, 100]")
    return max(1, math.ceil(n_records_total * n_percent / 100 - 1e-9))


def jones_at_n(dataset: Dataset, group: str, n_percent: float | None = None,
               n_count: int | None = None) -> JonesAtN:
    """Group members in the top slice of the score ranking vs. the target ranking."""
    if (n_percent is None) == (n_count is None):
        raise ValueError("give exactly one of n_percent, n_count")
    n = top_count(len(dataset), n_percent) if n_count is None else int(n_count)
    if not 1 <= n <= len(dataset):
        raise ValueError(f"n_count must lie in 1..{len(dataset)}")
    by_score, by_target = _cumulative_counts(dataset, group)
    return JonesAtN(n, int(by_score[n - 1]), int(by_target[n - 1]))


def jones_general_standard(dataset: Dataset, group: str) -> JonesGeneral:
    """Fair iff the group's top-n counts agree for every n in 1..N."""
    by_score, by_target = _cumulative_counts(dataset, group)
    gaps = np.abs(by_score - by_target)
    worst = int(np.argmax(gaps))
    if gaps[worst] == 0:
        return JonesGeneral(True, None, 0)
    return JonesGeneral(False, worst + 1, int(gaps[worst]))


def jones_general_report(dataset: Dataset, tolerance: float = DEFAULT_TOLERANCE) -> CriterionReport:
    """Per group, the largest top-n count gap (in records)."""
    results = {g: jones_general_standard(dataset, g) for g in dataset.group_labels}
    gaps = {g: float(r.worst_gap) for g, r in results.items()}
    return CriterionReport.build(
        "jones_general_standard", gaps, max(gaps.values()), tolerance,
        details={"worst_n": {g: r.worst_n for g, r in results.items()}, "unit": "records"})


# ---------------------------------------------------------------------------
# Guion and within-group percentiles
# ---------------------------------------------------------------------------

GUION_BINS = BinSpec(EQUAL_COUNT, 10)


def guion_individual(dataset: Dataset, bins: BinSpec = GUION_BINS,
                     tolerance: float = DEFAULT_TOLERANCE) -> CriterionReport:
    """Hire rates of equally-likely-to-succeed people, compared across groups.

    Probability of success is proxied by the pooled mean target within score
    bins. Per group the value is the signed deviation of its hire rate from
    the bin's pooled rate, at the bin where that deviation is largest; the
    disparity is the largest within-bin gap between group hire rates.
    """
    if dataset.decisions is None:
        raise DatasetError("guion_individual needs a decision column")
    edges = bins.edges(dataset.scores)
    idx = bins.assign(dataset.scores, edges)
    d = dataset.decisions.astype(float)
    worst_dev: dict[str, float | None] = {g: None for g in dataset.group_labels}
    disparity = None
    proxy = {}
    for b in range(len(edges) - 1):
        in_bin = idx == b
        if not in_bin.any():
            continue
        pooled_rate = float(d[in_bin].mean())
        proxy[b] = {"success_proxy": float(dataset.targets[in_bin].mean()),
                    "pooled_hire_rate": pooled_rate}
        rates = {}
        for g in dataset.group_labels:
            cell = in_bin & dataset.mask(g)
            if cell.sum() >= bins.min_per_cell:
                rates[g] = float(d[cell].mean())
        proxy[b]["hire_rate"] = rates
        if len(rates) < 2:
            continue
        gap = max(rates.values()) - min(rates.values())
        disparity = gap if disparity is None else max(disparity, gap)
        for g, rate in rates.items():
            dev = rate - pooled_rate
            if worst_dev[g] is None or abs(dev) > abs(worst_dev[g]):
                worst_dev[g] = dev
    return CriterionReport.build(
        "guion_individual", worst_dev, disparity, tolerance,
        details={"proxy": "pooled mean target within score bins (estimate of success probability)",
                 "bins": {"mode": bins.mode, "bin_count": bins.bin_count,
                          "min_per_cell": bins.min_per_cell,
                          "edges": [float(e) for e in edges]},
                 "cells": proxy},
    )


def within_group_percentile(dataset: Dataset) -> Dataset:
    """Replace each score by its midrank percentile, ``(rank - 0.5) / n``, within its group."""
    adjusted = np.empty(len(dataset))
    for g in dataset.group_labels:
        m = dataset.mask(g)
        adjusted[m] = (rankdata(dataset.scores[m], method="average") - 0.5) / m.sum()
    return dataset.with_scores(adjusted)


# ---------------------------------------------------------------------------
# Threshold solver
# ---------------------------------------------------------------------------

class InfeasibleThresholds(Exception):
    """No cutoff brings some group within tolerance of the reference group.

    ``thresholds`` holds the best cutoffs found and ``disparities`` the
    residual disparity per non-reference group (``None`` if every cutoff
    was undefined).
    """

    def __init__(self, message, thresholds, disparities):
        super().__init__(message)
        self.thresholds = thresholds
        self.disparities = disparities


def _counts_at_cutoffs(scores, truth, cutoffs):
    """TP, FP, FN, TN for ``score >= c`` at each cutoff, via sorted searches."""
    pos = np.sort(scores[truth])
    neg = np.sort(scores[~truth])
    tp = pos.size - np.searchsorted(pos, cutoffs, side="left")
    fp = neg.size - np.searchsorted(neg, cutoffs, side="left")
    return tp, fp, pos.size - tp, neg.size - fp


def candidate_cutoffs(scores) -> np.ndarray:
    """Sorted unique scores plus +inf (predict nobody)."""
    return np.append(np.unique(scores), INF)


def pooled_accuracy_cutoff(dataset: Dataset, y_star: float) -> float:
    """Single cutoff maximizing pooled accuracy; ties go to the lowest cutoff."""
    truth = ground_truth_positive(dataset, y_star)
    cutoffs = candidate_cutoffs(dataset.scores)
    tp, _, _, tn = _counts_at_cutoffs(dataset.scores, truth, cutoffs)
    return float(cutoffs[int(np.argmax(tp + tn))])


def _value_gap(a, b) -> float | None:
    if a is None or b is None:
        return None
    if a == b:
        return 0.0
    return abs(a - b)


def scan_group_cutoffs(scores, truth, reference_values, values_of):
    """Disparity vs. ``reference_values`` and accuracy at every candidate cutoff.

    Returns ``(cutoffs, disparities, accuracy)``; undefined disparities are NaN.
    """
    cutoffs = candidate_cutoffs(scores)
    tp, fp, fn, tn = _counts_at_cutoffs(scores, truth, cutoffs)
    disparities = np.full(cutoffs.size, np.nan)
    for i in range(cutoffs.size):
        values = values_of(ConfusionMatrix(int(tp[i]), int(fp[i]), int(fn[i]), int(tn[i])))
        gaps = [_value_gap(v, r) for v, r in zip(values, reference_values)]
        if all(g is not None for g in gaps):
            disparities[i] = max(gaps)
    return cutoffs, disparities, tp + tn


def solve_fair_thresholds(dataset: Dataset, criterion: str = "thorndike_ratio",
                          y_star: float = 0.5, tolerance: float = DEFAULT_TOLERANCE,
                          params: ThorndikianParams | None = None,
                          reference: str | None = None) -> ThresholdMap:
    """Per-group cutoffs that equalize ``criterion`` with a reference group.

    The reference group keeps the pooled accuracy-optimal cutoff. Every other
    group gets, among its own unique scores plus +inf, the cutoff with the
    smallest disparity to the reference; ties prefer higher within-group
    accuracy, then the lower cutoff. Raises InfeasibleThresholds when the
    best disparity of some group exceeds ``tolerance``.
    """
    name = canonical_criterion(criterion)
    values_of = _component_values(name, params)
    labels = dataset.group_labels
    if len(labels) < 2:
        raise DatasetError("threshold solving needs at least 2 groups")
    reference = labels[0] if reference is None else reference
    if reference not in labels:
        raise DatasetError(f"unknown reference group {reference!r}")
    truth = ground_truth_positive(dataset, y_star)

    ref_cut = pooled_accuracy_cutoff(dataset, y_star)
    ref_mask = dataset.mask(reference)
    ref_cm = confusion_by_group(dataset.subset(ref_mask),
                                ThresholdMap({reference: ref_cut}, y_star))[reference]
    ref_values = values_of(ref_cm)
    if any(v is None for v in ref_values):
        raise InfeasibleThresholds(
            f"criterion {name} is undefined for reference group {reference!r} at cutoff {ref_cut}",
            ThresholdMap.uniform(labels, ref_cut, y_star), {g: None for g in labels if g != reference})

    cutoffs = {reference: ref_cut}
    disparities: dict[str, float | None] = {}
    problems = []
    for g in labels:
        if g == reference:
            continue
        m = dataset.mask(g)
        cands, disp, acc = scan_group_cutoffs(dataset.scores[m], truth[m], ref_values, values_of)
        ok = ~np.isnan(disp)
        if not ok.any():
            cutoffs[g] = ref_cut
            disparities[g] = None
            problems.append(f"group {g!r}: criterion undefined at every cutoff")
            continue
        best = np.nanmin(disp)
        tied = np.flatnonzero(ok & (disp == best))
        pick = tied[np.argmax(acc[tied])]  # argmax keeps the first (lowest) cutoff on ties
        cutoffs[g] = float(cands[pick])
        disparities[g] = float(best)
        if best > tolerance:
            problems.append(f"group {g!r}: best disparity {best:.4g} exceeds tolerance {tolerance:g}")
    result = ThresholdMap({g: cutoffs[g] for g in labels}, y_star)
    if problems:
        raise InfeasibleThresholds("; ".join(problems), result, disparities)
    return result


# ---------------------------------------------------------------------------
# Exhaustive confusion-matrix census
# ---------------------------------------------------------------------------

FAIL_CODE, PASS_CODE, UNDEFINED_CODE = 0, 1, 2


def _value_array(matrices, fn) -> np.ndarray:
    """Per-matrix component values as floats, NaN for undefined."""
    rows = [fn(cm) for cm in matrices]
    return np.array([[np.nan if v is None else v for v in row] for row in rows], dtype=float)


def pairwise_verdicts(values: np.ndarray) -> np.ndarray:
    """Verdict code for every ordered pair at tolerance 0.

    ``values`` is (matrices, components). A pair passes iff all components
    are defined and exactly equal (inf equals inf).
    """
    defined = ~np.isnan(values).any(axis=1)
    both = defined[:, None] & defined[None, :]
    equal = np.ones((len(values), len(values)), dtype=bool)
    for c in range(values.shape[1]):
        col = values[:, c]
        equal &= col[:, None] == col[None, :]
    out = np.where(equal, PASS_CODE, FAIL_CODE)
    out[~both] = UNDEFINED_CODE
    return out


@dataclass(frozen=True)
class ReductionCensus:
    max_count: int
    n_matrices: int
    n_pairs: int
    sufficiency_exceptions: int
    separation_exceptions: int
    sufficiency_passes: int
    separation_passes: int
    thorndike11_passes: int
    thorndike11_ratio_equal: int
    thorndike11_equal_base_rate: int
    thorndike11_proportional: int
    thorndike11_neither: int
    thorndike_ratio_passes: int

    @property
    def equal_base_rate_fraction(self) -> float:
        return self.thorndike11_equal_base_rate / self.thorndike11_passes


def lambda_reduction_census(max_count: int = 6) -> ReductionCensus:
    """Check the (1,0)/(0,1) reductions and the (1,1) property over all matrix pairs.

    Per-matrix values come from the same functions the criteria use; pair
    verdicts are taken at tolerance 0.
    """
    matrices = confusion_matrices(max_count)
    t10 = pairwise_verdicts(_value_array(
        matrices, lambda cm: thorndikian_values(cm, ThorndikianParams(1, 0))))
    suff = pairwise_verdicts(_value_array(matrices, lambda cm: (cm.ppv, cm.npv)))
    t01 = pairwise_verdicts(_value_array(
        matrices, lambda cm: thorndikian_values(cm, ThorndikianParams(0, 1))))
    sep = pairwise_verdicts(_value_array(matrices, lambda cm: (cm.tpr, cm.tnr)))
    t11 = pairwise_verdicts(_value_array(
        matrices, lambda cm: thorndikian_values(cm, ThorndikianParams(1, 1))))
    ratio = pairwise_verdicts(_value_array(matrices, lambda cm: (thorndike_value(cm),)))

    passing = t11 == PASS_CODE
    pos = np.array([cm.positives for cm in matrices], dtype=np.int64)
    tot = np.array([cm.total for cm in matrices], dtype=np.int64)
    proportional = np.array([cm.fp == cm.fn for cm in matrices])
    equal_base = pos[:, None] * tot[None, :] == pos[None, :] * tot[:, None]
    both_prop = proportional[:, None] & proportional[None, :]
    return ReductionCensus(
        max_count=max_count,
        n_matrices=len(matrices),
        n_pairs=len(matrices) ** 2,
        sufficiency_exceptions=int(np.sum(t10 != suff)),
        separation_exceptions=int(np.sum(t01 != sep)),
        sufficiency_passes=int(np.sum(suff == PASS_CODE)),
        separation_passes=int(np.sum(sep == PASS_CODE)),
        thorndike11_passes=int(passing.sum()),
        thorndike11_ratio_equal=int(np.sum(passing & (ratio == PASS_CODE))),
        thorndike11_equal_base_rate=int(np.sum(passing & equal_base)),
        thorndike11_proportional=int(np.sum(passing & both_prop)),
        thorndike11_neither=int(np.sum(passing & ~equal_base & ~both_prop)),
        thorndike_ratio_passes=int(np.sum(ratio == PASS_CODE)),
    )
