"""Criteria defined through regression lines and conditional expectations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    DEFAULT_TOLERANCE,
    CriterionReport,
    Dataset,
    DatasetError,
    ThresholdMap,
    fit_line,
    spread,
)

EQUAL_WIDTH = "equal-width"
EQUAL_COUNT = "equal-count"

SIGNEDNESS = ("both", "under", "over")


@dataclass(frozen=True)
class BinSpec:
    """How to cut a real variable into bins.

    Equal-width bins span ``value_range`` (or the observed range); equal-count
    bins use pooled quantiles, merging duplicate edges. Cells with fewer than
    ``min_per_cell`` records are sparse and left out of disparity aggregation.
    """

    mode: str = EQUAL_WIDTH
    bin_count: int = 10
    min_per_cell: int = 5
    value_range: tuple[float, float] | None = None

    def __post_init__(self):
        if self.mode not in (EQUAL_WIDTH, EQUAL_COUNT):
            raise ValueError(f"unknown bin mode {self.mode!r}")
        if self.bin_count < 2:
            raise ValueError("bin_count must be at least 2")
        if self.min_per_cell < 1:
            raise ValueError("min_per_cell must be at least 1")
        if self.value_range is not None and not self.value_range[0] < self.value_range[1]:
            raise ValueError("value_range must be increasing")

    def edges(self, values) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if self.mode == EQUAL_WIDTH:
            lo, hi = self.value_range or (float(values.min()), float(values.max()))
            if lo == hi:
                return np.array([lo, hi])
            return np.linspace(lo, hi, self.bin_count + 1)
        qs = np.quantile(values, np.linspace(0.0, 1.0, self.bin_count + 1))
        edges = np.unique(qs)
        if edges.size == 1:
            edges = np.array([edges[0], edges[0]])
        return edges

    def assign(self, values, edges=None) -> np.ndarray:
        """Bin index per value; interior edges are left-closed, the last bin is closed."""
        values = np.asarray(values, dtype=float)
        if edges is None:
            edges = self.edges(values)
        n_bins = len(edges) - 1
        idx = np.searchsorted(edges[1:-1], values, side="right")
        return np.clip(idx, 0, n_bins - 1)


CALIBRATION_BINS = BinSpec(EQUAL_WIDTH, 10, value_range=(0.0, 1.0))
CONVERSE_CALIBRATION_BINS = BinSpec(EQUAL_WIDTH, 10)


def _signed_excess(values: dict[str, float | None], fail_on: str) -> float | None:
    if fail_on not in SIGNEDNESS:
        raise ValueError(f"fail_on must be one of {SIGNEDNESS}")
    defined = [v for v in values.values() if v is not None]
    if not defined:
        return None
    if fail_on == "both":
        return max(abs(v) for v in defined)
    if fail_on == "under":
        return max(max(v, 0.0) for v in defined)
    return max(max(-v, 0.0) for v in defined)


def _fit_population(dataset: Dataset, fit_on: str) -> np.ndarray:
    if fit_on == "pooled":
        return np.ones(len(dataset), dtype=bool)
    if fit_on not in dataset.group_labels:
        raise DatasetError(f"fit group {fit_on!r} is not in the dataset")
    return dataset.mask(fit_on)


def _group_means(dataset: Dataset, values: np.ndarray) -> dict[str, float]:
    return {g: float(values[dataset.mask(g)].mean()) for g in dataset.group_labels}


def cleary_bias(dataset: Dataset, fit_on: str = "pooled", tolerance: float = DEFAULT_TOLERANCE,
                fail_on: str = "both") -> CriterionReport:
    """Mean prediction error per group under a common Y-from-R regression line.

    Positive mean residual means the group's target is underpredicted (the
    direction with an "unfair to" connotation); negative means overprediction.
    ``fail_on`` chooses which sign counts against the verdict.
    """
    fit = _fit_population(dataset, fit_on)
    slope, intercept = fit_line(dataset.scores[fit], dataset.targets[fit])
    residuals = dataset.targets - (intercept + slope * dataset.scores)
    means = _group_means(dataset, residuals)
    return CriterionReport.build(
        "cleary_bias", means, _signed_excess(means, fail_on), tolerance,
        details={"fit_on": fit_on, "slope": slope, "intercept": intercept, "fail_on": fail_on,
                 "sign": "positive = underprediction, negative = overprediction"},
    )


def converse_cleary(dataset: Dataset, tolerance: float = DEFAULT_TOLERANCE,
                    fail_on: str = "both") -> CriterionReport:
    """Mean residual per group of the pooled R-from-Y line.

    A positive value means the group's test scores run higher than its
    ground-truth level predicts.
    """
    try:
        slope, intercept = fit_line(dataset.targets, dataset.scores)
    except DatasetError:
        raise DatasetError("target is constant; converse regression undefined") from None
    residuals = dataset.scores - (intercept + slope * dataset.targets)
    means = _group_means(dataset, residuals)
    return CriterionReport.build(
        "converse_cleary", means, _signed_excess(means, fail_on), tolerance,
        details={"fit_on": "pooled", "slope": slope, "intercept": intercept, "fail_on": fail_on,
                 "sign": "positive = scores higher than the converse line predicts"},
    )


def jones_mean_fair(dataset: Dataset, fit_on: str = "pooled",
                    tolerance: float = DEFAULT_TOLERANCE) -> CriterionReport:
    """``E(Yhat | a) - E(Y | a)`` per group, with Yhat from the Y-from-R line."""
    fit = _fit_population(dataset, fit_on)
    slope, intercept = fit_line(dataset.scores[fit], dataset.targets[fit])
    predicted = intercept + slope * dataset.scores
    diffs = {g: float(predicted[m].mean() - dataset.targets[m].mean())
             for g, m in ((g, dataset.mask(g)) for g in dataset.group_labels)}
    return CriterionReport.build(
        "jones_mean_fair", diffs, _signed_excess(diffs, "both"), tolerance,
        details={"fit_on": fit_on, "slope": slope, "intercept": intercept},
    )


def _binned_gaps(dataset: Dataset, bin_values, bins: BinSpec, gap_fn):
    """Per group: the worst non-sparse bin gap and the per-bin table."""
    edges = bins.edges(bin_values)
    idx = bins.assign(bin_values, edges)
    worst: dict[str, float | None] = {}
    table: dict[str, dict[int, dict[str, float]]] = {}
    for g in dataset.group_labels:
        gm = dataset.mask(g)
        cells = {}
        for b in range(len(edges) - 1):
            cell = gm & (idx == b)
            count = int(cell.sum())
            if count < bins.min_per_cell:
                continue
            cells[b] = {"count": count, "gap": gap_fn(cell)}
        table[g] = cells
        worst[g] = max((abs(c["gap"]) for c in cells.values()), default=None)
    return worst, table, edges


def calibration_check(dataset: Dataset, bins: BinSpec = CALIBRATION_BINS,
                      tolerance: float = DEFAULT_TOLERANCE) -> CriterionReport:
    """Within each group and score bin, ``|mean(Y) - mean(R)|``; worst bin per group."""
    if not dataset.target_is_binary:
        raise DatasetError("calibration needs a binary (0/1) target")
    if dataset.scores.min() < 0.0 or dataset.scores.max() > 1.0:
        raise DatasetError("calibration needs scores in [0, 1]")
    r, y = dataset.scores, dataset.targets
    worst, table, edges = _binned_gaps(
        dataset, r, bins, lambda cell: float(y[cell].mean() - r[cell].mean()))
    return CriterionReport.build(
        "calibration", worst, _signed_excess(worst, "both"), tolerance,
        details={"bins": _bin_details(bins, edges), "cells": table},
    )


def converse_calibration_check(dataset: Dataset, bins: BinSpec = CONVERSE_CALIBRATION_BINS,
                               tolerance: float = DEFAULT_TOLERANCE) -> CriterionReport:
    """Bin on Y; per group and bin, ``mean(R) - y`` with y the cell's mean target."""
    r, y = dataset.scores, dataset.targets
    worst, table, edges = _binned_gaps(
        dataset, y, bins, lambda cell: float(r[cell].mean() - y[cell].mean()))
    return CriterionReport.build(
        "converse_calibration", worst, _signed_excess(worst, "both"), tolerance,
        details={"bins": _bin_details(bins, edges), "cells": table,
                 "bin_center": "within-cell mean of target"},
    )


def _bin_details(bins: BinSpec, edges) -> dict:
    return {"mode": bins.mode, "bin_count": bins.bin_count, "min_per_cell": bins.min_per_cell,
            "edges": [float(e) for e in edges]}


def default_boundary_halfwidth(dataset: Dataset) -> float:
    return 0.1 * float(np.std(dataset.scores))


def einhorn_bass(dataset: Dataset, thresholds: ThresholdMap, boundary_halfwidth: float | None = None,
                 tolerance: float = DEFAULT_TOLERANCE, min_per_cell: int = 5) -> CriterionReport:
    """Designated risk ``P(Y > y* | R = r_a*, A = a)`` compared across groups.

    The point conditional is estimated by the share of records within
    ``boundary_halfwidth`` of each group's cutoff whose target exceeds y*.
    """
    thresholds.check_covers(dataset)
    if boundary_halfwidth is None:
        boundary_halfwidth = default_boundary_halfwidth(dataset)
    if boundary_halfwidth <= 0:
        raise ValueError("boundary_halfwidth must be positive")
    y_star = thresholds.target_cutoff
    values: dict[str, float | None] = {}
    counts: dict[str, int] = {}
    diagnostics = []
    for g in dataset.group_labels:
        window = dataset.mask(g) & (np.abs(dataset.scores - thresholds.cutoff(g)) <= boundary_halfwidth)
        counts[g] = int(window.sum())
        if counts[g] < min_per_cell:
            values[g] = None
            diagnostics.append(
                f"group {g!r}: {counts[g]} records within {boundary_halfwidth:g} of cutoff "
                f"(need {min_per_cell})")
        else:
            values[g] = float(np.mean(dataset.targets[window] > y_star))
    return CriterionReport.build(
        "einhorn_bass", values, spread(list(values.values())), tolerance,
        details={"boundary_halfwidth": boundary_halfwidth, "window_counts": counts,
                 "min_per_cell": min_per_cell, "diagnostics": diagnostics},
    )
