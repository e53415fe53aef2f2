"""Differential item functioning and its model-feature analog.

An item is unbiased when, among people of matched ability, the chance of a
correct response does not depend on group. We stratify on a matching
variable, compare the per-group response distribution within each stratum,
and summarize with the stratum-size-weighted mean of the largest pairwise
gap. For a binary response the gap is the difference in correct rates; for
a binned real feature it is the total variation distance between the
groups' within-stratum bin distributions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .core import Dataset, DatasetError
from .regression import EQUAL_COUNT, BinSpec

DIF_STRATA = BinSpec(EQUAL_COUNT, 5)
FEATURE_BINS = BinSpec(EQUAL_COUNT, 5)
DEFAULT_FLAG_THRESHOLD = 0.05


@dataclass(frozen=True)
class ItemReport:
    item_id: str
    per_stratum_gap: dict[int, float]
    per_stratum_rates: dict[int, dict[str, float]]
    stratum_sizes: dict[int, int]
    weighted_gap: float | None
    flagged: bool
    excluded_strata: tuple[int, ...] = ()
    matching: str = "rest-score"
    notes: tuple[str, ...] = field(default=())

    @property
    def diagnosable(self) -> bool:
        return self.weighted_gap is not None


def _stratified_gap(item_id, codes, n_codes, strata, groups, labels, min_per_cell,
                    flag_threshold, matching) -> ItemReport:
    """Core loop shared by items and features.

    ``codes`` are category indices of the response in ``0..n_codes-1``;
    ``strata`` are stratum indices of the matching variable.
    """
    gaps: dict[int, float] = {}
    rates: dict[int, dict[str, float]] = {}
    sizes: dict[int, int] = {}
    excluded = []
    for s in np.unique(strata):
        s = int(s)
        in_s = strata == s
        dists = {}
        for g in labels:
            cell = in_s & (groups == g)
            n = int(cell.sum())
            if n >= min_per_cell:
                dists[g] = np.bincount(codes[cell], minlength=n_codes) / n
        if len(dists) < 2:
            excluded.append(s)
            continue
        gap = max(0.5 * float(np.abs(dists[a] - dists[b]).sum())
                  for a, b in combinations(dists, 2))
        gaps[s] = gap
        sizes[s] = int(sum((in_s & (groups == g)).sum() for g in dists))
        # share in the highest category; for 0/1 items this is the correct rate
        rates[s] = {g: float(d[-1]) for g, d in dists.items()}
    if gaps:
        total = sum(sizes.values())
        weighted = float(sum(gaps[s] * sizes[s] for s in gaps) / total)
        flagged = weighted >= flag_threshold
    else:
        weighted, flagged = None, False
    notes = () if gaps else ("undiagnosable: every stratum is sparse",)
    return ItemReport(item_id, gaps, rates, sizes, weighted, flagged, tuple(excluded),
                      matching, notes)


def rest_score(dataset: Dataset, item_id: str) -> np.ndarray:
    """Mean response over all items except ``item_id``."""
    others = [k for k in dataset.items if k != item_id]
    if not others:
        raise DatasetError("rest-score matching needs at least two items")
    return np.mean([dataset.items[k] for k in others], axis=0)


def dif_analyze(dataset: Dataset, ability: str = "total-score", strata: BinSpec = DIF_STRATA,
                flag_threshold: float = DEFAULT_FLAG_THRESHOLD) -> list[ItemReport]:
    """DIF screen of every item.

    ``ability="total-score"`` matches on each record's rest-score (the
    other items only); ``ability="target"`` matches on the target column.
    """
    if not dataset.items:
        raise DatasetError("dataset has no item columns")
    if ability not in ("total-score", "target"):
        raise ValueError("ability must be 'total-score' or 'target'")
    labels = dataset.group_labels
    reports = []
    for item_id, responses in dataset.items.items():
        matching = rest_score(dataset, item_id) if ability == "total-score" else dataset.targets
        idx = strata.assign(matching)
        reports.append(_stratified_gap(
            item_id, responses.astype(np.int64), 2, idx, dataset.groups, labels,
            strata.min_per_cell, flag_threshold,
            "rest-score" if ability == "total-score" else "target"))
    return reports


def feature_dif(dataset: Dataset, feature: str, score_bins: BinSpec = DIF_STRATA,
                feature_bins: BinSpec = FEATURE_BINS,
                flag_threshold: float = DEFAULT_FLAG_THRESHOLD) -> ItemReport:
    """Compare the distribution of ``feature`` across groups at matched model score.

    Binary features are used as is; real features are binned with
    ``feature_bins`` on pooled values.
    """
    values = dataset.column(feature)
    if np.all((values == 0) | (values == 1)):
        codes, n_codes = values.astype(np.int64), 2
    else:
        edges = feature_bins.edges(values)
        codes = feature_bins.assign(values, edges)
        n_codes = len(edges) - 1
    idx = score_bins.assign(dataset.scores)
    return _stratified_gap(feature, codes, n_codes, idx, dataset.groups, dataset.group_labels,
                           score_bins.min_per_cell, flag_threshold, "score")
