"""Correlation-based fairness criteria.

Darlington's four fair values of the group/score correlation, the
one-parameter compromise family between them, the culturally optimum
composite, and the scan that tabulates how the criteria diverge.

The arithmetic helpers only use ``+ - * /`` and ``**`` so they accept
:class:`fractions.Fraction` inputs and stay exact.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Sequence, TextIO

import numpy as np
from scipy import stats

from .core import (
    DEFAULT_TOLERANCE,
    CriterionReport,
    Dataset,
    DatasetError,
    correlations,
    pearson,
)

NORMALITY_LIMIT = 1.0


def _check_unit(name: str, value) -> None:
    if not -1 <= value <= 1:
        raise ValueError(f"{name} must lie in [-1, 1], got {value}")


@dataclass(frozen=True)
class DarlingtonTargets:
    """Fair values of rho_AR under criteria 1-4 for given rho_AY, rho_RY.

    ``target1`` is ``None`` when rho_RY is 0. It can exceed 1 in magnitude,
    in which case no test satisfies criterion 1 (``feasible1`` is False).
    """

    rho_ay: float
    rho_ry: float
    target1: float | None
    target2: float
    target3: float
    target4: float

    def target(self, which: int):
        if which not in (1, 2, 3, 4):
            raise ValueError(f"criterion must be 1, 2, 3 or 4, got {which!r}")
        return getattr(self, f"target{which}")

    @property
    def feasible1(self) -> bool:
        return self.target1 is not None and abs(self.target1) <= 1


def darlington_targets(rho_ay, rho_ry) -> DarlingtonTargets:
    _check_unit("rho_ay", rho_ay)
    _check_unit("rho_ry", rho_ry)
    target1 = rho_ay / rho_ry if rho_ry != 0 else None
    return DarlingtonTargets(rho_ay, rho_ry, target1, rho_ay, rho_ay * rho_ry, rho_ay - rho_ay)


def compromise_curve(rho_ay, rho_ry, lam) -> float:
    """Fair rho_AR = rho_AY * rho_RY ** lam; lam = -1, 0, 1 give criteria 1, 2, 3."""
    _check_unit("rho_ay", rho_ay)
    _check_unit("rho_ry", rho_ry)
    if lam == 0:
        return rho_ay
    if rho_ry == 0 and lam < 0:
        raise ValueError("rho_ry = 0 with negative lambda: fair value is undefined")
    if rho_ry < 0 and lam != int(lam):
        raise ValueError("fractional lambda needs rho_ry > 0")
    if lam == int(lam):
        lam = int(lam)
    return rho_ay * rho_ry ** lam


def normality_warnings(dataset: Dataset) -> list[str]:
    """Flag score/target marginals whose skew or excess kurtosis exceeds +-1.

    The correlation criteria only coincide with the independence-based
    criteria for jointly Gaussian variables.
    """
    out = []
    for name, values in (("score", dataset.scores), ("target", dataset.targets)):
        if np.ptp(values) == 0:
            continue
        skew = float(stats.skew(values))
        kurt = float(stats.kurtosis(values))
        if abs(skew) > NORMALITY_LIMIT or abs(kurt) > NORMALITY_LIMIT:
            out.append(
                f"{name} is far from Gaussian (skew {skew:.2f}, excess kurtosis {kurt:.2f}); "
                "correlation criteria need not match their independence counterparts")
    return out


def _correlation_report(name, dataset, group_as_one, target_fn, tolerance, extra):
    triple = correlations(dataset, group_as_one)
    try:
        target = target_fn(triple.rho_ay, triple.rho_ry)
    except ValueError:
        target = None
    measured = triple.rho_ar
    disparity = None if target is None else abs(measured - target)
    return CriterionReport.build(
        name, {"measured": measured, "target": target}, disparity, tolerance,
        details={"group_as_one": group_as_one, "rho_ar": triple.rho_ar, "rho_ay": triple.rho_ay,
                 "rho_ry": triple.rho_ry, "rho_ar_given_y": triple.rho_ar_given_y,
                 "rho_ay_given_r": triple.rho_ay_given_r, **extra},
        warnings=normality_warnings(dataset),
    )


def darlington_check(dataset: Dataset, group_as_one: str, which: int,
                     tolerance: float = DEFAULT_TOLERANCE) -> CriterionReport:
    """Compare measured rho_AR to the criterion's fair value from the same sample."""
    if which not in (1, 2, 3, 4):
        raise ValueError(f"criterion must be 1, 2, 3 or 4, got {which!r}")
    return _correlation_report(
        f"darlington{which}", dataset, group_as_one,
        lambda ay, ry: darlington_targets(ay, ry).target(which), tolerance, {"which": which})


def compromise_check(dataset: Dataset, group_as_one: str, lam: float,
                     tolerance: float = DEFAULT_TOLERANCE) -> CriterionReport:
    return _correlation_report(
        "compromise", dataset, group_as_one,
        lambda ay, ry: compromise_curve(ay, ry, lam), tolerance, {"lambda": lam})


@dataclass(frozen=True)
class CulturallyOptimum:
    weights: dict[str, float]
    correlation: float
    k: float
    collinear: bool


def culturally_optimum(dataset: Dataset, candidate_scores: Sequence[str], k: float,
                       group_as_one: str) -> CulturallyOptimum:
    """Linear combination of candidate columns maximizing corr with ``Y - k*A``.

    The maximizer is the least-squares projection of the composite onto the
    centred candidates (minimum-norm when candidates are collinear),
    rescaled to unit norm with the sign chosen so the correlation is >= 0.
    """
    if not candidate_scores:
        raise ValueError("need at least one candidate score column")
    if k < 0:
        raise ValueError("k must be non-negative")
    if len(dataset.group_labels) != 2:
        raise DatasetError("culturally optimum needs exactly 2 groups; binarize first")
    a = dataset.indicator(group_as_one)
    composite = dataset.targets - k * a
    x = np.column_stack([dataset.column(c) for c in candidate_scores])
    xc = x - x.mean(axis=0)
    zc = composite - composite.mean()
    coef, _, rank, _ = np.linalg.lstsq(xc, zc, rcond=None)
    norm = float(np.linalg.norm(coef))
    if norm == 0.0:
        raise DatasetError("candidates carry no linear signal about the composite")
    coef = coef / norm
    corr = pearson(x @ coef, composite)
    if corr is None:
        raise DatasetError("optimal combination is constant")
    if corr < 0:
        coef, corr = -coef, -corr
    return CulturallyOptimum(
        weights={c: float(w) for c, w in zip(candidate_scores, coef)},
        correlation=corr, k=k, collinear=bool(rank < x.shape[1]))


@dataclass(frozen=True)
class ScanRow:
    rho_ry: float
    target1: float | None
    target2: float
    target3: float
    target4: float
    gap12: float | None
    gap23: float


def incompatibility_scan(rho_ay, grid: Iterable) -> list[ScanRow]:
    """Fair rho_AR values over a grid of rho_RY in (0, 1], with the gaps between them.

    gap12 = |target1 - target2| and gap23 = |target2 - target3| vanish only
    at rho_RY = 1 or rho_AY = 0.
    """
    rows = []
    for rho_ry in grid:
        if not 0 < rho_ry <= 1:
            raise ValueError(f"grid points must lie in (0, 1], got {rho_ry}")
        t = darlington_targets(rho_ay, rho_ry)
        rows.append(ScanRow(rho_ry, t.target1, t.target2, t.target3, t.target4,
                            abs(t.target1 - t.target2), abs(t.target2 - t.target3)))
    return rows


def step_grid(step: float, upper: float = 1.0) -> list[float]:
    """``step, 2*step, ...`` up to ``upper``; points rounded to 12 decimals."""
    if not step > 0:
        raise ValueError("grid step must be positive")
    count = int(math.floor(upper / step + 1e-9))
    points = [round(step * i, 12) for i in range(1, count + 1)]
    return [p for p in points if p <= upper]


SCAN_COLUMNS = ("rho_ry", "target1", "target2", "target3", "target4", "gap12", "gap23")


def write_scan_csv(rows: Sequence[ScanRow], stream: TextIO) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(SCAN_COLUMNS)
    for row in rows:
        writer.writerow(["" if getattr(row, c) is None else repr(float(getattr(row, c)))
                         for c in SCAN_COLUMNS])
