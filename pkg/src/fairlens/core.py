"""Shared data model, CSV ingestion and descriptive statistics.

Every criterion module works on a :class:`Dataset`, a column-oriented,
read-only view of records ``(group, score, target, decision?, items?)``.
Undefined quantities (zero denominators, zero variance) are represented by
``None`` rather than NaN so that pass/fail logic never sees a silent NaN
comparison.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Mapping, Sequence, TextIO

import numpy as np

DEFAULT_TOLERANCE = 0.01
ITEM_PREFIX = "item_"

PASS = "pass"
FAIL = "fail"
UNDEFINED = "undefined"

# |rho| this close to 1 is treated as exactly 1 (partials become undefined).
_DEGENERATE_EPS = 1e-12


class DatasetError(ValueError):
    """Raised when input data violates the dataset contract.

    ``row`` is the 1-based data row (header excluded) when the problem can
    be pinned to a single row.
    """

    def __init__(self, message: str, row: int | None = None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


@dataclass(frozen=True)
class Record:
    group: str
    score: float
    target: float
    decision: int | None = None
    items: Mapping[str, int] = field(default_factory=dict)


def _frozen(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Dataset:
    """Column-oriented records. Arrays are copied and made read-only.

    ``features`` holds any extra numeric columns (used by the culturally
    optimum search and feature-level DIF).
    """

    groups: np.ndarray
    scores: np.ndarray
    targets: np.ndarray
    decisions: np.ndarray | None = None
    items: Mapping[str, np.ndarray] = field(default_factory=dict)
    features: Mapping[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        groups = _frozen([str(g) for g in self.groups], dtype=str)
        scores = _frozen(self.scores)
        targets = _frozen(self.targets)
        n = len(groups)
        if scores.shape != (n,) or targets.shape != (n,):
            raise DatasetError("groups, scores and targets must be 1-d and equally long")
        if n == 0:
            raise DatasetError("dataset is empty")
        _check_finite("score", scores)
        _check_finite("target", targets)
        object.__setattr__(self, "groups", groups)
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "targets", targets)

        if self.decisions is not None:
            decisions = np.asarray(self.decisions)
            _check_binary("decision", decisions, n)
            object.__setattr__(self, "decisions", _frozen(decisions, dtype=np.int8))

        items = {}
        for item_id, values in self.items.items():
            values = np.asarray(values)
            _check_binary(f"item {item_id!r}", values, n)
            items[str(item_id)] = _frozen(values, dtype=np.int8)
        object.__setattr__(self, "items", items)

        features = {}
        for name, values in self.features.items():
            values = _frozen(values)
            if values.shape != (n,):
                raise DatasetError(f"feature {name!r} has wrong length")
            _check_finite(f"feature {name!r}", values)
            features[str(name)] = values
        object.__setattr__(self, "features", features)

    def __len__(self) -> int:
        return len(self.groups)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        if self.decisions is None or other.decisions is None:
            same_decisions = self.decisions is None and other.decisions is None
        else:
            same_decisions = np.array_equal(self.decisions, other.decisions)
        return (
            np.array_equal(self.groups, other.groups)
            and np.array_equal(self.scores, other.scores)
            and np.array_equal(self.targets, other.targets)
            and same_decisions
            and list(self.items) == list(other.items)
            and all(np.array_equal(self.items[k], other.items[k]) for k in self.items)
            and list(self.features) == list(other.features)
            and all(np.array_equal(self.features[k], other.features[k]) for k in self.features)
        )

    __hash__ = None

    @property
    def group_labels(self) -> tuple[str, ...]:
        """Distinct labels in order of first appearance."""
        _, first = np.unique(self.groups, return_index=True)
        return tuple(str(self.groups[i]) for i in sorted(first))

    @property
    def item_ids(self) -> tuple[str, ...]:
        return tuple(self.items)

    @property
    def records(self) -> list[Record]:
        out = []
        for i in range(len(self)):
            out.append(Record(
                group=str(self.groups[i]),
                score=float(self.scores[i]),
                target=float(self.targets[i]),
                decision=None if self.decisions is None else int(self.decisions[i]),
                items={k: int(v[i]) for k, v in self.items.items()},
            ))
        return out

    @property
    def target_is_binary(self) -> bool:
        return bool(np.all((self.targets == 0) | (self.targets == 1)))

    def group_sizes(self) -> dict[str, int]:
        return {g: int(np.sum(self.groups == g)) for g in self.group_labels}

    def mask(self, group: str) -> np.ndarray:
        return self.groups == group

    def indicator(self, group_as_one: str) -> np.ndarray:
        """0/1 float vector, 1 for records of ``group_as_one``."""
        if group_as_one not in self.group_labels:
            raise DatasetError(f"unknown group {group_as_one!r}")
        return (self.groups == group_as_one).astype(float)

    def column(self, name: str) -> np.ndarray:
        """Numeric column by name: score, target, decision, an item id or a feature."""
        if name == "score":
            return self.scores
        if name == "target":
            return self.targets
        if name == "decision":
            if self.decisions is None:
                raise DatasetError("dataset has no decision column")
            return self.decisions.astype(float)
        if name in self.items:
            return self.items[name].astype(float)
        if name.startswith(ITEM_PREFIX) and name[len(ITEM_PREFIX):] in self.items:
            return self.items[name[len(ITEM_PREFIX):]].astype(float)
        if name in self.features:
            return self.features[name]
        raise DatasetError(f"unknown column {name!r}")

    def with_scores(self, scores) -> Dataset:
        return replace(self, scores=scores)

    def subset(self, mask) -> Dataset:
        mask = np.asarray(mask)
        return Dataset(
            groups=self.groups[mask],
            scores=self.scores[mask],
            targets=self.targets[mask],
            decisions=None if self.decisions is None else self.decisions[mask],
            items={k: v[mask] for k, v in self.items.items()},
            features={k: v[mask] for k, v in self.features.items()},
        )

    def binarize(self, group_as_one: str, rest_label: str = "rest") -> Dataset:
        """Collapse all groups other than ``group_as_one`` into ``rest_label``."""
        if group_as_one not in self.group_labels:
            raise DatasetError(f"unknown group {group_as_one!r}")
        if rest_label == group_as_one:
            raise DatasetError("rest_label must differ from group_as_one")
        groups = np.where(self.groups == group_as_one, group_as_one, rest_label)
        return replace(self, groups=groups)

    def check_groups(self) -> None:
        """At least two groups, each with at least two records."""
        sizes = self.group_sizes()
        if len(sizes) < 2:
            raise DatasetError(f"need at least 2 groups, found {len(sizes)}")
        small = [g for g, n in sizes.items() if n < 2]
        if small:
            raise DatasetError(f"groups with fewer than 2 records: {small}")


def _check_finite(name: str, values: np.ndarray) -> None:
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        raise DatasetError(f"non-finite {name}", row=int(bad[0]) + 1)


def _check_binary(name: str, values: np.ndarray, n: int) -> None:
    if values.shape != (n,):
        raise DatasetError(f"{name} has wrong length")
    bad = np.flatnonzero(~np.isin(values, (0, 1)))
    if bad.size:
        raise DatasetError(f"{name} must be 0 or 1, got {values[bad[0]]!r}", row=int(bad[0]) + 1)


# ---------------------------------------------------------------------------
# Result types shared by the criteria modules
# ---------------------------------------------------------------------------

def _rate(num: int, den: int) -> float | None:
    return num / den if den > 0 else None


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        for name in ("tp", "fp", "fn", "tn"):
            value = getattr(self, name)
            if int(value) != value or value < 0:
                raise ValueError(f"{name} must be a non-negative integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        if self.total < 1:
            raise ValueError("confusion matrix must hold at least one record")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @property
    def positives(self) -> int:
        return self.tp + self.fn

    @property
    def predicted_positives(self) -> int:
        return self.tp + self.fp

    @property
    def tpr(self) -> float | None:
        return _rate(self.tp, self.tp + self.fn)

    @property
    def tnr(self) -> float | None:
        return _rate(self.tn, self.tn + self.fp)

    @property
    def ppv(self) -> float | None:
        return _rate(self.tp, self.tp + self.fp)

    @property
    def npv(self) -> float | None:
        return _rate(self.tn, self.tn + self.fn)

    @property
    def base_rate(self) -> float:
        return self.positives / self.total

    def as_dict(self) -> dict[str, int]:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn}


@dataclass(frozen=True)
class CorrelationTriple:
    rho_ar: float
    rho_ay: float
    rho_ry: float
    rho_ar_given_y: float | None
    rho_ay_given_r: float | None


@dataclass(frozen=True)
class ThresholdMap:
    """Per-group score cutoffs ``r_a*`` plus the target cutoff ``y*``.

    Text form is one ``group,cutoff`` line per group and a final
    ``__target__,y*`` line.
    """

    per_group_cutoff: Mapping[str, float]
    target_cutoff: float

    TARGET_KEY = "__target__"

    def __post_init__(self):
        object.__setattr__(self, "per_group_cutoff",
                           {str(g): float(c) for g, c in self.per_group_cutoff.items()})
        object.__setattr__(self, "target_cutoff", float(self.target_cutoff))

    @classmethod
    def uniform(cls, groups: Iterable[str], cutoff: float, target_cutoff: float) -> ThresholdMap:
        return cls({g: cutoff for g in groups}, target_cutoff)

    def cutoff(self, group: str) -> float:
        try:
            return self.per_group_cutoff[group]
        except KeyError:
            raise DatasetError(f"no cutoff for group {group!r}") from None

    def check_covers(self, dataset: Dataset) -> None:
        missing = [g for g in dataset.group_labels if g not in self.per_group_cutoff]
        if missing:
            raise DatasetError(f"threshold map lacks cutoffs for groups {missing}")

    def dumps(self) -> str:
        lines = [f"{g},{c!r}" for g, c in self.per_group_cutoff.items()]
        lines.append(f"{self.TARGET_KEY},{self.target_cutoff!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> ThresholdMap:
        cutoffs: dict[str, float] = {}
        target = None
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.rpartition(",")
            if not sep:
                raise ValueError(f"line {lineno}: expected 'group,cutoff'")
            try:
                number = float(value)
            except ValueError:
                raise ValueError(f"line {lineno}: cutoff {value!r} is not a number") from None
            if key == cls.TARGET_KEY:
                target = number
            else:
                cutoffs[key] = number
        if target is None:
            raise ValueError(f"threshold map has no {cls.TARGET_KEY} line")
        return cls(cutoffs, target)


@dataclass(frozen=True)
class CriterionReport:
    """Outcome of one fairness criterion.

    ``per_group_value`` maps a group (or, for correlation criteria, the
    names ``measured``/``target``) to a number, a tuple of numbers for
    two-condition criteria, or ``None`` when undefined.
    """

    criterion: str
    per_group_value: Mapping[str, object]
    max_disparity: float | None
    tolerance: float
    verdict: str
    details: Mapping[str, object] = field(default_factory=dict)
    warnings: tuple[str, ...] = ()

    @classmethod
    def build(cls, criterion, per_group_value, max_disparity, tolerance,
              details=None, warnings=(), undefined=None) -> CriterionReport:
        """Derive the verdict: pass iff nothing is undefined and disparity <= tolerance."""
        if tolerance < 0:
            raise ValueError("tolerance must be non-negative")
        if undefined is None:
            undefined = max_disparity is None or any(
                _has_undefined(v) for v in per_group_value.values())
        if undefined:
            verdict = UNDEFINED
        elif max_disparity <= tolerance:
            verdict = PASS
        else:
            verdict = FAIL
        return cls(criterion, dict(per_group_value), max_disparity, float(tolerance),
                   verdict, dict(details or {}), tuple(warnings))

    @property
    def passed(self) -> bool:
        return self.verdict == PASS


def _has_undefined(value) -> bool:
    if value is None:
        return True
    if isinstance(value, (tuple, list)):
        return any(v is None for v in value)
    return False


def spread(values: Sequence[float | None]) -> float | None:
    """Max pairwise absolute difference of the defined values.

    Infinite values compare equal to each other; a mix of infinite and
    finite values has infinite spread. ``None`` if fewer than one value is
    defined.
    """
    defined = [v for v in values if v is not None]
    if not defined:
        return None
    hi, lo = max(defined), min(defined)
    if hi == lo:
        return 0.0
    return hi - lo


# ---------------------------------------------------------------------------
# Ingestion
# ---------------------------------------------------------------------------

DEFAULT_SCHEMA = {"group": "group", "score": "score", "target": "target", "decision": "decision"}


def _parse_float(text: str, what: str, row: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise DatasetError(f"{what} {text!r} is not numeric", row=row) from None
    if not math.isfinite(value):
        raise DatasetError(f"{what} {text!r} is not finite", row=row)
    return value


def _parse_binary(text: str, what: str, row: int) -> int:
    text = text.strip()
    try:
        value = float(text)
    except ValueError:
        value = None
    if value not in (0.0, 1.0):
        raise DatasetError(f"unknown {what} value {text!r} (expected 0 or 1)", row=row)
    return int(value)


def load_dataset(source: TextIO | str, schema: Mapping[str, str] | None = None,
                 *, check_groups: bool = True) -> Dataset:
    """Parse a comma-delimited stream with a header row into a validated Dataset.

    ``schema`` maps the logical names ``group``, ``score``, ``target`` and
    optionally ``decision`` to column names. Columns prefixed ``item_`` are
    item responses; any other fully numeric column becomes a feature.
    Row order is preserved.
    """
    if isinstance(source, str):
        source = io.StringIO(source)
    cols = dict(DEFAULT_SCHEMA)
    if schema:
        unknown = set(schema) - set(DEFAULT_SCHEMA)
        if unknown:
            raise DatasetError(f"unknown schema keys {sorted(unknown)}")
        cols.update(schema)

    reader = csv.reader(source)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise DatasetError("input is empty") from None
    index = {name: i for i, name in enumerate(header)}
    for key in ("group", "score", "target"):
        if cols[key] not in index:
            raise DatasetError(f"missing required column {cols[key]!r} (for {key})")
    has_decision = cols["decision"] in index
    mapped = {cols[k] for k in ("group", "score", "target")}
    if has_decision:
        mapped.add(cols["decision"])
    item_cols = [h for h in header if h.startswith(ITEM_PREFIX) and h not in mapped]
    other_cols = [h for h in header if h not in mapped and h not in item_cols]

    groups, scores, targets, decisions = [], [], [], []
    items: dict[str, list[int]] = {c[len(ITEM_PREFIX):]: [] for c in item_cols}
    raw_other: dict[str, list[str]] = {c: [] for c in other_cols}
    for row_no, row in enumerate(reader, start=1):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(header):
            raise DatasetError(f"expected {len(header)} fields, got {len(row)}", row=row_no)
        group = row[index[cols["group"]]].strip()
        if not group:
            raise DatasetError("empty group label", row=row_no)
        groups.append(group)
        scores.append(_parse_float(row[index[cols["score"]]], "score", row_no))
        targets.append(_parse_float(row[index[cols["target"]]], "target", row_no))
        if has_decision:
            decisions.append(_parse_binary(row[index[cols["decision"]]], "decision", row_no))
        for c in item_cols:
            cell = row[index[c]].strip()
            if cell == "":
                raise DatasetError(f"item column {c!r} is empty (inconsistent item columns)",
                                   row=row_no)
            items[c[len(ITEM_PREFIX):]].append(_parse_binary(cell, f"item {c!r}", row_no))
        for c in other_cols:
            raw_other[c].append(row[index[c]])

    if not groups:
        raise DatasetError("input has a header but no records")

    features = {}
    for c, raw in raw_other.items():
        try:
            values = [float(v) for v in raw]
        except ValueError:
            continue  # non-numeric extra columns (ids, notes) are not features
        if all(math.isfinite(v) for v in values):
            features[c] = values

    dataset = Dataset(groups=groups, scores=scores, targets=targets,
                      decisions=decisions if has_decision else None,
                      items=items, features=features)
    if check_groups:
        dataset.check_groups()
    return dataset


def read_dataset(path, schema: Mapping[str, str] | None = None, **kwargs) -> Dataset:
    with open(path, newline="", encoding="utf-8") as fh:
        return load_dataset(fh, schema, **kwargs)


def _fmt(value: float) -> str:
    return repr(float(value))


def dump_dataset(dataset: Dataset, stream: TextIO) -> None:
    """Write ``dataset`` in the ingestion CSV schema (floats round-trip exactly)."""
    writer = csv.writer(stream, lineterminator="\n")
    header = ["group", "score", "target"]
    if dataset.decisions is not None:
        header.append("decision")
    header += [ITEM_PREFIX + k for k in dataset.items]
    header += list(dataset.features)
    writer.writerow(header)
    for i in range(len(dataset)):
        row = [dataset.groups[i], _fmt(dataset.scores[i]), _fmt(dataset.targets[i])]
        if dataset.decisions is not None:
            row.append(int(dataset.decisions[i]))
        row += [int(v[i]) for v in dataset.items.values()]
        row += [_fmt(v[i]) for v in dataset.features.values()]
        writer.writerow(row)


def dumps_dataset(dataset: Dataset) -> str:
    buf = io.StringIO()
    dump_dataset(dataset, buf)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Descriptive statistics
# ---------------------------------------------------------------------------

def pearson(x, y) -> float | None:
    """Pearson correlation, ``None`` when either variable has zero variance."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx <= 0.0 or syy <= 0.0:
        return None
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    if abs(r) > 1.0 - _DEGENERATE_EPS:
        r = math.copysign(1.0, r)
    return r


def _require_two_groups(dataset: Dataset, group_as_one: str) -> np.ndarray:
    labels = dataset.group_labels
    if len(labels) != 2:
        raise DatasetError(
            f"correlation criteria need exactly 2 groups, found {len(labels)}; "
            "call dataset.binarize(group_as_one) first")
    return dataset.indicator(group_as_one)


def point_biserial(dataset: Dataset, group_as_one: str) -> float | None:
    """Correlation between the 0/1 membership indicator and the score."""
    return pearson(_require_two_groups(dataset, group_as_one), dataset.scores)


def partial_correlation(r_xy: float, r_xz: float, r_yz: float) -> float | None:
    """rho_XY.Z from pairwise correlations; ``None`` if a radicand is not positive."""
    radicand = (1.0 - r_xz ** 2) * (1.0 - r_yz ** 2)
    if radicand <= _DEGENERATE_EPS:
        return None
    return (r_xy - r_xz * r_yz) / math.sqrt(radicand)


def correlations(dataset: Dataset, group_as_one: str) -> CorrelationTriple:
    a = _require_two_groups(dataset, group_as_one)
    rho_ar = pearson(a, dataset.scores)
    rho_ay = pearson(a, dataset.targets)
    rho_ry = pearson(dataset.scores, dataset.targets)
    if rho_ar is None or rho_ry is None or rho_ay is None:
        raise DatasetError("score and target must both be non-constant")
    return CorrelationTriple(
        rho_ar=rho_ar,
        rho_ay=rho_ay,
        rho_ry=rho_ry,
        rho_ar_given_y=partial_correlation(rho_ar, rho_ay, rho_ry),
        rho_ay_given_r=partial_correlation(rho_ay, rho_ar, rho_ry),
    )


@dataclass(frozen=True, eq=False)
class RegressionFit:
    slope: float
    intercept: float
    predictor: str
    residuals: np.ndarray

    def predict(self, x):
        return self.intercept + self.slope * np.asarray(x, dtype=float)


def fit_line(x, y) -> tuple[float, float]:
    """Least-squares ``(slope, intercept)`` of y on x."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    dx = x - x.mean()
    sxx = float(dx @ dx)
    if sxx <= 0.0:
        raise DatasetError("predictor is constant; regression undefined")
    slope = float(dx @ (y - y.mean())) / sxx
    return slope, float(y.mean() - slope * x.mean())


def pooled_ols(dataset: Dataset, predictor: str = "score") -> RegressionFit:
    """Pooled least-squares line predicting the other variable from ``predictor``.

    ``predictor="score"`` fits target on score (the Cleary direction);
    ``"target"`` fits score on target. Residual = actual - predicted.
    """
    if predictor == "score":
        x, y = dataset.scores, dataset.targets
    elif predictor == "target":
        x, y = dataset.targets, dataset.scores
    else:
        raise ValueError(f"predictor must be 'score' or 'target', got {predictor!r}")
    slope, intercept = fit_line(x, y)
    residuals = y - (intercept + slope * x)
    residuals.setflags(write=False)
    return RegressionFit(slope, intercept, predictor, residuals)


def iter_groups(dataset: Dataset) -> Iterator[tuple[str, np.ndarray]]:
    for g in dataset.group_labels:
        yield g, dataset.groups == g
