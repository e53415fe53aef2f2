"""Seeded synthetic data and brute-force enumerations used as oracles.

All randomness comes from numpy's PCG64 bit generator seeded explicitly, so
the same seed gives a bit-identical dataset. Correlated draws are built
from independent standard normals with a hand-written 3x3 Cholesky factor
(plain arithmetic, no LAPACK) to keep the output platform-independent.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass
from typing import Iterator, Mapping

import numpy as np

from .core import ConfusionMatrix, Dataset, dump_dataset
from .correlation import darlington_targets

RNG_ALGORITHM = "numpy.random.PCG64"

# Point-biserial correlation of a median split of a standard normal with a
# variable whose latent correlation is rho equals rho * phi(0) / 0.5.
DICHOTOMY_ATTENUATION = math.sqrt(2.0 / math.pi)


class InfeasibleSpec(ValueError):
    """Requested correlations cannot come from any Gaussian model."""


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed)))


@dataclass(frozen=True)
class GaussianGroupSpec:
    """Bivariate normal (score, target) for one group."""

    mean_r: float = 0.0
    mean_y: float = 0.0
    sd_r: float = 1.0
    sd_y: float = 1.0
    rho_ry_within: float = 0.5
    group_weight: float = 0.5

    def __post_init__(self):
        if self.sd_r <= 0 or self.sd_y <= 0:
            raise ValueError("standard deviations must be positive")
        if not -1 < self.rho_ry_within < 1:
            raise ValueError("rho_ry_within must lie strictly inside (-1, 1)")
        if not 0 < self.group_weight < 1:
            raise ValueError("group_weight must lie in (0, 1)")

    @property
    def slope(self) -> float:
        """Slope of the within-group regression of target on score."""
        return self.rho_ry_within * self.sd_y / self.sd_r

    @property
    def intercept(self) -> float:
        return self.mean_y - self.slope * self.mean_r


def group_sizes(weights: Mapping[str, float], n: int) -> dict[str, int]:
    """Split ``n`` by weight; the last group absorbs the rounding remainder."""
    labels = list(weights)
    sizes = {g: int(math.floor(weights[g] * n)) for g in labels[:-1]}
    sizes[labels[-1]] = n - sum(sizes.values())
    return sizes


def generate_two_group(specs: Mapping[str, GaussianGroupSpec], n: int, seed: int) -> Dataset:
    """Draw ``n`` records split over groups by weight, groups in spec order."""
    if len(specs) < 2:
        raise ValueError("need at least two group specs")
    total = sum(s.group_weight for s in specs.values())
    if not math.isclose(total, 1.0, abs_tol=1e-9):
        raise ValueError(f"group weights must sum to 1, got {total}")
    sizes = group_sizes({g: s.group_weight for g, s in specs.items()}, n)
    rng = make_rng(seed)
    groups, scores, targets = [], [], []
    for g, spec in specs.items():
        m = sizes[g]
        if m < 2:
            raise ValueError(f"group {g!r} would get {m} records; increase n")
        z1 = rng.standard_normal(m)
        z2 = rng.standard_normal(m)
        rho = spec.rho_ry_within
        scores.append(spec.mean_r + spec.sd_r * z1)
        targets.append(spec.mean_y + spec.sd_y * (rho * z1 + math.sqrt(1 - rho * rho) * z2))
        groups.extend([g] * m)
    return Dataset(groups=groups, scores=np.concatenate(scores), targets=np.concatenate(targets))


@dataclass(frozen=True)
class TargetCorrelationSpec:
    rho_ay: float
    rho_ry: float
    n: int = 100_000
    seed: int = 0

    def __post_init__(self):
        for name in ("rho_ay", "rho_ry"):
            if not -1 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in [-1, 1]")
        if self.n < 4:
            raise ValueError("n must be at least 4")


def target_rho_ar(spec: TargetCorrelationSpec, criterion: int) -> float:
    target = darlington_targets(spec.rho_ay, spec.rho_ry).target(criterion)
    if target is None:
        raise InfeasibleSpec("criterion 1 is undefined at rho_ry = 0")
    return float(target)


def _cholesky3(c_lr: float, c_ly: float, c_ry: float) -> tuple[float, ...]:
    """Lower-triangular factor of the latent (L, R, Y) correlation matrix.

    Raises InfeasibleSpec naming the violated bound when the matrix is not
    positive semi-definite.
    """
    tol = 1e-12
    for name, v in (("rho(L,R)", c_lr), ("rho(L,Y)", c_ly), ("rho(R,Y)", c_ry)):
        if abs(v) > 1 + tol:
            raise InfeasibleSpec(f"latent {name} = {v:.4f} exceeds 1 in magnitude")
    l22_sq = 1.0 - c_lr * c_lr
    l22 = math.sqrt(max(l22_sq, 0.0))
    if l22 > tol:
        l32 = (c_ry - c_lr * c_ly) / l22
    else:
        if abs(c_ry - c_lr * c_ly) > 1e-9:
            raise InfeasibleSpec("rho(L,R) = +-1 forces rho(R,Y) = rho(L,R) * rho(L,Y)")
        l32 = 0.0
    l33_sq = 1.0 - c_ly * c_ly - l32 * l32
    if l33_sq < -1e-9:
        det = 1 - c_lr ** 2 - c_ly ** 2 - c_ry ** 2 + 2 * c_lr * c_ly * c_ry
        raise InfeasibleSpec(
            f"correlation matrix is not positive semi-definite (determinant {det:.4g}); "
            f"need rho(R,Y) within rho(L,R)*rho(L,Y) +- sqrt((1-rho(L,R)^2)(1-rho(L,Y)^2))")
    return l22, c_lr, l32, c_ly, math.sqrt(max(l33_sq, 0.0))


def generate_correlated(spec: TargetCorrelationSpec, criterion: int,
                        group_labels: tuple[str, str] = ("1", "0")) -> Dataset:
    """Binary A, real R and Y with rho_AR set by a Darlington criterion.

    A is a latent standard normal split at its sample median (first label =
    upper half). Latent correlations are divided by sqrt(2/pi) beforehand so
    the measured point-biserial correlations hit the requested values.
    """
    rho_ar = target_rho_ar(spec, criterion)
    c_lr = rho_ar / DICHOTOMY_ATTENUATION
    c_ly = spec.rho_ay / DICHOTOMY_ATTENUATION
    l22, l21, l32, l31, l33 = _cholesky3(c_lr, c_ly, spec.rho_ry)
    rng = make_rng(spec.seed)
    z = rng.standard_normal((3, spec.n))
    latent = z[0]
    r = l21 * z[0] + l22 * z[1]
    if spec.rho_ry == 1:
        y = r.copy()
    else:
        y = l31 * z[0] + l32 * z[1] + l33 * z[2]
    upper = latent > np.median(latent)
    groups = np.where(upper, group_labels[0], group_labels[1])
    return Dataset(groups=groups, scores=r, targets=y)


@dataclass(frozen=True)
class ItemResponseSpec:
    """Test items answered by two groups with a latent ability.

    P(correct on item k) = floor + span * Phi(theta - difficulty_k); the
    item ``dif_item`` is ``delta`` harder for the second group at every
    ability level. Difficulties are evenly spaced on [-1.5, 1.5].
    """

    n_per_group: int = 5000
    n_items: int = 20
    dif_item: int = 0
    delta: float = 0.0
    ability_shift: float = 0.0
    floor: float = 0.25
    span: float = 0.5
    seed: int = 0
    group_labels: tuple[str, str] = ("a", "b")

    def __post_init__(self):
        if self.n_items < 2:
            raise ValueError("need at least 2 items")
        if not 0 <= self.dif_item < self.n_items:
            raise ValueError("dif_item out of range")
        if self.floor - self.delta < 0 or self.floor + self.span > 1:
            raise ValueError("response probabilities must stay within [0, 1]")


def _normal_cdf(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.vectorize(math.erf)(x / math.sqrt(2.0)))


def generate_items(spec: ItemResponseSpec) -> Dataset:
    """Dataset with items ``q0..``; score = share correct, target = latent ability."""
    rng = make_rng(spec.seed)
    n = spec.n_per_group
    theta = np.concatenate([rng.standard_normal(n), rng.standard_normal(n) + spec.ability_shift])
    second = np.arange(2 * n) >= n
    difficulty = np.linspace(-1.5, 1.5, spec.n_items)
    items = {}
    for k in range(spec.n_items):
        p = spec.floor + spec.span * _normal_cdf(theta - difficulty[k])
        if k == spec.dif_item:
            p = p - spec.delta * second
        items[f"q{k}"] = (rng.random(2 * n) < p).astype(np.int64)
    score = np.mean(list(items.values()), axis=0)
    groups = np.where(second, spec.group_labels[1], spec.group_labels[0])
    return Dataset(groups=groups, scores=score, targets=theta, items=items)


def confusion_matrices(max_count: int) -> list[ConfusionMatrix]:
    """Every matrix with cells in ``0..max_count`` except all-zero, lexicographic."""
    if max_count < 0:
        raise ValueError("max_count must be non-negative")
    cells = range(max_count + 1)
    return [ConfusionMatrix(*c) for c in itertools.product(cells, repeat=4) if any(c)]


def enumerate_confusion_pairs(max_count: int) -> Iterator[tuple[ConfusionMatrix, ConfusionMatrix]]:
    """All ordered pairs of non-empty matrices with cells in ``0..max_count``."""
    matrices = confusion_matrices(max_count)
    return itertools.product(matrices, repeat=2)


# ---------------------------------------------------------------------------
# Spec files for the command line
# ---------------------------------------------------------------------------

def generate_from_spec(spec: Mapping, seed: int | None = None) -> tuple[Dataset, dict]:
    """Build a dataset from a JSON-style spec; returns it with the sidecar metadata.

    ``{"kind": "two_group", "n": ..., "seed": ..., "groups": {label: {GaussianGroupSpec fields}}}``
    or ``{"kind": "correlated", "rho_ay": ..., "rho_ry": ..., "n": ..., "seed": ..., "criterion": 1-4}``.
    """
    kind = spec.get("kind")
    seed = int(spec.get("seed", 0) if seed is None else seed)
    if kind == "two_group":
        groups = {g: GaussianGroupSpec(**fields) for g, fields in spec["groups"].items()}
        n = int(spec["n"])
        dataset = generate_two_group(groups, n, seed)
        resolved = {"kind": kind, "n": n, "seed": seed,
                    "groups": {g: asdict(s) for g, s in groups.items()}}
    elif kind == "correlated":
        tspec = TargetCorrelationSpec(float(spec["rho_ay"]), float(spec["rho_ry"]),
                                      int(spec.get("n", 100_000)), seed)
        criterion = int(spec["criterion"])
        dataset = generate_correlated(tspec, criterion)
        resolved = {"kind": kind, **asdict(tspec), "criterion": criterion,
                    "target_rho_ar": target_rho_ar(tspec, criterion)}
    else:
        raise ValueError(f"unknown synth kind {kind!r} (expected 'two_group' or 'correlated')")
    sidecar = {"spec": resolved, "seed": seed, "rng": RNG_ALGORITHM, "records": len(dataset)}
    return dataset, sidecar


def write_synthetic(dataset: Dataset, sidecar: dict, out_path) -> str:
    """Write the CSV and a ``<out>.json`` sidecar; returns the sidecar path."""
    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        dump_dataset(dataset, fh)
    sidecar_path = f"{out_path}.json"
    with open(sidecar_path, "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return sidecar_path

