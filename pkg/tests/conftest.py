import numpy as np
import pytest

from fairlens.core import Dataset
from fairlens.synth import GaussianGroupSpec, generate_two_group

_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    number, title = marker.args
    failed = report.failed
    if report.when == "call" or failed:
        prev = _ACCEPTANCE.get(number, (title, True))
        _ACCEPTANCE[number] = (title, prev[1] and not failed)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, ok = _ACCEPTANCE[number]
        terminalreporter.write_line(f"ACCEPTANCE {number:>2} {'PASS' if ok else 'FAIL'}  {title}")


# ---------------------------------------------------------------------------
# Shared fixture builders
# ---------------------------------------------------------------------------

def common_line_groups(n=2000, seed=7):
    """Two groups on one common line Y = R + noise, means shifted along it."""
    common = dict(sd_r=1.0, sd_y=1.25, rho_ry_within=0.8, group_weight=0.5)
    specs = {"pi1": GaussianGroupSpec(mean_r=0.0, mean_y=0.0, **common),
             "pi2": GaussianGroupSpec(mean_r=1.0, mean_y=1.0, **common)}
    return generate_two_group(specs, n, seed)


def offset_line_groups(n=20000, seed=11, offset=1.0):
    """Parallel lines of slope 1; the second group's line sits ``offset`` higher."""
    common = dict(sd_r=1.0, sd_y=1.25, rho_ry_within=0.8, group_weight=0.5)
    specs = {"pi1": GaussianGroupSpec(mean_r=0.0, mean_y=0.0, **common),
             "pi2": GaussianGroupSpec(mean_r=0.5, mean_y=0.5 + offset, **common)}
    return generate_two_group(specs, n, seed)


def identical_groups(n=400, seed=3):
    """Group b is an exact copy of group a."""
    rng = np.random.default_rng(seed)
    r = rng.random(n)
    y = (rng.random(n) < r).astype(float)
    return Dataset(groups=["a"] * n + ["b"] * n, scores=np.concatenate([r, r]),
                   targets=np.concatenate([y, y]))


def from_matrices(matrices, cutoff=0.5):
    """Dataset whose per-group confusion matrices at ``cutoff`` (y* = 0.5) are given.

    ``matrices`` maps group -> (tp, fp, fn, tn).
    """
    groups, scores, targets = [], [], []
    for g, (tp, fp, fn, tn) in matrices.items():
        for count, r, y in ((tp, 0.9, 1), (fp, 0.9, 0), (fn, 0.1, 1), (tn, 0.1, 0)):
            groups += [g] * count
            scores += [r] * count
            targets += [y] * count
    return Dataset(groups=groups, scores=scores, targets=targets)


@pytest.fixture
def common_line():
    return common_line_groups()


@pytest.fixture
def same_groups():
    return identical_groups()
