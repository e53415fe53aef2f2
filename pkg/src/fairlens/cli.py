"""Command-line audit tool.

Subcommands: ``audit``, ``figure2``, ``synth``, ``solve``, ``dif``.

``audit`` exit status: 0 every criterion passed, 1 some criterion failed,
2 none failed but some were undefined, 3 unreadable input, 4 bad
configuration.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import io
import json
import math
import os
import sys
from dataclasses import asdict
from typing import Callable

import numpy as np

from . import __version__
from .classification import (
    MATRIX_CRITERIA,
    InfeasibleThresholds,
    ThorndikianParams,
    canonical_criterion,
    confusion_by_group,
    guion_individual,
    jones_general_report,
    matrix_report,
    pooled_accuracy_cutoff,
    solve_fair_thresholds,
)
from .core import (
    DEFAULT_TOLERANCE,
    FAIL,
    UNDEFINED,
    CriterionReport,
    Dataset,
    DatasetError,
    ThresholdMap,
    read_dataset,
)
from .correlation import (
    compromise_check,
    culturally_optimum,
    darlington_check,
    incompatibility_scan,
    step_grid,
    write_scan_csv,
)
from .dif import DEFAULT_FLAG_THRESHOLD, DIF_STRATA, dif_analyze
from .regression import (
    CALIBRATION_BINS,
    CONVERSE_CALIBRATION_BINS,
    BinSpec,
    calibration_check,
    cleary_bias,
    converse_calibration_check,
    converse_cleary,
    einhorn_bass,
    jones_mean_fair,
)
from .synth import generate_from_spec, write_synthetic

SCHEMA_VERSION = 1
EXIT_PASS, EXIT_FAIL, EXIT_UNDEFINED, EXIT_INPUT, EXIT_CONFIG = 0, 1, 2, 3, 4
SEED_ENV = "FAIRLENS_SEED"

THRESHOLD_CRITERIA = set(MATRIX_CRITERIA) | {"einhorn_bass"}
CORRELATION_CRITERIA = {"darlington1", "darlington2", "darlington3", "darlington4", "compromise"}
OTHER_CRITERIA = {"cleary_bias", "converse_cleary", "jones_mean_fair", "calibration",
                  "converse_calibration", "guion_individual", "jones_general_standard"}
ALL_CRITERIA = THRESHOLD_CRITERIA | CORRELATION_CRITERIA | OTHER_CRITERIA
DEFAULT_CRITERIA = ("thorndike_ratio", "cole_tpr", "linn_ppv", "separation", "sufficiency",
                    "cleary_bias", "converse_cleary", "jones_mean_fair")


ALL_MARKER = "?"  # prefix for criteria pulled in by "all": skipped when inapplicable


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# JSON helpers
# ---------------------------------------------------------------------------

def jsonable(obj):
    """Plain JSON types; infinities become the strings "inf"/"-inf"."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        obj = float(obj)
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        return obj
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    return obj


def report_dict(report: CriterionReport) -> dict:
    return jsonable({
        "criterion": report.criterion,
        "per_group_value": report.per_group_value,
        "max_disparity": report.max_disparity,
        "tolerance": report.tolerance,
        "verdict": report.verdict,
        "details": report.details,
        "warnings": list(report.warnings),
    })


def _write_text(text: str, out: str | None) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


# ---------------------------------------------------------------------------
# Config parsing
# ---------------------------------------------------------------------------

def parse_schema(value: str | None) -> dict[str, str] | None:
    """JSON file path, or inline ``group=race,score=sat,target=gpa``."""
    if not value:
        return None
    if os.path.exists(value):
        with open(value, encoding="utf-8") as fh:
            schema = json.load(fh)
        if not isinstance(schema, dict):
            raise ConfigError("schema file must hold a JSON object")
        return {str(k): str(v) for k, v in schema.items()}
    schema = {}
    for part in value.split(","):
        key, sep, col = part.partition("=")
        if not sep:
            raise ConfigError(f"schema entry {part!r} is not key=column")
        schema[key.strip()] = col.strip()
    return schema


def parse_criteria(value: str | None) -> list[str]:
    if not value:
        return list(DEFAULT_CRITERIA)
    names = []
    for raw in value.split(","):
        raw = raw.strip()
        if not raw:
            continue
        if raw == "all":
            names.extend(ALL_MARKER + n for n in sorted(ALL_CRITERIA))
            continue
        if raw == "dif":
            names.append("dif")
            continue
        try:
            name = canonical_criterion(raw)
        except ValueError:
            name = raw
        if name not in ALL_CRITERIA:
            raise ConfigError(f"unknown criterion {raw!r}; known: {', '.join(sorted(ALL_CRITERIA))}, dif")
        names.append(name)
    explicit = {n for n in names if not n.startswith(ALL_MARKER)}
    return list(dict.fromkeys(n for n in names if n.lstrip(ALL_MARKER) not in explicit or
                              not n.startswith(ALL_MARKER)))


def _resolve_seed(seed: int | None) -> int | None:
    env = os.environ.get(SEED_ENV)
    if env is not None and env.strip():
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"{SEED_ENV}={env!r} is not an integer") from None
    return seed


def _default_y_star(dataset: Dataset, args) -> float | None:
    if args.y_star is not None:
        return args.y_star
    if dataset.target_is_binary:
        return 0.5
    return None


def resolve_thresholds(dataset: Dataset, args, tolerance: float) -> tuple[ThresholdMap, dict]:
    """Threshold map and its provenance from ``--thresholds``."""
    source = args.thresholds
    y_star = _default_y_star(dataset, args)
    if source is None:
        if y_star is None:
            raise ConfigError("continuous target: give --y-star or --thresholds")
        cut = pooled_accuracy_cutoff(dataset, y_star)
        return (ThresholdMap.uniform(dataset.group_labels, cut, y_star),
                {"source": "default: single pooled accuracy-optimal cutoff"})
    if source.startswith("solver:"):
        criterion = source.split(":", 1)[1]
        if y_star is None:
            raise ConfigError("solver thresholds on a continuous target need --y-star")
        try:
            name = canonical_criterion(criterion)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        params = _thorndikian_params(args) if name == "thorndikian" else None
        info = {"source": source, "criterion": name, "reference": dataset.group_labels[0]}
        try:
            tmap = solve_fair_thresholds(dataset, name, y_star, tolerance, params)
            info["feasible"] = True
        except InfeasibleThresholds as exc:
            tmap = exc.thresholds
            info["feasible"] = False
            info["diagnostic"] = str(exc)
        return tmap, info
    try:
        cut = float(source)
    except ValueError:
        cut = None
    if cut is not None:
        y = y_star if y_star is not None else cut
        return ThresholdMap.uniform(dataset.group_labels, cut, y), {"source": f"fixed:{source}"}
    try:
        with open(source, encoding="utf-8") as fh:
            tmap = ThresholdMap.loads(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read thresholds file {source!r}: {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"bad thresholds file {source!r}: {exc}") from None
    if args.y_star is not None:
        tmap = ThresholdMap(tmap.per_group_cutoff, args.y_star)
    try:
        tmap.check_covers(dataset)
    except DatasetError as exc:
        raise ConfigError(str(exc)) from None
    return tmap, {"source": f"file:{source}"}


def _thorndikian_params(args) -> ThorndikianParams:
    try:
        return ThorndikianParams(args.lambda1, args.lambda2)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _bins(args, default: BinSpec) -> BinSpec:
    if args.bins is None:
        return default
    return BinSpec(default.mode, args.bins, default.min_per_cell, default.value_range)


# ---------------------------------------------------------------------------
# audit
# ---------------------------------------------------------------------------

def _run_criterion(name: str, dataset: Dataset, args, tmap: ThresholdMap | None,
                   group_as_one: str | None, tol: float) -> CriterionReport:
    if name in MATRIX_CRITERIA:
        params = _thorndikian_params(args) if name == "thorndikian" else None
        return matrix_report(
            name, confusion_by_group(dataset, tmap), tol, params,
            extra_details={"thresholds": dict(tmap.per_group_cutoff),
                           "target_cutoff": tmap.target_cutoff})
    runners: dict[str, Callable[[], CriterionReport]] = {
        "einhorn_bass": lambda: einhorn_bass(dataset, tmap, args.halfwidth, tol),
        "cleary_bias": lambda: cleary_bias(dataset, args.fit_on, tol, args.fail_on),
        "converse_cleary": lambda: converse_cleary(dataset, tol, args.fail_on),
        "jones_mean_fair": lambda: jones_mean_fair(dataset, args.fit_on, tol),
        "calibration": lambda: calibration_check(dataset, _bins(args, CALIBRATION_BINS), tol),
        "converse_calibration": lambda: converse_calibration_check(
            dataset, _bins(args, CONVERSE_CALIBRATION_BINS), tol),
        "guion_individual": lambda: guion_individual(
            dataset, _bins(args, BinSpec("equal-count", 10)), tol),
        "jones_general_standard": lambda: jones_general_report(dataset, tol),
        "compromise": lambda: compromise_check(dataset, group_as_one, args.lam, tol),
    }
    if name.startswith("darlington"):
        return darlington_check(dataset, group_as_one, int(name[-1]), tol)
    return runners[name]()


def dataset_summary(dataset: Dataset, y_star: float | None) -> dict:
    summary = {"records": len(dataset), "group_sizes": dataset.group_sizes(),
               "items": list(dataset.item_ids), "features": list(dataset.features)}
    if y_star is not None:
        summary["base_rates"] = {
            g: float(np.mean(dataset.targets[dataset.mask(g)] >= y_star))
            for g in dataset.group_labels}
        summary["base_rate_cutoff"] = y_star
    return summary


def build_audit(dataset: Dataset, args) -> tuple[dict, int]:
    criteria = parse_criteria(args.criteria)
    tol = args.tolerance
    if tol < 0:
        raise ConfigError("--tolerance must be non-negative")
    needs_thresholds = any(c.lstrip(ALL_MARKER) in THRESHOLD_CRITERIA for c in criteria)
    tmap, provenance = (resolve_thresholds(dataset, args, tol) if needs_thresholds
                        else (None, {"source": "not needed"}))
    group_as_one = args.group_as_one
    if any(c.lstrip(ALL_MARKER) in CORRELATION_CRITERIA for c in criteria) or args.k is not None:
        if group_as_one is None:
            group_as_one = dataset.group_labels[0]
    reports = []
    skipped = {}
    dif_reports = None
    for name in criteria:
        if name == "dif":
            dif_reports = dif_analyze(dataset, args.ability, _bins(args, DIF_STRATA),
                                      args.flag_threshold)
            continue
        optional = name.startswith(ALL_MARKER)
        name = name.lstrip(ALL_MARKER)
        try:
            reports.append(_run_criterion(name, dataset, args, tmap, group_as_one, tol))
        except (DatasetError, ValueError) as exc:
            if not optional:
                raise
            skipped[name] = str(exc)

    verdicts = [r.verdict for r in reports]
    if FAIL in verdicts:
        status = EXIT_FAIL
    elif UNDEFINED in verdicts:
        status = EXIT_UNDEFINED
    else:
        status = EXIT_PASS

    y_star = tmap.target_cutoff if tmap is not None else _default_y_star(dataset, args)
    doc = {"schema_version": SCHEMA_VERSION,
           "tool": {"name": "fairlens", "version": __version__}}
    if not args.no_timestamp:
        doc["timestamp"] = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    doc["input"] = {"path": args.input, "schema": parse_schema(args.schema) or {}}
    doc["dataset"] = dataset_summary(dataset, y_star)
    doc["thresholds"] = {**provenance, **(
        {"per_group_cutoff": tmap.per_group_cutoff, "target_cutoff": tmap.target_cutoff}
        if tmap is not None else {})}
    doc["defaults"] = {
        "tolerance": tol,
        "prediction_rule": "score >= group cutoff; ground truth positive iff target >= y*",
        "multi_group_disparity": "max pairwise absolute difference",
        "undefined_values": "reported as null; any undefined value makes the verdict undefined",
        "group_as_one": group_as_one,
        "cleary_fit_on": args.fit_on,
        "cleary_fail_on": args.fail_on,
        "einhorn_bass_halfwidth": args.halfwidth if args.halfwidth is not None
        else "0.1 x pooled score standard deviation",
        "calibration_bins": "10 equal-width on [0, 1]" if args.bins is None else args.bins,
        "converse_calibration_bins": "10 equal-width on observed target range, centre = cell mean"
        if args.bins is None else args.bins,
        "guion_bins": "10 equal-count on score; success proxy = pooled mean target per bin"
        if args.bins is None else args.bins,
        "dif_strata": "5 equal-count" if args.bins is None else args.bins,
        "dif_matching": args.ability,
        "dif_flag_threshold": args.flag_threshold,
        "jones_sweep": "integer top-n counts; ties broken by row order",
        "lambda": args.lam, "lambda1": args.lambda1, "lambda2": args.lambda2,
    }
    doc["criteria"] = [report_dict(r) for r in reports]
    if skipped:
        doc["skipped"] = skipped
    if dif_reports is not None:
        doc["dif"] = [jsonable(asdict(r)) for r in dif_reports]
    if args.k is not None:
        if not args.candidates:
            raise ConfigError("--k needs --candidates")
        opt = culturally_optimum(dataset, args.candidates.split(","), args.k, group_as_one)
        doc["culturally_optimum"] = jsonable(asdict(opt))
    doc["summary"] = {"pass": verdicts.count("pass"), "fail": verdicts.count(FAIL),
                      "undefined": verdicts.count(UNDEFINED), "exit_status": status}
    return doc, status


def audit_csv(doc: dict) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["criterion", "group", "value", "value2", "max_disparity", "tolerance",
                     "verdict"])
    for rep in doc["criteria"]:
        for group, value in rep["per_group_value"].items():
            if isinstance(value, list):
                v1, v2 = value
            else:
                v1, v2 = value, ""
            writer.writerow([rep["criterion"], group, "" if v1 is None else v1,
                             "" if v2 is None else v2,
                             "" if rep["max_disparity"] is None else rep["max_disparity"],
                             rep["tolerance"], rep["verdict"]])
    return buf.getvalue()


def cmd_audit(args) -> int:
    try:
        dataset = read_dataset(args.input, parse_schema(args.schema))
    except (OSError, DatasetError, UnicodeDecodeError) as exc:
        print(f"error: cannot load {args.input}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        doc, status = build_audit(dataset, args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DatasetError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    if args.format == "csv":
        text = audit_csv(doc)
    else:
        text = json.dumps(doc, indent=2) + "\n"
    _write_text(text, args.out)
    return status


# ---------------------------------------------------------------------------
# other subcommands
# ---------------------------------------------------------------------------

def cmd_figure2(args) -> int:
    try:
        grid = step_grid(args.grid_step)
        rows = incompatibility_scan(args.rho_ay, grid)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    buf = io.StringIO()
    write_scan_csv(rows, buf)
    _write_text(buf.getvalue(), args.out)
    return 0


def cmd_synth(args) -> int:
    try:
        with open(args.spec, encoding="utf-8") as fh:
            spec = json.load(fh)
        seed = _resolve_seed(args.seed)
        dataset, sidecar = generate_from_spec(spec, seed)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read spec {args.spec}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ValueError, KeyError, TypeError) as exc:
        print(f"error: invalid spec: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    write_synthetic(dataset, sidecar, args.out)
    return 0


def cmd_solve(args) -> int:
    try:
        dataset = read_dataset(args.input, parse_schema(args.schema))
    except (OSError, DatasetError) as exc:
        print(f"error: cannot load {args.input}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    y_star = _default_y_star(dataset, args)
    if y_star is None:
        print("error: continuous target needs --y-star", file=sys.stderr)
        return EXIT_CONFIG
    try:
        name = canonical_criterion(args.criterion)
        params = _thorndikian_params(args) if name == "thorndikian" else None
        tmap = solve_fair_thresholds(dataset, name, y_star, args.tolerance, params, args.reference)
        status = 0
    except InfeasibleThresholds as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        tmap, status = exc.thresholds, EXIT_FAIL
    except (ValueError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    _write_text(tmap.dumps(), args.out)
    return status


def cmd_dif(args) -> int:
    try:
        dataset = read_dataset(args.input, parse_schema(args.schema))
        reports = dif_analyze(dataset, args.ability, _bins(args, DIF_STRATA), args.flag_threshold)
    except (OSError, DatasetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    doc = {"schema_version": SCHEMA_VERSION, "tool": {"name": "fairlens", "version": __version__},
           "dif": [jsonable(asdict(r)) for r in reports]}
    _write_text(json.dumps(doc, indent=2) + "\n", args.out)
    return EXIT_FAIL if any(r.flagged for r in reports) else 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", required=True, help="CSV with group, score, target columns")
    p.add_argument("--schema", help="JSON file or inline group=col,score=col,target=col")
    p.add_argument("--out", help="output path (default: stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fairlens", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"fairlens {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("audit", help="evaluate fairness criteria on a CSV")
    _add_common(p)
    p.add_argument("--criteria", help="comma-separated criterion names, 'all', and/or 'dif'")
    p.add_argument("--thresholds", help="threshold file, 'solver:<criterion>', or one cutoff value")
    p.add_argument("--y-star", type=float, help="target cutoff y* (default 0.5 for 0/1 targets)")
    p.add_argument("--tolerance", type=float, default=DEFAULT_TOLERANCE)
    p.add_argument("--bins", type=int, help="bin count for binned criteria")
    p.add_argument("--lambda", dest="lam", type=float, default=0.0,
                   help="exponent for the compromise correlation criterion")
    p.add_argument("--lambda1", type=float, default=1.0)
    p.add_argument("--lambda2", type=float, default=1.0)
    p.add_argument("--k", type=float, help="diversity weight for the culturally optimum composite")
    p.add_argument("--candidates", help="comma-separated columns combined by the optimum search")
    p.add_argument("--group-as-one", help="group coded 1 in correlation criteria")
    p.add_argument("--fit-on", default="pooled", help="Cleary fit population: pooled or a group")
    p.add_argument("--fail-on", default="both", choices=("both", "under", "over"))
    p.add_argument("--halfwidth", type=float, help="Einhorn-Bass boundary window half-width")
    p.add_argument("--ability", default="total-score", choices=("total-score", "target"))
    p.add_argument("--flag-threshold", type=float, default=DEFAULT_FLAG_THRESHOLD)
    p.add_argument("--seed", type=int, help="unused by audit; accepted for config symmetry")
    p.add_argument("--format", default="json", choices=("json", "csv"))
    p.add_argument("--no-timestamp", action="store_true")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("figure2", help="fair rho_AR values across rho_RY (CSV)")
    p.add_argument("--rho-ay", type=float, required=True)
    p.add_argument("--grid-step", type=float, default=0.05)
    p.add_argument("--out")
    p.set_defaults(func=cmd_figure2)

    p = sub.add_parser("synth", help="generate a synthetic dataset from a JSON spec")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, help=f"overrides the spec seed; {SEED_ENV} overrides both")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("solve", help="per-group cutoffs equalizing a criterion")
    _add_common(p)
    p.add_argument("--criterion", default="thorndike_ratio")
    p.add_argument("--y-star", type=float)
    p.add_argument("--tolerance", type=float, default=DEFAULT_TOLERANCE)
    p.add_argument("--lambda1", type=float, default=1.0)
    p.add_argument("--lambda2", type=float, default=1.0)
    p.add_argument("--reference", help="group whose cutoff stays at the pooled optimum")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("dif", help="differential item functioning screen")
    _add_common(p)
    p.add_argument("--ability", default="total-score", choices=("total-score", "target"))
    p.add_argument("--bins", type=int)
    p.add_argument("--flag-threshold", type=float, default=DEFAULT_FLAG_THRESHOLD)
    p.set_defaults(func=cmd_dif)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
