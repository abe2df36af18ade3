"""Command-line entry point: ``quantflow <experiment> [--config FILE] [--set k=v ...]``.

Exit codes: 0 all thresholds met, 2 threshold failed, 3 input error,
4 numerical abort.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np
import yaml

from .errors import InputError, NumericalError
from .experiments import DEFAULTS, RUNNERS, resolve_params, validate

log = logging.getLogger("quantflow")

EXIT_OK, EXIT_THRESHOLD, EXIT_INPUT, EXIT_NUMERICAL = 0, 2, 3, 4


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else repr(v)
    return obj


def load_config(path) -> dict:
    """Flat YAML mapping of parameter names to values."""
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise InputError(f"config {path} must be a mapping")
    nested = [k for k, v in data.items() if isinstance(v, dict)]
    if nested:
        raise InputError(f"config must be flat; nested keys: {nested}")
    return data


def parse_overrides(pairs) -> dict:
    out = {}
    for item in pairs or []:
        if "=" not in item:
            raise InputError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = yaml.safe_load(v)
    return out


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="quantflow", description="Quantization gradient-flow experiments")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="experiment", required=True)
    for name in RUNNERS:
        sp = sub.add_parser(name, help=f"run the {name} experiment")
        sp.add_argument("--config", type=Path, help="flat YAML parameter file")
        sp.add_argument("--set", dest="overrides", action="append", metavar="KEY=VALUE",
                        help="override a parameter (repeatable)")
        sp.add_argument("--out", type=Path, default=None, help="output directory (default: runs/<experiment>)")
        sp.add_argument("--jobs", type=int, default=1, help="worker processes for sweep cells")
        if "seed" in DEFAULTS[name]:
            sp.add_argument("--seed", type=int, default=None)
    return ap


def run(experiment: str, params: dict, out: Path, jobs: int = 1) -> tuple[dict, int]:
    """Run one experiment and write ``report.json``; returns the report and exit code."""
    out.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    report = {"experiment": experiment, "config": _jsonable(params)}
    try:
        p = resolve_params(experiment, params)
        report["config"] = _jsonable(p)
        validate(experiment, p)
        metrics, checks, files = RUNNERS[experiment](p, out, jobs)
        passed = all(checks.values())
        report.update({"metrics": _jsonable(metrics), "checks": _jsonable(checks), "passed": passed,
                       "files": sorted(files)})
        code = EXIT_OK if passed else EXIT_THRESHOLD
    except InputError as exc:
        report["error"] = {"kind": "input", "type": type(exc).__name__, "message": str(exc)}
        code = EXIT_INPUT
    except NumericalError as exc:
        report["error"] = {"kind": "numerical", "type": type(exc).__name__, "message": str(exc),
                           **{k: _jsonable(v) for k, v in vars(exc).items()}}
        code = EXIT_NUMERICAL
    report["wall_time_s"] = time.perf_counter() - started
    report["exit_code"] = code
    with open(out / "report.json", "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
    return report, code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        params = load_config(args.config) if args.config else {}
        params.update(parse_overrides(args.overrides))
    except (InputError, OSError, yaml.YAMLError) as exc:
        print(json.dumps({"error": {"kind": "input", "message": str(exc)}}), file=sys.stderr)
        return EXIT_INPUT
    if getattr(args, "seed", None) is not None:
        params["seed"] = args.seed
    params.pop("experiment", None)
    out = args.out or Path(params.pop("out", Path("runs") / args.experiment))
    params.pop("out", None)
    report, code = run(args.experiment, params, Path(out), args.jobs)
    summary = {k: report[k] for k in ("experiment", "passed", "checks", "error") if k in report}
    print(json.dumps(summary, indent=2))
    log.info("report written to %s", Path(out) / "report.json")
    return code


if __name__ == "__main__":
    sys.exit(main())
