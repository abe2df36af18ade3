"""Experiment drivers: one function per CLI subcommand.

Each driver takes a flat parameter dict and an output directory, writes
its CSV files there and returns ``(metrics, checks, files)``. ``checks``
maps a threshold name to a bool; the run passes iff all of them hold.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import continuum1d as c1
from . import discrete1d as d1
from . import hessian as hs
from . import manifold as mf
from .density import Density1D, integrate, power_normalize, wasserstein_1d
from .errors import InputError
from .hexlattice import calibration, deformation, forms, points

DEFAULTS = {
    "quantize1d": {"N": 64, "r": 2.0, "density": "uniform", "scheme": "adaptive", "dt": None,
                   "t_end": None, "seed": 0, "init": "equispaced", "gtol": 1e-10,
                   "slope_target": -1.0, "slope_tol": 0.2},
    "pde1d": {"density": "cosine:0.1", "r": 2.0, "M": 256, "t_end": 0.5, "f0_amplitude": 0.3,
              "levels": [0.8, 1.0, 1.2], "record_every": 1, "increase_tol": 1e-8, "bound_tol": 1e-6,
              "stationary_grids": [128, 256, 512], "stationary_constant": 10.0},
    "closeness": {"N": [16, 32, 64, 128], "densities": ["uniform", "cosine:0.05"], "T": 0.5, "times": 11,
                  "M": 2048, "amplitude": 0.3, "r": 2.0, "time_exponent": 3.0, "rtol": 1e-11,
                  "slope_target": -4.0, "slope_tol": 0.5},
    "hessian-cx": {"eps": [0.1], "delta": [1e-3, 1e-4, 1e-5], "M": 8192, "rel_tol": 0.05},
    "lattice2d": {"n": 12, "amplitude": 0.2, "seed": 0, "max_iter": 500, "gtol": 1e-13, "snapshot_every": 25,
                  "reduction": 1e-3, "r2_min": 0.9, "deformation": True, "G": 64, "tau": 0.05,
                  "grad_dev": 0.01, "eta": 0.05, "t_end": 0.05, "record_every": 20},
    "calibrate2d": {"n": [4, 6, 8, 12, 16, 24], "G": 1024, "method": "grid", "exponent_target": -2.0,
                    "exponent_tol": 0.05, "samples": 1000, "seed": 0},
    "manifold-moment": {"space": "hyperbolic", "d": 2, "r": 2.0, "delta": 1.0, "profile": "exponential:2",
                        "R_max": 60.0, "powers": [1, 2, 4, 8], "contrast": False, "expect": None},
}


def parse_density(spec) -> Density1D:
    """``uniform``, ``cosine:eps[:k]``, ``exponential:a``, ``grid:path`` or a dict."""
    if isinstance(spec, Density1D):
        return spec
    if isinstance(spec, dict):
        return Density1D.from_config(spec)
    parts = str(spec).split(":")
    kind, args = parts[0], parts[1:]
    if kind == "cosine":
        return Density1D.cosine(float(args[0]) if args else 0.1, int(args[1]) if len(args) > 1 else 1)
    if kind == "exponential":
        return Density1D.exponential(float(args[0]) if args else 1.0)
    if kind == "grid":
        return Density1D.from_config({"kind": "grid", "path": ":".join(args)})
    return Density1D.from_config({"kind": kind})


def parse_profile(spec, R_max: float) -> mf.RadialMeasure:
    parts = str(spec).split(":")
    kind = parts[0]
    if kind == "gaussian":
        return mf.RadialMeasure.gaussian(float(parts[1]) if len(parts) > 1 else 1.0, R_max)
    if kind == "exponential":
        return mf.RadialMeasure.exponential(float(parts[1]), R_max)
    if kind == "power":
        return mf.RadialMeasure.power(float(parts[1]), R_max)
    raise InputError(f"unknown radial profile {spec!r}")


def loglog_slope(x, y) -> float:
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


def _as_list(v):
    return list(v) if isinstance(v, (list, tuple)) else [v]


def _write_rows(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def _pool_map(fn, items, jobs: int):
    if jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(fn, items))
    return [fn(it) for it in items]


# -- quantize1d -----------------------------------------------------------

def _quantize_cell(args):
    N, p = args
    rho = parse_density(p["density"])
    r = float(p["r"])
    cfg = d1.initial_config(int(N), p["init"], r, int(p["seed"]))
    t_end = p["t_end"]
    if p["scheme"] == "implicit":
        T = 5.0 * N ** (r + 1) if t_end is None else float(t_end)
        traj = d1.evolve(cfg, rho, r, scheme="implicit", t_end=T, t_eval=np.linspace(0, T, 21),
                         rtol=1e-10, atol=1e-14)
    else:
        T = 5.0 * N ** (r + 1) if t_end is None else float(t_end)
        traj = d1.evolve(cfg, rho, r, scheme=p["scheme"], dt=p["dt"], t_end=T, gtol=p["gtol"])
    final = traj.final
    grad = float(np.max(np.abs(d1.gradient(final, rho, r))))
    target = power_normalize(rho, 1, r)
    w1 = wasserstein_1d(d1.empirical_measure(final), target, 1)
    E = traj.energies[-1]
    limit = (1.0 / (2 ** r * (r + 1))) * integrate(lambda y: rho(y) ** (1 / (1 + r))) ** (1 + r)
    return {"N": int(N), "energy": E, "scaled_energy": E * N ** r, "continuum_minimum": limit,
            "max_gradient": grad, "W1": w1, "energy_monotone": bool(np.all(np.diff(traj.energies) <= 64 * np.finfo(float).eps * E)),
            "steps": traj.steps, "rejected": traj.rejected, "traj": traj}


def run_quantize1d(p: dict, out: Path, jobs: int = 1):
    Ns = _as_list(p["N"])
    cells = _pool_map(_quantize_cell, [(N, p) for N in Ns], jobs)
    files = []
    for c in cells:
        name = f"trajectory_N{c['N']}.csv"
        c.pop("traj").to_csv(out / name)
        files.append(name)
    _write_rows(out / "summary.csv", ["N", "energy", "scaled_energy", "max_gradient", "W1"],
                [[c["N"], c["energy"], c["scaled_energy"], c["max_gradient"], c["W1"]] for c in cells])
    files.append("summary.csv")
    metrics = {"cells": cells}
    checks = {"energy_nonincreasing": all(c["energy_monotone"] for c in cells)}
    if p["gtol"] is not None:
        checks["stationary"] = all(c["max_gradient"] <= max(p["gtol"], 1e-12) for c in cells)
        metrics["stationary"] = checks["stationary"]
    if len(Ns) >= 3:
        slope = loglog_slope(Ns, [c["W1"] for c in cells])
        metrics["W1_slope"] = slope
        checks["W1_slope"] = abs(slope - p["slope_target"]) <= p["slope_tol"]
    return metrics, checks, files


# -- pde1d ----------------------------------------------------------------

def run_pde1d(p: dict, out: Path, jobs: int = 1):
    rho = parse_density(p["density"])
    r = float(p["r"])
    M = int(p["M"])
    a = float(p["f0_amplitude"])
    f0 = c1.EulerianField.from_function(lambda x: 1 + a * np.sin(2 * np.pi * x) + 0.1 * a * np.cos(6 * np.pi * x), M)
    traj = c1.evolve_eulerian(f0, rho, r, t_end=float(p["t_end"]), record_every=int(p["record_every"]))
    diag = c1.comparison_diagnostics(traj, p["levels"], rho, r)
    inc = diag.increases(float(p["increase_tol"]))
    masses = [fld.mass for fld in traj.fields]
    f_inf = c1.stationary_state(rho, r, M)
    stat = []
    for K in _as_list(p["stationary_grids"]):
        res = float(np.max(np.abs(c1.eulerian_rhs(c1.stationary_state(rho, r, int(K)), rho, r))))
        stat.append({"M": int(K), "residual": res, "bound": p["stationary_constant"] / K ** 2})
    rows = []
    for k, t in enumerate(diag.times):
        row = [t, diag.max_u[k], diag.min_u[k]]
        for c in diag.levels:
            row += [diag.positive[c][k], diag.negative[c][k]]
        rows.append(row)
    header = ["t", "max_u", "min_u"] + [f"{s}_{c}" for c in diag.levels for s in ("pos", "neg")]
    _write_rows(out / "diagnostics.csv", header, rows)
    stride = max(1, len(traj.fields) // 50)
    sub = c1.EulerianTrajectory(times=traj.times[::stride], fields=traj.fields[::stride])
    sub.to_csv(out / "fields.csv")
    metrics = {"steps": traj.steps, "increases": len(inc), "worst_increase": max([i[3] for i in inc], default=0.0),
               "bounds_hold": diag.bounds_hold(float(p["bound_tol"])),
               "mass_drift": float(max(abs(m - 1.0) for m in masses)),
               "distance_to_stationary": float(np.max(np.abs(traj.fields[-1].f - f_inf.f))),
               "stationary_residuals": stat}
    checks = {"comparison": len(inc) == 0, "bounds": metrics["bounds_hold"], "mass": metrics["mass_drift"] <= 1e-8,
              "stationary": all(s["residual"] <= s["bound"] for s in stat)}
    return metrics, checks, ["diagnostics.csv", "fields.csv"]


# -- closeness ------------------------------------------------------------

def _closeness_cell(args):
    dens, p = args
    rho = parse_density(dens)
    r = float(p["r"])
    T = float(p["T"])
    a = float(p["amplitude"])
    ts = np.linspace(0.0, T, int(p["times"]))
    X0 = lambda th: th + a * np.sin(2 * np.pi * th) / (2 * np.pi)
    cont = c1.evolve_lagrangian(c1.LagrangianMap.from_function(X0, int(p["M"])), rho, r, t_end=T, t_eval=ts,
                                scheme="implicit", rtol=float(p["rtol"]), atol=1e-14)
    rows, sups = [], []
    for N in _as_list(p["N"]):
        N = int(N)
        s = N ** float(p["time_exponent"])
        cfg = d1.PointConfig1D(X0((np.arange(N) + 0.5) / N), r)
        tr = d1.evolve(cfg, rho, r, scheme="implicit", t_end=T * s, t_eval=ts * s, rtol=float(p["rtol"]), atol=1e-14)
        series = c1.discrete_continuum_distance(tr, cont, N, time_exponent=float(p["time_exponent"]))
        sups.append(series.sup)
        rows += [[str(dens), N, t, g] for t, g in zip(series.times, series.gap)]
    return {"density": str(dens), "sups": sups, "slope": loglog_slope(_as_list(p["N"]), sups), "rows": rows}


def run_closeness(p: dict, out: Path, jobs: int = 1):
    cells = _pool_map(_closeness_cell, [(d, p) for d in _as_list(p["densities"])], jobs)
    rows = [row for c in cells for row in c.pop("rows")]
    _write_rows(out / "closeness.csv", ["density", "N", "t", "gap"], rows)
    checks = {f"slope[{c['density']}]": abs(c["slope"] - p["slope_target"]) <= p["slope_tol"] for c in cells}
    return {"N": _as_list(p["N"]), "cells": cells}, checks, ["closeness.csv"]


# -- hessian-cx -----------------------------------------------------------

def _hessian_cell(args):
    eps, delta, M = args
    return hs.counterexample_sweep([eps], [delta], M)[0]


def run_hessian_cx(p: dict, out: Path, jobs: int = 1):
    eps_list = [float(e) for e in _as_list(p["eps"])]
    deltas = sorted((float(d) for d in _as_list(p["delta"])), reverse=True)
    rows = _pool_map(_hessian_cell, [(e, d, int(p["M"])) for e in eps_list for d in deltas], jobs)
    _write_rows(out / "counterexample.csv", ["epsilon", "delta", "hessian_value", "limit_value"],
                [[r["epsilon"], r["delta"], r["hessian_value"], r["limit_value"]] for r in rows])
    checks, headline = {}, {}
    for e in eps_list:
        vals = [r for r in rows if r["epsilon"] == e]
        last = vals[-1]
        rel = abs(last["hessian_value"] - last["limit_value"]) / abs(last["limit_value"])
        headline[str(e)] = {"value": last["hessian_value"], "limit": last["limit_value"], "relative_error": rel}
        checks[f"negative[{e}]"] = all(v["hessian_value"] < 0 for v in vals)
        checks[f"limit[{e}]"] = rel <= float(p["rel_tol"])
    return {"rows": rows, "headline": headline}, checks, ["counterexample.csv"]


# -- lattice2d ------------------------------------------------------------

def run_lattice2d(p: dict, out: Path, jobs: int = 1):
    n = int(p["n"])
    cfg = points.perturbed_hex(n, float(p["amplitude"]) / n, int(p["seed"]))
    flow = points.evolve_points_2d(cfg, max_iter=int(p["max_iter"]), gtol=float(p["gtol"]),
                                   snapshot_every=int(p["snapshot_every"]))
    flow.snapshots_csv(out / "points.csv")
    flow.series_csv(out / "point_series.csv")
    files = ["points.csv", "point_series.csv"]
    mu, r2 = flow.exponential_fit()
    ratio = flow.distances[-1] / flow.distances[0]
    metrics = {"points": cfg.N, "iterations": len(flow.times) - 1, "initial_distance": flow.distances[0],
               "final_distance": flow.distances[-1], "distance_ratio": ratio, "rate": mu, "r2": r2,
               "energy_initial": flow.energies[0], "energy_final": flow.energies[-1],
               "hexagon_energy": points.hex_energy_exact(n)}
    checks = {"energy_strictly_decreasing": flow.strictly_decreasing(), "reduction": ratio <= float(p["reduction"]),
              "exponential_fit": r2 >= float(p["r2_min"]) and mu > 0}
    if p["deformation"]:
        G = int(p["G"])
        Y = deformation.DeformationField.from_modes(G, [(1, 0, 0.03, 0.01, "sin"), (0, 1, -0.02, 0.025, "cos"),
                                                        (1, 1, 0.01, 0.005, "sin")])
        tau = float(p["tau"])
        Y = deformation.DeformationField(Y.Y * float(p["grad_dev"]) / (tau * deformation.sup_gradient_deviation(Y)), tau)
        eta = float(p["eta"])
        tr = deformation.evolve_deformation(Y, t_end=float(p["t_end"]), eta=eta, record_every=int(p["record_every"]))
        tr.to_csv(out / "deformation_series.csv")
        files.append("deformation_series.csv")
        dmu, dr2 = tr.exponential_fit()
        metrics["deformation"] = {"G": G, "tau": tau, "rate": dmu, "r2": dr2, "max_grad_dev": max(tr.sup_dev),
                                  "initial_distance": tr.distances[0], "final_distance": tr.distances[-1],
                                  "max_mean": max(tr.means)}
        checks["deformation_window"] = max(tr.sup_dev) <= eta / 4
        checks["deformation_decay"] = dmu > 0 and dr2 >= float(p["r2_min"])
        checks["deformation_energy"] = bool(np.all(np.diff(tr.energies) <= 64 * np.finfo(float).eps * abs(tr.energies[0])))
        checks["deformation_mean"] = max(tr.means) <= 1e-10
    return metrics, checks, files


# -- calibrate2d ----------------------------------------------------------

def run_calibrate2d(p: dict, out: Path, jobs: int = 1):
    rep = calibration.scaling_calibration(_as_list(p["n"]), int(p["G"]), p["method"])
    keys = list(rep["table"][0].keys())
    _write_rows(out / "calibration.csv", keys, [[row[k] for k in keys] for row in rep["table"]])
    rng = np.random.default_rng(int(p["seed"]))
    M = np.eye(2) + 0.3 * rng.normal(size=(4 * int(p["samples"]), 2, 2))
    det = np.linalg.det(M)
    M = M[(det >= 0.5) & (det <= 2.0)][: int(p["samples"])]
    Q = np.stack([forms.rotation(a) for a in rng.uniform(0, 2 * np.pi, size=len(M))])
    inv_rot = float(np.max(np.abs(forms.F_phi(Q @ M) - forms.F_phi(M))))
    inv_lat = float(np.max(np.abs(forms.F_phi(M @ forms.R) - forms.F_phi(M))))
    B = rng.normal(size=(200, 2, 2))
    exp = forms.expansion_check(B)
    conv = forms.convexity_probe(0.05, int(p["samples"]), 1e-4, int(p["seed"]))
    rep["form_checks"] = {"F_phi_identity_error": abs(float(forms.F_phi(np.eye(2))) - forms.F_IDENTITY),
                          "rotation_invariance": inv_rot, "lattice_invariance": inv_lat,
                          "expansion": exp.as_dict(), "convexity": conv.as_dict()}
    checks = {"exponent": abs(rep["fitted_exponent"] - p["exponent_target"]) <= p["exponent_tol"],
              "F_phi_identity": rep["form_checks"]["F_phi_identity_error"] <= 1e-12,
              "invariances": max(inv_rot, inv_lat) <= 1e-10,
              "expansion_order": abs(exp.order - 3.0) <= 0.3,
              "convexity": conv.convex}
    return rep, checks, ["calibration.csv"]


# -- manifold-moment ------------------------------------------------------

def run_manifold(p: dict, out: Path, jobs: int = 1):
    if p["contrast"]:
        rep = mf.sharpness_contrast(int(p["d"]), float(p["r"]), float(p["delta"]), _as_list(p["powers"]))
        poly_ok = all(v["verdict"] == "finite" for v in rep["slow_polynomial_moments"].values())
        checks = {"slow_divergent_A": rep["slow"]["verdict"] == "divergent (A-term)",
                  "slow_polynomial_finite": poly_ok, "fast_finite": rep["fast"]["verdict"] == "finite"}
        return rep, checks, []
    space = mf.ModelSpace(p["space"], int(p["d"]))
    mu = parse_profile(p["profile"], float(p["R_max"]))
    rec = mf.moment_condition(mu, space, float(p["r"]), float(p["delta"]))
    checks = {"conclusive": rec.verdict != "inconclusive"}
    if p["expect"]:
        checks["expected_verdict"] = rec.verdict == p["expect"]
    return rec.as_dict(), checks, []


RUNNERS = {
    "quantize1d": run_quantize1d,
    "pde1d": run_pde1d,
    "closeness": run_closeness,
    "hessian-cx": run_hessian_cx,
    "lattice2d": run_lattice2d,
    "calibrate2d": run_calibrate2d,
    "manifold-moment": run_manifold,
}


# parameters that are numbers (or lists of numbers) even when the default is None
_NUMERIC = {"dt", "t_end", "gtol"}


def _coerce(v):
    # YAML 1.1 reads "1e-9" as a string
    if isinstance(v, list):
        return [_coerce(x) for x in v]
    if isinstance(v, str):
        for cast in (int, float):
            try:
                return cast(v)
            except ValueError:
                pass
    return v


def _is_number(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def resolve_params(name: str, overrides: dict) -> dict:
    if name not in DEFAULTS:
        raise InputError(f"unknown experiment {name!r}")
    unknown = set(overrides) - set(DEFAULTS[name]) - {"experiment", "out"}
    if unknown:
        raise InputError(f"unknown parameters for {name}: {sorted(unknown)}")
    p = dict(DEFAULTS[name])
    p.update({k: _coerce(v) for k, v in overrides.items() if k not in ("experiment", "out")})
    for k, v in p.items():
        default = DEFAULTS[name][k]
        numeric = k in _NUMERIC or (_is_number(default) or
                                    (isinstance(default, list) and all(_is_number(x) for x in default)))
        if numeric and v is not None and not all(_is_number(x) for x in _as_list(v)):
            raise InputError(f"parameter {k} must be numeric, got {v!r}")
    return p


def validate(name: str, p: dict):
    """Check parameters before any computation starts."""
    if "density" in p:
        parse_density(p["density"])
    for d in _as_list(p.get("densities", [])):
        parse_density(d)
    if name == "manifold-moment" and not p["contrast"]:
        mf.ModelSpace(p["space"], int(p["d"]))
        parse_profile(p["profile"], float(p["R_max"]))
    if name == "hessian-cx":
        for e in _as_list(p["eps"]):
            for dl in _as_list(p["delta"]):
                hs.CounterexampleSpec(float(e), float(dl), int(p["M"]))
    for key in ("N", "M", "n", "G"):
        if key in p:
            for v in _as_list(p[key]):
                if int(v) < 1:
                    raise InputError(f"{key} must be positive")
    if math.isnan(float(p.get("r", 2.0))) or float(p.get("r", 2.0)) < 1:
        raise InputError("r must be at least 1")
