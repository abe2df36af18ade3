"""Acceptance suite: eleven end-to-end criteria at their stated tolerances and runtime budgets.

Each test records a one-line PASS/FAIL summary that the conftest hook
prints at the end of the run.
"""

import math
import time

import numpy as np
import pytest

from quantflow import continuum1d as c1
from quantflow import discrete1d as d1
from quantflow import hessian as hs
from quantflow import manifold as mf
from quantflow.density import Density1D, power_normalize, wasserstein_1d, wasserstein_power
from quantflow.hexlattice import calibration, deformation, forms, points


def slope(x, y):
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


@pytest.mark.acceptance(1, "C_r recovery at N=256")
def test_c_r_recovery(criterion):
    t0 = time.perf_counter()
    N = 256
    value = N ** 2 * d1.energy(d1.equispaced(N), Density1D.uniform(), 2.0)
    elapsed = time.perf_counter() - t0
    criterion(f"N^2 F = {value:.15f} vs 1/12, |diff| = {abs(value - 1 / 12):.2e}, {elapsed:.2f}s")
    assert abs(value - 1 / 12) <= 1e-4
    assert elapsed < 1.0


@pytest.mark.acceptance(2, "asymptotic density law, W1 slope")
def test_density_law(criterion):
    t0 = time.perf_counter()
    rho = Density1D.cosine(0.5)
    target = power_normalize(rho, 1, 2)
    Ns = [25, 50, 100, 200]
    w = []
    for N in Ns:
        T = 5.0 * N ** 3
        tr = d1.evolve(d1.equispaced(N), rho, 2.0, scheme="implicit", t_end=T, t_eval=[T], rtol=1e-10, atol=1e-14)
        assert np.max(np.abs(d1.gradient(tr.final, rho, 2.0))) < 1e-12
        w.append(wasserstein_1d(d1.empirical_measure(tr.final), target, 1))
    s = slope(Ns, w)
    elapsed = time.perf_counter() - t0
    criterion(f"slope {s:.4f} (target -1.0 +- 0.2), W1 = {', '.join(f'{v:.3e}' for v in w)}, {elapsed:.1f}s")
    assert abs(s + 1.0) <= 0.2
    assert elapsed < 120


@pytest.mark.acceptance(3, "discrete-continuum closeness, N^-4")
def test_closeness(criterion):
    t0 = time.perf_counter()
    T, a = 0.5, 0.3
    ts = np.linspace(0.0, T, 11)
    X0 = lambda th: th + a * np.sin(2 * np.pi * th) / (2 * np.pi)
    Ns = [16, 32, 64, 128]
    slopes = {}
    for name, rho in (("uniform", Density1D.uniform()), ("cosine 0.05", Density1D.cosine(0.05))):
        cont = c1.evolve_lagrangian(c1.LagrangianMap.from_function(X0, 2048), rho, 2.0, t_end=T, t_eval=ts,
                                    scheme="implicit", rtol=1e-11, atol=1e-14)
        sups = []
        for N in Ns:
            cfg = d1.PointConfig1D(X0((np.arange(N) + 0.5) / N))
            tr = d1.evolve(cfg, rho, 2.0, scheme="implicit", t_end=T * N ** 3, t_eval=ts * N ** 3,
                           rtol=1e-11, atol=1e-14)
            series = c1.discrete_continuum_distance(tr, cont, N)
            assert not series.interpolated
            sups.append(series.sup)
        slopes[name] = slope(Ns, sups)
    elapsed = time.perf_counter() - t0
    criterion(", ".join(f"{k}: slope {v:.3f}" for k, v in slopes.items()) + f" (target -4 +- 0.5), {elapsed:.1f}s")
    assert all(abs(v + 4.0) <= 0.5 for v in slopes.values())
    assert elapsed < 300


@pytest.mark.acceptance(4, "comparison principle on a full Eulerian run")
def test_comparison_principle(criterion):
    t0 = time.perf_counter()
    rho = Density1D.cosine(0.1)
    f0 = c1.EulerianField.from_function(lambda x: 1 + 0.3 * np.sin(2 * np.pi * x) + 0.03 * np.cos(6 * np.pi * x), 256)
    tr = c1.evolve_eulerian(f0, rho, 2.0, t_end=0.5)
    diag = c1.comparison_diagnostics(tr, [0.8, 1.0, 1.2], rho, 2.0)
    inc = diag.increases(1e-8)
    worst = max((float(np.max(np.diff(s))) for c in diag.levels for s in (diag.positive[c], diag.negative[c])))
    elapsed = time.perf_counter() - t0
    criterion(f"{tr.steps} steps, {len(inc)} increases > 1e-8 (largest step change {worst:.1e}), "
              f"u range [{diag.min_u.min():.6f}, {diag.max_u.max():.6f}] within "
              f"[{diag.min_u[0]:.6f}, {diag.max_u[0]:.6f}], {elapsed:.1f}s")
    assert not inc
    assert diag.bounds_hold(1e-6)
    assert elapsed < 30


@pytest.mark.acceptance(5, "stationary state residual <= 10/M^2")
def test_stationary_state(criterion):
    t0 = time.perf_counter()
    rho = Density1D.cosine(0.1)
    res = {}
    for M in (128, 256, 512):
        f = c1.stationary_state(rho, 2.0, M)
        res[M] = float(np.max(np.abs(c1.eulerian_rhs(f, rho, 2.0))))
    elapsed = time.perf_counter() - t0
    criterion(", ".join(f"M={M}: {v:.2e} (bound {10 / M ** 2:.2e})" for M, v in res.items()) + f", {elapsed:.2f}s")
    assert all(v <= 10 / M ** 2 for M, v in res.items())
    assert elapsed < 10


@pytest.mark.acceptance(6, "Hessian counterexample tends to 4 eps - 8")
def test_hessian_counterexample(criterion):
    t0 = time.perf_counter()
    vals = [hs.counterexample_value(hs.CounterexampleSpec(0.1, d)) for d in (1e-3, 1e-4, 1e-5)]
    rel = abs(vals[-1] + 7.6) / 7.6
    elapsed = time.perf_counter() - t0
    criterion(f"values {', '.join(f'{v:.4f}' for v in vals)}; rel. error at 1e-5: {rel:.2%}, {elapsed:.2f}s")
    assert all(v < 0 for v in vals)
    assert rel <= 0.05
    assert elapsed < 30


@pytest.mark.acceptance(7, "2D form consistency")
def test_form_consistency(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    id_err = abs(float(forms.F_phi(np.eye(2))) - 10 / (3 * math.sqrt(3)))
    B = rng.normal(size=(200, 2, 2))
    order = forms.expansion_check(B, (1e-1, 1e-2, 1e-3)).order
    M = np.eye(2) + 0.3 * rng.normal(size=(5000, 2, 2))
    det = np.linalg.det(M)
    M = M[(det >= 0.5) & (det <= 2.0)][:1000]
    assert len(M) == 1000
    Q = np.stack([forms.rotation(t) for t in rng.uniform(0, 2 * np.pi, 1000)])
    rot = float(np.max(np.abs(forms.F_phi(Q @ M) - forms.F_phi(M))))
    lat = float(np.max(np.abs(forms.F_phi(M @ forms.R) - forms.F_phi(M))))
    elapsed = time.perf_counter() - t0
    criterion(f"F(Id) error {id_err:.1e}, expansion order {order:.3f}, invariance errors {rot:.1e}/{lat:.1e}, "
              f"{elapsed:.2f}s")
    assert id_err <= 1e-12
    assert abs(order - 3.0) <= 0.3
    assert rot <= 1e-10 and lat <= 1e-10
    assert elapsed < 10


@pytest.mark.acceptance(8, "2D relaxation: point flow and deformation flow")
def test_relaxation_2d(criterion):
    t0 = time.perf_counter()
    n = 12
    cfg = points.perturbed_hex(n, 0.2 / n, seed=0)
    flow = points.evolve_points_2d(cfg, max_iter=500)
    ratio = flow.distances[-1] / flow.distances[0]
    mu, r2 = flow.exponential_fit()
    G, tau, eta = 64, 0.05, 0.05
    Y = deformation.DeformationField.from_modes(G, [(1, 0, 0.03, 0.01, "sin"), (0, 1, -0.02, 0.025, "cos"),
                                                    (1, 1, 0.01, 0.005, "sin")])
    Y = deformation.DeformationField(Y.Y * 0.01 / (tau * deformation.sup_gradient_deviation(Y)), tau)
    tr = deformation.evolve_deformation(Y, t_end=0.05, eta=eta)
    dmu, dr2 = tr.exponential_fit()
    elapsed = time.perf_counter() - t0
    criterion(f"points: strictly decreasing={flow.strictly_decreasing()}, distance ratio {ratio:.2e}, "
              f"R^2 {r2:.4f}; deformation: max |grad X - Id| {max(tr.sup_dev):.4f} <= {eta / 4}, "
              f"rate {dmu:.1f}, R^2 {dr2:.4f}, {elapsed:.0f}s")
    assert flow.strictly_decreasing()
    assert ratio <= 1e-3
    assert r2 >= 0.9 and mu > 0
    assert max(tr.sup_dev) <= eta / 4
    assert elapsed < 600


@pytest.mark.acceptance(9, "oracle identity W_r^r = F_{N,r}")
def test_oracle_identity(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(9)
    worst = 0.0
    for k in range(50):
        N = int(rng.integers(1, 33))
        r = (2.0, 3.0)[k % 2]
        rho = [Density1D.uniform(), Density1D.cosine(0.5), Density1D.exponential(1.5)][k % 3]
        x = np.sort(rng.uniform(0, 1, N))
        cfg = d1.PointConfig1D(x, r)
        gap = abs(wasserstein_power(d1.voronoi_measure(cfg, rho), rho, r) - d1.energy(cfg, rho, r))
        worst = max(worst, gap)
    elapsed = time.perf_counter() - t0
    criterion(f"max |W_r^r - F| over 50 configs = {worst:.2e}, {elapsed:.1f}s")
    assert worst <= 1e-6
    assert elapsed < 60


@pytest.mark.acceptance(10, "manifold sharpness contrast")
def test_manifold_contrast(criterion):
    t0 = time.perf_counter()
    rep = mf.sharpness_contrast(2, 2.0, 1.0, (1, 2, 4, 8))
    poly = {p: v["verdict"] for p, v in rep["slow_polynomial_moments"].items()}
    elapsed = time.perf_counter() - t0
    criterion(f"e^-2R: {rep['slow']['verdict']}, moments {poly}; e^-4R: {rep['fast']['verdict']}, {elapsed:.2f}s")
    assert rep["slow"]["verdict"] == "divergent (A-term)"
    assert all(v == "finite" for v in poly.values())
    assert rep["fast"]["verdict"] == "finite"
    assert elapsed < 5


@pytest.mark.acceptance(11, "calibration report, exponent -2")
def test_calibration(criterion):
    t0 = time.perf_counter()
    rep = calibration.scaling_calibration((4, 6, 8, 12, 16, 24), G=1024)
    elapsed = time.perf_counter() - t0
    ratios = [row["ratio_phi_s2"] for row in rep["table"]]
    criterion(f"fitted exponent {rep['fitted_exponent']:.5f} (claimed -4), ratio to F[id]/n^2 "
              f"{ratios[-1]:.6f}, {elapsed:.1f}s")
    assert abs(rep["fitted_exponent"] + 2.0) <= 0.05
    assert len(rep["table"]) == 6 and all("ratio_phi_s4" in row for row in rep["table"])
    assert "1/n^4" in rep["conclusion"] and "n^-2" in rep["conclusion"]
    assert elapsed < 120
