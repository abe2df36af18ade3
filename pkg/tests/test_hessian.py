import math

import numpy as np
import pytest

from quantflow import continuum1d as c1
from quantflow import hessian as hs
from quantflow.density import Density1D
from quantflow.errors import InputError, SmoothnessError


def test_uniform_identity_sine_closed_form():
    # 6 int (pi cos pi t)^2 = 3 pi^2
    v = hs.hessian_form(Density1D.uniform(), hs.Profile.identity(), hs.Profile.sine(1))
    assert v == pytest.approx(3 * math.pi ** 2, rel=1e-12)


@pytest.mark.parametrize("rho", [Density1D.cosine(0.4), Density1D.exponential(1.5), Density1D.cosine(0.2, 3)])
@pytest.mark.parametrize("k", [1, 2, 5])
def test_integration_by_parts_form_agrees(rho, k):
    Y = hs.Profile.sine(k, 0.7)
    a = hs.hessian_form(rho, hs.Profile.identity(), Y)
    b = hs.hessian_form_ibp(rho, Y)
    assert abs(a - b) <= 1e-8 * max(1.0, abs(a))


def test_matches_second_difference_of_energy():
    rho = Density1D.cosine(0.4)
    X = hs.Profile(lambda t: t + 0.2 * np.sin(2 * np.pi * t) / (2 * np.pi),
                   lambda t: 1 + 0.2 * np.cos(2 * np.pi * t),
                   lambda t: -0.4 * np.pi * np.sin(2 * np.pi * t))
    Y = hs.Profile.sine(2, 0.5)
    M = 1 << 14
    th = np.linspace(0, 1, M + 1)

    def F(s):
        Xs = X(th) + s * Y(th)
        Xs[0], Xs[-1] = 0.0, 1.0
        return c1.continuum_energy(Xs, rho) * hs.NORMALIZATION["factor_r2"]

    s = 1e-3
    fd = (F(s) - 2 * F(0.0) + F(-s)) / s ** 2
    exact = hs.hessian_form(rho, X, Y)
    assert fd == pytest.approx(exact, rel=1e-6)


def test_general_r_against_second_difference():
    rho, r = Density1D.exponential(1.0), 3.0
    X = hs.Profile.identity()
    Y = hs.Profile.sine(1, 0.3)
    M = 1 << 14
    th = np.linspace(0, 1, M + 1)

    def F(s):
        Xs = th + s * Y(th)
        Xs[0], Xs[-1] = 0.0, 1.0
        return c1.continuum_energy(Xs, rho, r) / c1.quantization_constant(r)

    s = 1e-3
    fd = (F(s) - 2 * F(0.0) + F(-s)) / s ** 2
    assert fd == pytest.approx(hs.hessian_form(rho, X, Y, r), rel=1e-6)


def test_smoothness_required():
    theta = np.linspace(0, 1, 33)
    path_rho = Density1D.from_grid(theta, 1 + 0.2 * np.cos(2 * np.pi * theta), "pchip")
    with pytest.raises(SmoothnessError):
        hs.hessian_form(path_rho, hs.Profile.identity(), hs.Profile.sine(1))
    with pytest.raises(SmoothnessError):
        hs.hessian_form_ibp(Density1D.uniform(), hs.Profile(np.sin, np.cos))


def test_pair_validation():
    with pytest.raises(InputError):
        hs.PerturbationPair(hs.Profile.sine(1), hs.Profile.sine(1))
    with pytest.raises(InputError):
        hs.PerturbationPair(hs.Profile.identity(), hs.Profile.identity())
    pair = hs.PerturbationPair(hs.Profile.identity(), hs.Profile.sine(2, 0.5))
    assert pair.slope_bounds == pytest.approx((1.0, math.pi), rel=1e-6)


def test_mollifier_preserves_constants_and_mass():
    M = 1024
    g = np.random.default_rng(0).uniform(0, 1, M)
    for delta in (1e-3, 1e-4):
        assert np.allclose(hs.mollify_periodic(np.ones(M), delta), 1.0, atol=1e-14)
        assert math.fsum(hs.mollify_periodic(g, delta)) == pytest.approx(math.fsum(g), rel=1e-13)


def test_mollified_derivatives_of_a_sine():
    M, delta = 2048, 1e-4
    th = np.arange(M) / M
    g = np.sin(2 * np.pi * th)
    damp = math.exp(-2 * math.pi ** 2 * delta)
    w = 2 * math.pi
    assert np.allclose(hs.mollify_periodic(g, delta), damp * g, atol=1e-8)
    assert np.allclose(hs.mollify_periodic(g, delta, 1), damp * w * np.cos(w * th), atol=1e-6)
    assert np.allclose(hs.mollify_periodic(g, delta, 2), -damp * w * w * g, atol=1e-4)


def test_mollified_indicator_matches_closed_form():
    M, eps, delta = 8192, 0.05, 1e-4
    h = 1.0 / M
    th = np.arange(M) / M
    ind = (np.abs(th - 0.5) <= eps + 1e-14).astype(float)
    idx = np.nonzero(ind)[0]
    # the node indicator stands for the union of node cells
    a, b = th[idx[0]] - h / 2, th[idx[-1]] + h / 2
    assert np.allclose(hs.mollify_periodic(ind, delta), hs.mollified_indicator(th, a, b, delta), atol=1e-6)


def test_resolution_warning():
    with pytest.warns(RuntimeWarning):
        hs.mollify_periodic(np.ones(64), 1e-5)


def test_kernel_derivatives():
    t = np.linspace(-0.05, 0.05, 11)
    d, h = 1e-3, 1e-6
    k = lambda s: hs.gaussian_kernel(s, d)
    assert np.allclose(hs.gaussian_kernel(t, d, 1), (k(t + h) - k(t - h)) / (2 * h), rtol=1e-6, atol=1e-6)
    assert np.allclose(hs.gaussian_kernel(t, d, 2), (k(t + h) - 2 * k(t) + k(t - h)) / h ** 2, rtol=1e-4, atol=1e-2)
    with pytest.raises(InputError):
        hs.gaussian_kernel(t, d, 3)


def test_counterexample_construction():
    spec = hs.CounterexampleSpec(0.05, 1e-5)
    cx = hs.build_counterexample(spec)
    assert cx.Y[spec.M // 2] == pytest.approx(1.0)
    assert cx.Y[0] == 0.0 and cx.Y[int(0.04 * spec.M)] == 0.0
    assert np.sum(cx.rho_bar) / spec.M == pytest.approx(2 * spec.eps, abs=2 / spec.M)
    assert cx.lipschitz < 10


def test_counterexample_negative_and_approaching_limit():
    spec = [hs.CounterexampleSpec(0.05, d) for d in (1e-3, 1e-4, 1e-5)]
    vals = [hs.counterexample_value(s) for s in spec]
    errs = [abs(v - spec[0].limit) for v in vals]
    assert all(v < 0 for v in vals)
    assert errs[0] > errs[1] > errs[2]
    assert errs[-1] / abs(spec[0].limit) < 0.05


def test_counterexample_spec_validation():
    for kw in ({"eps": 0.2, "delta": 1e-4}, {"eps": 0.05, "delta": 0.0}, {"eps": 0.1, "delta": 1e-4, "ramp_end": 0.15}):
        with pytest.raises(InputError):
            hs.CounterexampleSpec(**kw)


def test_sweep_rows():
    rows = hs.counterexample_sweep([0.05, 0.1], [1e-3], M=4096)
    assert [r["epsilon"] for r in rows] == [0.05, 0.1]
    assert rows[1]["limit_value"] == pytest.approx(-7.6)
