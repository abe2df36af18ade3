import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quantflow.density import (
    Density1D,
    DiscreteMeasure1D,
    Quadrature,
    integrate,
    power_normalize,
    quantile,
    wasserstein_1d,
    wasserstein_power,
)
from quantflow.errors import InputError, QuadratureError


@pytest.mark.parametrize("rho", [Density1D.uniform(), Density1D.cosine(0.5), Density1D.cosine(0.3, 3),
                                 Density1D.exponential(1.0), Density1D.exponential(-2.0)])
def test_unit_mass_and_cdf(rho):
    assert integrate(rho) == pytest.approx(1.0, abs=1e-13)
    y = np.linspace(0, 1, 11)
    numeric = np.array([0.0] + [integrate(rho, (0.0, v)) for v in y[1:]])
    assert np.allclose(rho.cdf(y), numeric, atol=1e-12)


def test_quadrature_degree_exact():
    q = Quadrature.gauss_legendre(0.0, 1.0, panels=3)
    deg = q.degree
    assert q.integrate(lambda x: x ** deg) == pytest.approx(1.0 / (deg + 1), rel=1e-13)


def test_integrate_raises_on_nonfinite():
    with pytest.raises(QuadratureError), np.errstate(divide="ignore"):
        integrate(lambda x: 1.0 / (x - x[3]))


def test_density_validation():
    with pytest.raises(InputError):
        Density1D.cosine(1.0)
    with pytest.raises(InputError):
        Density1D(lambda y: 2.0 * np.ones_like(y))
    with pytest.raises(InputError):
        Density1D.from_function(lambda y: y - 0.5)


def test_derivatives_match_finite_differences():
    rho = Density1D.cosine(0.4, 2)
    y, h = np.linspace(0.05, 0.95, 7), 1e-5
    assert np.allclose(rho.derivative(y, 1), (rho(y + h) - rho(y - h)) / (2 * h), atol=1e-7)
    assert np.allclose(rho.derivative(y, 2), (rho(y + h) - 2 * rho(y) + rho(y - h)) / h ** 2, rtol=1e-4, atol=1e-3)


def test_grid_density_roundtrip(tmp_path):
    theta = np.linspace(0, 1, 65)
    vals = 1 + 0.3 * np.cos(2 * np.pi * theta)
    path = tmp_path / "rho.csv"
    path.write_text("theta,rho\n" + "\n".join(f"{float(t)!r},{float(v)!r}" for t, v in zip(theta, vals)) + "\n")
    for interp in ("pchip", "spline"):
        rho = Density1D.from_csv(path, interp)
        assert integrate(rho) == pytest.approx(1.0, abs=1e-12)
        assert np.allclose(rho(theta), vals, rtol=2e-3)
    assert Density1D.from_csv(path, "spline").d2 is not None
    assert Density1D.from_csv(path, "pchip").d2 is None


def test_from_config_kinds(tmp_path):
    assert Density1D.from_config("uniform").kind == "uniform"
    assert Density1D.from_config({"kind": "cosine", "eps": 0.2}).params["eps"] == 0.2
    with pytest.raises(InputError):
        Density1D.from_config({"kind": "nope"})


def test_power_normalize_uniform_and_closed_form():
    assert np.allclose(power_normalize(Density1D.uniform(), 1, 2)(np.linspace(0, 1, 5)), 1.0)
    rho = Density1D.exponential(3.0)
    # rho^{1/3} = c e^{y}: normalized this is the exponential density with a = 1
    assert np.allclose(power_normalize(rho, 1, 2)(np.linspace(0, 1, 7)), Density1D.exponential(1.0)(np.linspace(0, 1, 7)))


def test_power_normalize_samples():
    w = np.full(4, 0.25)
    out = power_normalize(np.array([1.0, 8.0, 1.0, 8.0]), 2, 4, w)
    assert math.fsum(out * w) == pytest.approx(1.0)
    assert out[1] / out[0] == pytest.approx(2.0)


def test_quantile_inverts_cdf():
    rho = Density1D.cosine(0.6)
    s = np.linspace(0.01, 0.99, 9)
    assert np.allclose(rho.cdf(quantile(rho, s)), s, atol=1e-11)


def test_discrete_measure_validation():
    with pytest.raises(InputError):
        DiscreteMeasure1D([0.5, 0.2], [0.5, 0.5])
    with pytest.raises(InputError):
        DiscreteMeasure1D([0.2, 0.5], [0.5, 0.6])
    mu = DiscreteMeasure1D([0.2, 0.5], [0.25, 0.75])
    assert mu.cdf(0.2) == 0.25 and mu.cdf(0.19) == 0.0
    assert mu.quantile(0.25) == 0.2 and mu.quantile(0.26) == 0.5


def test_wasserstein_examples():
    N = 10
    mu = DiscreteMeasure1D((np.arange(N) + 0.5) / N, np.full(N, 1 / N))
    assert wasserstein_1d(mu, Density1D.uniform(), 1) == pytest.approx(1 / (4 * N), rel=1e-12)
    # W_2^2 of the midpoint configuration against uniform: N cells of width 1/N, 1/(12 N^2)
    assert wasserstein_power(mu, Density1D.uniform(), 2) == pytest.approx(1 / (12 * N ** 2), rel=1e-12)
    a = DiscreteMeasure1D([0.0], [1.0])
    b = DiscreteMeasure1D([0.3], [1.0])
    assert wasserstein_1d(a, b, 3) == pytest.approx(0.3)
    assert wasserstein_1d(Density1D.uniform(), Density1D.uniform(), 2) == pytest.approx(0.0, abs=1e-10)
    with pytest.raises(InputError):
        wasserstein_1d(a, b, 0.5)


def test_wasserstein_between_densities_against_quantile_oracle():
    rho, nu = Density1D.cosine(0.5), Density1D.exponential(1.0)
    s = (np.arange(20000) + 0.5) / 20000
    oracle = np.mean(np.abs(quantile(rho, s) - np.log1p(s * (math.e - 1))))
    assert wasserstein_1d(rho, nu, 1) == pytest.approx(oracle, rel=1e-6)


atoms = st.lists(st.floats(0, 1, allow_nan=False), min_size=1, max_size=12).map(sorted)


def _uniform_weights(xs):
    return DiscreteMeasure1D(np.array(xs), np.full(len(xs), 1.0 / len(xs)))


@settings(max_examples=60, deadline=None)
@given(atoms, atoms, atoms)
def test_wasserstein_metric_properties(a, b, c):
    mu, nu, la = _uniform_weights(a), _uniform_weights(b), _uniform_weights(c)
    dab = wasserstein_1d(mu, nu, 2)
    assert dab == pytest.approx(wasserstein_1d(nu, mu, 2), abs=1e-14)
    assert dab <= wasserstein_1d(mu, la, 2) + wasserstein_1d(la, nu, 2) + 1e-12
    assert wasserstein_1d(mu, mu, 2) == 0.0


@settings(max_examples=40, deadline=None)
@given(atoms)
def test_wasserstein_discrete_vs_density_dominates_w1(xs):
    mu = _uniform_weights(xs)
    rho = Density1D.cosine(0.2)
    assert wasserstein_1d(mu, rho, 1) <= wasserstein_1d(mu, rho, 2) + 1e-12
