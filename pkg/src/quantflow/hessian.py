"""Second variation of ``F_rho(X) = int rho(X) |X'|^{r+1}``, periodic Gaussian
mollification, and a non-convexity certificate for a concentrated density.

Here ``F_rho`` carries no ``C_r`` prefactor, so ``F_rho = continuum_energy / C_r``.
``NORMALIZATION`` records that factor for cross-checks.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import ndtr

from .continuum1d import quantization_constant
from .density import Density1D, Quadrature
from .errors import InputError, SmoothnessError

NORMALIZATION = {"omits_C_r": True, "factor_r2": 1.0 / quantization_constant(2.0)}


@dataclass(frozen=True)
class Profile:
    """A function of theta together with its first two derivatives."""

    value: Callable
    d1: Callable
    d2: Callable | None = None

    def __call__(self, theta):
        return self.value(theta)

    @classmethod
    def from_grid(cls, theta, values) -> "Profile":
        cs = CubicSpline(np.asarray(theta, float), np.asarray(values, float))
        return cls(cs, cs.derivative(1), cs.derivative(2))

    @classmethod
    def identity(cls) -> "Profile":
        return cls(lambda t: np.asarray(t, float), lambda t: np.ones_like(np.asarray(t, float)),
                   lambda t: np.zeros_like(np.asarray(t, float)))

    @classmethod
    def sine(cls, k: int = 1, amp: float = 1.0) -> "Profile":
        w = math.pi * k
        return cls(lambda t: amp * np.sin(w * np.asarray(t, float)),
                   lambda t: amp * w * np.cos(w * np.asarray(t, float)),
                   lambda t: -amp * w * w * np.sin(w * np.asarray(t, float)))

    def shifted(self, other: "Profile", s: float) -> "Profile":
        """``self + s * other``."""
        d2 = None if self.d2 is None or other.d2 is None else (lambda t: self.d2(t) + s * other.d2(t))
        return Profile(lambda t: self.value(t) + s * other.value(t),
                       lambda t: self.d1(t) + s * other.d1(t), d2)


def _as_profile(p) -> Profile:
    if isinstance(p, Profile):
        return p
    if isinstance(p, tuple) and len(p) == 2:
        return Profile.from_grid(*p)
    raise InputError("expected a Profile or a (theta, values) pair")


@dataclass(frozen=True)
class PerturbationPair:
    """Base map X with pinned ends and a direction Y vanishing at both ends."""

    X: Profile
    Y: Profile
    nodes: int = 1025
    slope_bounds: tuple = field(init=False, default=(0.0, 0.0))

    def __post_init__(self):
        X, Y = _as_profile(self.X), _as_profile(self.Y)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)
        ends = np.array([0.0, 1.0])
        if not np.allclose(X(ends), [0.0, 1.0], atol=1e-12, rtol=0):
            raise InputError("X must satisfy X(0) = 0 and X(1) = 1")
        if not np.allclose(Y(ends), 0.0, atol=1e-12, rtol=0):
            raise InputError("Y must vanish at 0 and 1")
        th = np.linspace(0.0, 1.0, self.nodes)
        sx = X.d1(th)
        if np.min(sx) <= 0:
            raise InputError("X must be strictly increasing on the nodes")
        c = float(np.min(sx))
        C = float(max(np.max(sx), np.max(np.abs(Y.d1(th)))))
        object.__setattr__(self, "slope_bounds", (c, C))


def _require_c2(rho: Density1D):
    if rho.d1 is None or rho.d2 is None:
        raise SmoothnessError("density lacks two derivatives; mollify it first (mollify_periodic)")


def hessian_form(rho: Density1D, X, Y, r: float = 2.0, panels: int = 512) -> float:
    """``D^2 F_rho[X](Y, Y)`` for ``F_rho(X) = int rho(X) |X'|^{r+1}``.

    For r = 2 the weights are 6, 6 and 1 on the three terms.
    """
    _require_c2(rho)
    pair = X if isinstance(X, PerturbationPair) else PerturbationPair(X, Y)
    X, Y = pair.X, pair.Y
    q = Quadrature.gauss_legendre(0.0, 1.0, panels=panels)
    th = q.nodes
    x, xs = X(th), X.d1(th)
    y, ys = Y(th), Y.d1(th)
    a = np.abs(xs)
    terms = ((r + 1) * r * rho(x) * a ** (r - 1) * ys ** 2
             + 2 * (r + 1) * rho.derivative(x, 1) * a ** (r - 1) * xs * ys * y
             + rho.derivative(x, 2) * a ** (r + 1) * y ** 2)
    return math.fsum(q.weights * terms)


def hessian_form_ibp(rho: Density1D, Y, panels: int = 512) -> float:
    """``2 int rho Y'^2 - 4 int rho Y'' Y`` at ``X = id`` (r = 2)."""
    Y = _as_profile(Y)
    if Y.d2 is None:
        raise SmoothnessError("direction needs a second derivative")
    q = Quadrature.gauss_legendre(0.0, 1.0, panels=panels)
    th = q.nodes
    rv = rho(th)
    return math.fsum(q.weights * (2 * rv * Y.d1(th) ** 2 - 4 * rv * Y.d2(th) * Y(th)))


def _resolution_check(delta: float, h: float):
    if math.sqrt(delta) < 2 * h:
        warnings.warn(f"kernel width sqrt(delta)={math.sqrt(delta):.3g} spans fewer than 2 grid cells (h={h:.3g})",
                      RuntimeWarning, stacklevel=3)


def gaussian_kernel(theta, delta: float, derivative: int = 0):
    """``phi_delta`` (variance ``delta``) and its first two derivatives."""
    t = np.asarray(theta, float)
    phi = np.exp(-t * t / (2 * delta)) / math.sqrt(2 * math.pi * delta)
    if derivative == 0:
        return phi
    if derivative == 1:
        return -t / delta * phi
    if derivative == 2:
        return (t * t / delta ** 2 - 1.0 / delta) * phi
    raise InputError("derivative order must be 0, 1 or 2")


def mollify_periodic(g, delta: float, derivative: int = 0, truncate: float = 8.0) -> np.ndarray:
    """Periodic convolution of grid values on ``theta_j = j/M`` with ``phi_delta``.

    The kernel is cut at ``truncate * sqrt(delta)`` and scaled to unit
    discrete mass; derivative kernels use the same scale, so the result
    approximates the derivative of the mollified function.
    """
    if not delta > 0:
        raise InputError("delta must be positive")
    g = np.asarray(g, float)
    M = g.size
    h = 1.0 / M
    _resolution_check(delta, h)
    half = int(math.floor(truncate * math.sqrt(delta) / h))
    k = np.arange(-half, half + 1)
    base = gaussian_kernel(k * h, delta)
    scale = base.sum()
    w = (base if derivative == 0 else gaussian_kernel(k * h, delta, derivative)) / scale
    folded = np.zeros(M)
    np.add.at(folded, k % M, w)
    return np.real(np.fft.ifft(np.fft.fft(g) * np.fft.fft(folded)))


def mollified_indicator(theta, a: float, b: float, delta: float, images: int = 2) -> np.ndarray:
    """Closed form of the periodized indicator of ``[a, b]`` convolved with ``phi_delta``."""
    t = np.asarray(theta, float)
    s = math.sqrt(delta)
    out = np.zeros_like(t)
    for m in range(-images, images + 1):
        out += ndtr((t - a + m) / s) - ndtr((t - b + m) / s)
    return out


@dataclass(frozen=True)
class CounterexampleSpec:
    eps: float
    delta: float
    M: int = 8192
    ramp_end: float = 0.45

    def __post_init__(self):
        if not 0 < self.eps < 0.125:
            raise InputError("eps must lie in (0, 1/8)")
        if not self.delta > 0:
            raise InputError("delta must be positive")
        if self.M < 16:
            raise InputError("M too small")
        if not 2 * self.eps < self.ramp_end < 0.5:
            raise InputError("ramp_end must lie in (2 eps, 1/2)")

    @property
    def limit(self) -> float:
        return 4 * self.eps - 8


def smoothstep(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""
    t = np.clip(np.asarray(t, float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
        b = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return a / (a + b)


@dataclass
class Counterexample:
    theta: np.ndarray
    rho_bar: np.ndarray
    Y: np.ndarray
    lipschitz: float


def build_counterexample(spec: CounterexampleSpec) -> Counterexample:
    """Indicator of ``[1/2 - eps, 1/2 + eps]`` and ``Y = 1 + |theta - 1/2|`` near the centre.

    Away from the centre Y is cut to zero with a smooth step on
    ``|theta - 1/2| in [2 eps, ramp_end]``, so its support is compact in (0, 1).
    """
    th = np.arange(spec.M) / spec.M
    d = np.abs(th - 0.5)
    rho_bar = (d <= spec.eps + 1e-14).astype(float)
    s1, s2 = 2 * spec.eps, spec.ramp_end
    Y = (1.0 + d) * (1.0 - smoothstep((d - s1) / (s2 - s1)))
    lip = float(np.max(np.abs(np.diff(np.append(Y, Y[0])))) * spec.M)
    return Counterexample(th, rho_bar, Y, lip)


def counterexample_value(spec: CounterexampleSpec) -> float:
    """``2 int rho_d Y_d'^2 - 4 int rho_d Y_d'' Y_d`` with ``rho_d``, ``Y_d`` mollified.

    Derivatives of ``Y_d`` fall on the kernel. Tends to ``4 eps - 8``.
    """
    cx = build_counterexample(spec)
    rho = mollify_periodic(cx.rho_bar, spec.delta)
    Yd = mollify_periodic(cx.Y, spec.delta)
    Y1 = mollify_periodic(cx.Y, spec.delta, 1)
    Y2 = mollify_periodic(cx.Y, spec.delta, 2)
    return math.fsum(2 * rho * Y1 ** 2 - 4 * rho * Y2 * Yd) / spec.M


def counterexample_sweep(eps_values, delta_values, M: int = 8192) -> list[dict]:
    rows = []
    for eps in eps_values:
        for delta in delta_values:
            spec = CounterexampleSpec(float(eps), float(delta), M)
            rows.append({"epsilon": spec.eps, "delta": spec.delta,
                         "hessian_value": counterexample_value(spec), "limit_value": spec.limit})
    return rows
