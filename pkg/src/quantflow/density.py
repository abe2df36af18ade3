"""Densities on [0, 1], quadrature, quantile functions and 1D Wasserstein distances."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

import numpy as np
from scipy.interpolate import CubicSpline, PchipInterpolator

from .errors import DegenerateDensityError, InputError, QuadratureError

_GL_ORDER = 8
_GL_X, _GL_W = np.polynomial.legendre.leggauss(_GL_ORDER)


def gauss_legendre_nodes(a, b, panels: int = 1, order: int = _GL_ORDER):
    """Composite Gauss-Legendre nodes and weights on ``[a, b]``.

    ``a`` and ``b`` may be arrays of equal shape; the returned arrays then
    carry a trailing axis of length ``panels * order``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if order == _GL_ORDER:
        gx, gw = _GL_X, _GL_W
    else:
        gx, gw = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(0.0, 1.0, panels + 1)
    lo, hi = edges[:-1], edges[1:]
    # reference nodes on [0, 1]
    ref_x = (0.5 * (hi - lo)[:, None] * (gx + 1.0)[None, :] + lo[:, None]).ravel()
    ref_w = (0.5 * (hi - lo)[:, None] * gw[None, :]).ravel()
    width = (b - a)[..., None]
    return a[..., None] + width * ref_x, width * ref_w


@dataclass(frozen=True)
class Quadrature:
    """Composite Gauss-Legendre rule on an interval.

    Exact for polynomials of degree ``2 * order - 1`` on every panel.
    """

    nodes: np.ndarray
    weights: np.ndarray
    panels: int
    interval: tuple[float, float] = (0.0, 1.0)
    order: int = _GL_ORDER

    @classmethod
    def gauss_legendre(cls, a: float = 0.0, b: float = 1.0, panels: int = 256, order: int = _GL_ORDER):
        if panels < 1:
            raise InputError("panels must be >= 1")
        if not b > a:
            raise InputError(f"empty interval [{a}, {b}]")
        x, w = gauss_legendre_nodes(a, b, panels, order)
        return cls(nodes=x, weights=w, panels=panels, interval=(float(a), float(b)), order=order)

    @property
    def degree(self) -> int:
        return 2 * self.order - 1

    def integrate(self, g: Callable) -> float:
        return integrate(g, quad=self)


_DEFAULT_QUAD = Quadrature.gauss_legendre()


def integrate(g: Callable, interval=(0.0, 1.0), quad: Quadrature | None = None) -> float:
    """Integrate ``g`` over ``interval`` with a composite Gauss-Legendre rule.

    Raises QuadratureError naming the first node where ``g`` is not finite.
    """
    if quad is None:
        a, b = interval
        quad = _DEFAULT_QUAD if (a, b) == (0.0, 1.0) else Quadrature.gauss_legendre(a, b)
    vals = np.asarray(g(quad.nodes), dtype=float)
    if vals.shape != quad.nodes.shape:
        vals = np.broadcast_to(vals, quad.nodes.shape)
    bad = ~np.isfinite(vals)
    if bad.any():
        k = int(np.argmax(bad))
        raise QuadratureError(float(quad.nodes[k]), float(vals[k]))
    # fixed-order sequential reduction
    return math.fsum(vals * quad.weights)


@dataclass(frozen=True)
class Density1D:
    """A positive probability density on [0, 1].

    ``pdf`` must accept numpy arrays. ``d1``/``d2`` are the first and
    second derivatives when available (``None`` otherwise); ``smoothness``
    counts the continuous derivatives (0, 1 or 2; 2 means "at least 2").
    """

    pdf: Callable[[np.ndarray], np.ndarray]
    d1: Callable | None = None
    d2: Callable | None = None
    cdf_exact: Callable | None = None
    smoothness: int = 0
    kind: str = "custom"
    params: Mapping = field(default_factory=dict)
    periodic: bool = False
    lam: float = field(init=False)
    perturbation: float = field(init=False)

    def __post_init__(self):
        x = _DEFAULT_QUAD.nodes
        vals = np.asarray(self.pdf(x), dtype=float)
        if not np.all(np.isfinite(vals)):
            raise InputError(f"density '{self.kind}' is not finite on [0, 1]")
        if vals.min() <= 0.0:
            raise InputError(f"density '{self.kind}' must be strictly positive (min {vals.min():.3g})")
        mass = math.fsum(vals * _DEFAULT_QUAD.weights)
        if abs(mass - 1.0) > 1e-8:
            raise InputError(f"density '{self.kind}' integrates to {mass!r}, expected 1")
        object.__setattr__(self, "lam", float(min(vals.min(), 1.0 / vals.max())))
        pert = float(np.max(np.abs(vals - 1.0)))
        for d in (self.d1, self.d2):
            if d is not None:
                pert = max(pert, float(np.max(np.abs(d(x)))))
        object.__setattr__(self, "perturbation", pert)

    def __call__(self, y):
        return self.pdf(np.asarray(y, dtype=float))

    def derivative(self, y, order: int = 1):
        fn = self.d1 if order == 1 else self.d2 if order == 2 else None
        if fn is None:
            raise InputError(f"density '{self.kind}' has no derivative of order {order}")
        return fn(np.asarray(y, dtype=float))

    # -- constructors -----------------------------------------------------

    @classmethod
    def uniform(cls) -> "Density1D":
        one = lambda y: np.ones_like(np.asarray(y, dtype=float))
        zero = lambda y: np.zeros_like(np.asarray(y, dtype=float))
        return cls(one, zero, zero, lambda y: np.clip(np.asarray(y, dtype=float), 0.0, 1.0),
                   smoothness=2, kind="uniform", periodic=True)

    @classmethod
    def cosine(cls, eps: float, k: int = 1) -> "Density1D":
        """``1 + eps * cos(2 pi k theta)``; requires ``|eps| < 1``."""
        if not abs(eps) < 1.0:
            raise InputError("cosine density needs |eps| < 1")
        if int(k) != k or k < 1:
            raise InputError("cosine density needs an integer frequency k >= 1")
        w = 2.0 * np.pi * k
        return cls(
            lambda y: 1.0 + eps * np.cos(w * y),
            lambda y: -eps * w * np.sin(w * y),
            lambda y: -eps * w * w * np.cos(w * y),
            lambda y: y + eps * np.sin(w * y) / w,
            smoothness=2, kind="cosine", params={"eps": eps, "k": k}, periodic=True,
        )

    @classmethod
    def exponential(cls, a: float = 1.0) -> "Density1D":
        """``a e^{a y} / (e^a - 1)``; ``a = 1`` gives ``e^y / (e - 1)``."""
        if a == 0:
            return cls.uniform()
        z = math.expm1(a)
        return cls(
            lambda y: a * np.exp(a * y) / z,
            lambda y: a * a * np.exp(a * y) / z,
            lambda y: a ** 3 * np.exp(a * y) / z,
            lambda y: np.expm1(a * y) / z,
            smoothness=2, kind="exponential", params={"a": a},
        )

    @classmethod
    def from_function(cls, pdf, d1=None, d2=None, normalize: bool = True, kind="custom", **kw) -> "Density1D":
        """Wrap a positive function, normalizing it to unit mass by quadrature."""
        z = integrate(pdf) if normalize else 1.0
        if not z > 0:
            raise DegenerateDensityError("density integrates to zero")
        s = 1.0 / z
        smooth = kw.pop("smoothness", 2 if d2 is not None else 1 if d1 is not None else 0)
        return cls(
            lambda y: s * pdf(y),
            (lambda y: s * d1(y)) if d1 is not None else None,
            (lambda y: s * d2(y)) if d2 is not None else None,
            smoothness=smooth, kind=kind, **kw,
        )

    @classmethod
    def from_grid(cls, theta, rho, interpolation: str = "pchip") -> "Density1D":
        """Interpolate samples on [0, 1] and normalize to unit mass.

        ``"pchip"`` (monotone cubic, C1) keeps the interpolant between
        neighbouring samples and so preserves positivity bounds; ``"spline"``
        (C2 cubic spline) supports second derivatives.
        """
        theta = np.asarray(theta, dtype=float)
        rho = np.asarray(rho, dtype=float)
        if theta.ndim != 1 or theta.shape != rho.shape or theta.size < 4:
            raise InputError("grid density needs matching 1D arrays with >= 4 samples")
        if np.any(np.diff(theta) <= 0):
            raise InputError("grid density abscissae must be strictly increasing")
        if theta[0] > 0.0 or theta[-1] < 1.0:
            raise InputError("grid density must cover [0, 1]")
        if np.any(rho <= 0):
            raise InputError("grid density samples must be positive")
        if interpolation == "pchip":
            f = PchipInterpolator(theta, rho)
            smooth = 1
            d2 = None
        elif interpolation == "spline":
            f = CubicSpline(theta, rho)
            smooth = 2
            d2 = f.derivative(2)
        else:
            raise InputError(f"unknown interpolation '{interpolation}'")
        d1 = f.derivative(1)
        return cls.from_function(f, d1, d2, kind="grid", smoothness=smooth,
                                 params={"interpolation": interpolation, "samples": int(theta.size)})

    @classmethod
    def from_csv(cls, path, interpolation: str = "pchip") -> "Density1D":
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or [c.strip() for c in reader.fieldnames[:2]] != ["theta", "rho"]:
                raise InputError(f"{path}: expected CSV header 'theta,rho'")
            rows = [(float(r["theta"]), float(r["rho"])) for r in reader]
        if not rows:
            raise InputError(f"{path}: no samples")
        theta, rho = map(np.array, zip(*rows))
        return cls.from_grid(theta, rho, interpolation)

    @classmethod
    def from_config(cls, spec, base_dir=None) -> "Density1D":
        """Build from ``{"kind": ..., params...}`` (a bare string is the kind)."""
        if isinstance(spec, str):
            spec = {"kind": spec}
        spec = dict(spec)
        kind = spec.pop("kind", None)
        try:
            if kind == "uniform":
                return cls.uniform()
            if kind == "cosine":
                return cls.cosine(float(spec.get("eps", 0.1)), int(spec.get("k", 1)))
            if kind == "exponential":
                return cls.exponential(float(spec.get("a", 1.0)))
            if kind == "grid":
                path = Path(spec["path"])
                if base_dir is not None and not path.is_absolute():
                    path = Path(base_dir) / path
                return cls.from_csv(path, spec.get("interpolation", "pchip"))
        except (KeyError, TypeError) as exc:
            raise InputError(f"bad density spec for kind '{kind}': {exc}") from exc
        raise InputError(f"unknown density kind {kind!r}")

    # -- cumulative distribution -------------------------------------------

    def cdf(self, y) -> np.ndarray:
        y = np.clip(np.asarray(y, dtype=float), 0.0, 1.0)
        if self.cdf_exact is not None:
            return np.asarray(self.cdf_exact(y), dtype=float)
        return _cumulative(self)(y)


def _cumulative(rho: Density1D, panels: int = 256) -> Callable:
    cached = rho.__dict__.get("_cumulative")
    if cached is not None:
        return cached
    edges = np.linspace(0.0, 1.0, panels + 1)
    x, w = gauss_legendre_nodes(edges[:-1], edges[1:])
    table = np.concatenate([[0.0], np.cumsum((rho.pdf(x) * w).sum(axis=-1))])

    def F(y):
        y = np.asarray(y, dtype=float)
        k = np.clip((y * panels).astype(int), 0, panels - 1)
        xs, ws = gauss_legendre_nodes(edges[k], y)
        return table[k] + (rho.pdf(xs) * ws).sum(axis=-1)

    object.__setattr__(rho, "_cumulative", F)
    return F


def power_normalize(rho, d: int, r: float, weights=None):
    """Return ``rho^{d/(d+r)}`` normalized to unit mass.

    ``rho`` is a Density1D (returns a Density1D) or an array of samples with
    quadrature ``weights`` (returns the normalized sample array; use this for
    densities on the 2D fundamental domain).
    """
    if d < 1 or r < 1:
        raise InputError("power_normalize needs d >= 1 and r >= 1")
    alpha = d / (d + r)
    if isinstance(rho, Density1D):
        z = integrate(lambda y: rho.pdf(y) ** alpha)
        if not z > 0:
            raise DegenerateDensityError("integral of rho^(d/(d+r)) vanishes")
        d1 = d2 = None
        if rho.d1 is not None:
            d1 = lambda y: alpha * rho.pdf(y) ** (alpha - 1) * rho.d1(y) / z
        if rho.d1 is not None and rho.d2 is not None:
            d2 = lambda y: alpha * ((alpha - 1) * rho.pdf(y) ** (alpha - 2) * rho.d1(y) ** 2
                                    + rho.pdf(y) ** (alpha - 1) * rho.d2(y)) / z
        return Density1D(lambda y: rho.pdf(y) ** alpha / z, d1, d2, smoothness=rho.smoothness,
                         kind=f"power[{rho.kind},{alpha:.6g}]", params=dict(rho.params), periodic=rho.periodic)
    vals = np.asarray(rho, dtype=float)
    if np.any(vals < 0):
        raise InputError("density samples must be nonnegative")
    if weights is None:
        raise InputError("array input needs quadrature weights")
    powered = vals ** alpha
    z = math.fsum((powered * np.asarray(weights, dtype=float)).ravel())
    if not z > 0:
        raise DegenerateDensityError("integral of rho^(d/(d+r)) vanishes")
    return powered / z


@dataclass(frozen=True)
class DiscreteMeasure1D:
    """Finitely many atoms on [0, 1] with nonnegative masses summing to 1."""

    atoms: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        atoms = np.atleast_1d(np.asarray(self.atoms, dtype=float))
        masses = np.atleast_1d(np.asarray(self.masses, dtype=float))
        if atoms.shape != masses.shape or atoms.ndim != 1 or atoms.size == 0:
            raise InputError("atoms and masses must be matching nonempty 1D arrays")
        if np.any(np.diff(atoms) < 0):
            raise InputError("atoms must be sorted ascending")
        if atoms[0] < 0 or atoms[-1] > 1:
            raise InputError("atoms must lie in [0, 1]")
        if np.any(masses < 0):
            raise InputError("masses must be nonnegative")
        if abs(math.fsum(masses) - 1.0) > 1e-12:
            raise InputError(f"masses sum to {math.fsum(masses)!r}, expected 1")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "masses", masses)

    @property
    def cumulative(self) -> np.ndarray:
        c = np.cumsum(self.masses)
        c[-1] = 1.0
        return c

    def cdf(self, x):
        idx = np.searchsorted(self.atoms, np.asarray(x, dtype=float), side="right")
        c = np.concatenate([[0.0], self.cumulative])
        return c[idx]

    def quantile(self, s):
        s = np.asarray(s, dtype=float)
        idx = np.searchsorted(self.cumulative, s, side="left")
        return self.atoms[np.clip(idx, 0, self.atoms.size - 1)]


def quantile(rho: Density1D, s, tol: float = 1e-12) -> np.ndarray:
    """Generalized inverse of the CDF of ``rho`` by vectorized bisection."""
    s = np.asarray(s, dtype=float)
    lo = np.zeros_like(s)
    hi = np.ones_like(s)
    while True:
        mid = 0.5 * (lo + hi)
        below = rho.cdf(mid) < s
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.all(hi - lo <= tol):
            return 0.5 * (lo + hi)


def cdf_and_quantile(mu):
    """Return ``(cdf, quantile)`` callables for a Density1D or DiscreteMeasure1D."""
    if isinstance(mu, DiscreteMeasure1D):
        return mu.cdf, mu.quantile
    if isinstance(mu, Density1D):
        return mu.cdf, lambda s: quantile(mu, s)
    raise InputError(f"unsupported measure type {type(mu).__name__}")


def _segment_integral(g, a, b, panels):
    x, w = gauss_legendre_nodes(a, b, panels)
    return (g(x) * w).sum(axis=-1)


def wasserstein_1d(mu, nu, r: float = 1.0, panels: int = 4) -> float:
    """``W_r(mu, nu)`` through the quantile representation.

    ``W_r^r = int_0^1 |Q_mu(s) - Q_nu(s)|^r ds``. Atomic-atomic pairs are
    summed exactly; a continuous quantile is integrated per atom interval,
    split where it crosses the atom.
    """
    if r < 1:
        raise InputError("Wasserstein exponent must satisfy r >= 1")
    return wasserstein_power(mu, nu, r, panels) ** (1.0 / r)


def wasserstein_power(mu, nu, r: float = 1.0, panels: int = 4) -> float:
    """``W_r(mu, nu)^r`` (see :func:`wasserstein_1d`)."""
    if r < 1:
        raise InputError("Wasserstein exponent must satisfy r >= 1")
    if isinstance(nu, DiscreteMeasure1D) and not isinstance(mu, DiscreteMeasure1D):
        mu, nu = nu, mu
    if isinstance(mu, DiscreteMeasure1D) and isinstance(nu, DiscreteMeasure1D):
        cuts = np.union1d(mu.cumulative, nu.cumulative)
        cuts = np.concatenate([[0.0], cuts[cuts > 0.0]])
        mids = 0.5 * (cuts[:-1] + cuts[1:])
        diff = np.abs(mu.quantile(mids) - nu.quantile(mids)) ** r
        return math.fsum(diff * np.diff(cuts))
    if isinstance(mu, DiscreteMeasure1D) and isinstance(nu, Density1D):
        hi = mu.cumulative
        lo = np.concatenate([[0.0], hi[:-1]])
        keep = hi > lo
        x, lo, hi = mu.atoms[keep], lo[keep], hi[keep]
        # the continuous quantile crosses the atom at s = F_nu(x)
        split = np.clip(nu.cdf(x), lo, hi)
        # wide atom intervals (few atoms) need more panels
        panels = max(panels, math.ceil(32 * float(np.max(hi - lo))))
        total = []
        for a, b in ((lo, split), (split, hi)):
            s, w = gauss_legendre_nodes(a, b, panels)
            q = quantile(nu, s)
            total.append((np.abs(x[:, None] - q) ** r * w).sum(axis=-1))
        return math.fsum(np.concatenate(total))
    if isinstance(mu, Density1D) and isinstance(nu, Density1D):
        s, w = gauss_legendre_nodes(0.0, 1.0, 256)
        return math.fsum(np.abs(quantile(mu, s) - quantile(nu, s)) ** r * w)
    raise InputError("wasserstein_1d expects Density1D or DiscreteMeasure1D arguments")
