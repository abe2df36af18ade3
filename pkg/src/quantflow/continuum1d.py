"""Continuum limit in 1D: the Lagrangian map X(t, theta) and the Eulerian density f(t, x).

The Lagrangian map lives on the vertex grid ``theta_j = j / M`` (j = 0..M)
with pinned ends ``X_0 = 0``, ``X_M = 1``. Slopes sit on the faces between
vertices, and the semi-discrete flow is the exact L2 gradient of the
face-based discrete energy, so it dissipates that energy.

The Eulerian density lives on the periodic cell-centred grid
``x_k = (k + 1/2) / K`` and is advanced in flux form.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline
from scipy.sparse import diags

from .density import Density1D, DiscreteMeasure1D, integrate, power_normalize, quantile, wasserstein_1d
from .discrete1d import FlowTrajectory1D
from .errors import BlowDownError, DegeneracyError, InputError


def quantization_constant(r: float) -> float:
    """``C_r = 1 / (2^r (r + 1))``."""
    return 1.0 / (2.0 ** r * (r + 1.0))


@dataclass(frozen=True)
class LagrangianMap:
    """Values of X on ``theta_j = j/M``, including the pinned ends."""

    X: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float).copy()
        if X.ndim != 1 or X.size < 3:
            raise InputError("a Lagrangian map needs at least 3 grid values")
        if X[0] != 0.0 or X[-1] != 1.0:
            raise InputError("Lagrangian map must satisfy X(0) = 0 and X(1) = 1")
        if np.any(np.diff(X) < 0):
            raise InputError("Lagrangian map must be nondecreasing")
        X.setflags(write=False)
        object.__setattr__(self, "X", X)

    @property
    def M(self) -> int:
        return self.X.size - 1

    @property
    def theta(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.M + 1)

    @property
    def slopes(self) -> np.ndarray:
        return np.diff(self.X) * self.M

    @classmethod
    def from_function(cls, fn, M: int, t: float = 0.0) -> "LagrangianMap":
        theta = np.linspace(0.0, 1.0, M + 1)
        X = np.asarray(fn(theta), dtype=float)
        X[0], X[-1] = 0.0, 1.0
        return cls(X, t)

    def sample(self, theta) -> np.ndarray:
        """Cubic interpolation of X at arbitrary ``theta``."""
        return CubicSpline(self.theta, self.X)(np.asarray(theta, dtype=float))


@dataclass(frozen=True)
class EulerianField:
    """Periodic density samples on ``x_k = (k + 1/2)/K``."""

    f: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        f = np.asarray(self.f, dtype=float).copy()
        if f.ndim != 1 or f.size < 3:
            raise InputError("an Eulerian field needs at least 3 cells")
        if np.any(~np.isfinite(f)) or np.any(f <= 0):
            raise InputError("Eulerian density must be finite and strictly positive")
        f.setflags(write=False)
        object.__setattr__(self, "f", f)

    @property
    def K(self) -> int:
        return self.f.size

    @property
    def x(self) -> np.ndarray:
        return (np.arange(self.K) + 0.5) / self.K

    @property
    def mass(self) -> float:
        return math.fsum(self.f) / self.K

    @classmethod
    def from_function(cls, fn, K: int, t: float = 0.0, normalize: bool = True) -> "EulerianField":
        x = (np.arange(K) + 0.5) / K
        f = np.asarray(fn(x), dtype=float)
        if normalize:
            f = f / (math.fsum(f) / K)
        return cls(f, t)


def _check_slopes(X: np.ndarray, floor: float = 0.0) -> np.ndarray:
    M = X.size - 1
    s = np.diff(X) * M
    if np.any(s <= floor):
        j = int(np.argmin(s))
        raise DegeneracyError(f"slope {s[j]:.3g} at or below {floor:g}", (j + 0.5) / M)
    return s


def continuum_energy(X: LagrangianMap, rho: Density1D, r: float = 2.0) -> float:
    """``C_r int_0^1 rho(X) |X'|^{r+1} dtheta`` with face slopes and the midpoint rule."""
    Xv = X.X if isinstance(X, LagrangianMap) else np.asarray(X, dtype=float)
    if np.any(np.diff(Xv) < 0):
        raise InputError("continuum energy needs a monotone map")
    M = Xv.size - 1
    s = np.diff(Xv) * M
    xf = 0.5 * (Xv[1:] + Xv[:-1])
    return quantization_constant(r) * math.fsum(rho(xf) * s ** (r + 1)) / M


def lagrangian_rhs(X, rho: Density1D, r: float = 2.0) -> np.ndarray:
    """Semi-discrete right-hand side of the Lagrangian flow.

    ``C_r [ (r+1) d/dtheta(rho(X) |X'|^{r-1} X') - rho'(X) |X'|^{r+1} ]``,
    divergence in flux form, the ``rho'`` term averaged over the two
    adjacent faces. End rows are zero.
    """
    Xv = X.X if isinstance(X, LagrangianMap) else np.asarray(X, dtype=float)
    M = Xv.size - 1
    s = _check_slopes(Xv)
    xf = 0.5 * (Xv[1:] + Xv[:-1])
    flux = (r + 1.0) * rho(xf) * s ** r
    src = rho.derivative(xf) * s ** (r + 1)
    out = np.zeros_like(Xv)
    out[1:-1] = (flux[1:] - flux[:-1]) * M - 0.5 * (src[1:] + src[:-1])
    return quantization_constant(r) * out


def _lagrangian_jac(X, rho, r, h=1e-7):
    """Tridiagonal Jacobian of ``lagrangian_rhs`` by grouped differences."""
    n = X.size
    base = lagrangian_rhs(X, rho, r)
    bands = {-1: np.zeros(n - 1), 0: np.zeros(n), 1: np.zeros(n - 1)}
    for g in range(3):
        idx = np.arange(1 + g, n - 1, 3)
        eps = h * np.maximum(1.0, np.abs(X[idx]))
        Xp = X.copy()
        Xp[idx] += eps
        d = (lagrangian_rhs(Xp, rho, r) - base)
        for j, e in zip(idx, eps):
            bands[0][j] = d[j] / e
            if j - 1 >= 1:
                bands[1][j - 1] = d[j - 1] / e
            if j + 1 <= n - 2:
                bands[-1][j] = d[j + 1] / e
    return diags([bands[-1], bands[0], bands[1]], [-1, 0, 1], format="csc")


@dataclass
class LagrangianTrajectory:
    times: list = field(default_factory=list)
    maps: list = field(default_factory=list)
    energies: list = field(default_factory=list)
    steps: int = 0
    rejected: int = 0

    def record(self, t, X, e):
        self.times.append(float(t))
        self.maps.append(LagrangianMap(X, t))
        self.energies.append(float(e))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "theta", "X"])
            for lm in self.maps:
                for th, xv in zip(lm.theta, lm.X):
                    w.writerow([repr(lm.t), repr(float(th)), repr(float(xv))])


def _lagrangian_dt(X, rho, r):
    M = X.size - 1
    s = np.diff(X) * M
    top = float(np.max(rho(np.linspace(0, 1, 257))))
    coeff = quantization_constant(r) * (r + 1) * r * top * float(np.max(s)) ** (r - 1)
    return 0.4 / (coeff * M * M)


def evolve_lagrangian(X0: LagrangianMap, rho: Density1D, r: float = 2.0, dt: float | None = None,
                      t_end: float = 1.0, t_eval=None, scheme: str = "explicit",
                      rtol: float = 1e-10, atol: float = 1e-13,
                      max_steps: int = 50_000_000) -> LagrangianTrajectory:
    """Gradient flow of the continuum energy with Dirichlet ends.

    ``explicit``: forward Euler; a step is accepted only if the energy does
    not increase and every slope stays positive, otherwise it is halved.
    ``implicit``: Radau IIA via scipy with a tridiagonal Jacobian, for runs
    that must be accurate in time.
    """
    X = X0.X.copy()
    _check_slopes(X)
    traj = LagrangianTrajectory()
    if scheme == "implicit":
        te = None if t_eval is None else np.asarray(t_eval, dtype=float)
        ends = X[[0, -1]].copy()

        def fun(_t, y):
            z = np.concatenate([[ends[0]], y, [ends[1]]])
            return lagrangian_rhs(z, rho, r)[1:-1]

        def jac(_t, y):
            z = np.concatenate([[ends[0]], y, [ends[1]]])
            J = _lagrangian_jac(z, rho, r)
            return J[1:-1, 1:-1]

        sol = solve_ivp(fun, (X0.t, X0.t + t_end), X[1:-1], method="Radau", jac=jac,
                        t_eval=None if te is None else X0.t + te, rtol=rtol, atol=atol)
        if not sol.success:
            raise DegeneracyError(f"implicit Lagrangian solve failed: {sol.message}", float("nan"))
        for t, y in zip(sol.t, sol.y.T):
            z = np.concatenate([[ends[0]], y, [ends[1]]])
            _check_slopes(z)
            traj.record(t, z, continuum_energy(z, rho, r))
        traj.steps = int(sol.nfev)
        return traj
    if scheme != "explicit":
        raise InputError(f"unknown scheme {scheme!r}")

    h = _lagrangian_dt(X, rho, r) if dt is None else float(dt)
    if not h > 0:
        raise InputError("dt must be positive")
    marks = None if t_eval is None else np.asarray(sorted(t_eval), dtype=float)
    k = 0
    t = 0.0
    e = continuum_energy(X, rho, r)
    if marks is None or marks[0] <= 0:
        traj.record(X0.t, X, e)
        if marks is not None:
            k = int(np.searchsorted(marks, 0.0, side="right"))
    while t < t_end * (1 - 1e-15) and traj.steps < max_steps:
        v = lagrangian_rhs(X, rho, r)
        step = min(h, t_end - t)
        if marks is not None and k < marks.size:
            step = min(step, marks[k] - t)
        while True:
            trial = X + step * v
            s = np.diff(trial)
            ok = bool(np.all(s > 0))
            if ok:
                e_new = continuum_energy(trial, rho, r)
                ok = e_new <= e + 64 * np.finfo(float).eps * abs(e)
            if ok:
                break
            traj.rejected += 1
            step *= 0.5
            if step < 1e-14 * max(1.0, t_end):
                j = int(np.argmin(np.diff(X)))
                raise DegeneracyError("step size underflow; minimum slope", (j + 0.5) / (X.size - 1))
        X, e, t = trial, e_new, t + step
        traj.steps += 1
        if marks is None:
            traj.record(X0.t + t, X, e)
        elif k < marks.size and t >= marks[k] * (1 - 1e-14):
            traj.record(X0.t + t, X, e)
            k += 1
    if not traj.times or traj.times[-1] != X0.t + t:
        traj.record(X0.t + t, X, e)
    return traj


def pushforward_density(X: LagrangianMap, K: int | None = None) -> EulerianField:
    """Density ``f`` with ``f(X(theta)) = 1 / X'(theta)`` as cell averages.

    Since ``f dx = dtheta``, the average over ``[x_{k-1/2}, x_{k+1/2}]`` is
    ``(theta(x_{k+1/2}) - theta(x_{k-1/2})) * K`` with ``theta = X^{-1}``
    (piecewise linear); the total mass is exactly 1.
    """
    Xv = X.X
    K = X.M if K is None else K
    s = np.diff(Xv) * X.M
    if np.any(s < 1e-10):
        j = int(np.argmin(s))
        raise DegeneracyError("slope below 1e-10; cannot invert map", (j + 0.5) / X.M)
    edges = np.linspace(0.0, 1.0, K + 1)
    th = np.interp(edges, Xv, X.theta)
    return EulerianField(np.diff(th) * K, X.t)


def eulerian_rhs(f, rho: Density1D, r: float = 2.0) -> np.ndarray:
    """``-r C_r d/dx( f d/dx(rho / f^{r+1}) )`` in periodic flux form.

    Face values of ``f`` are arithmetic means. If ``rho / f^{r+1}`` is
    constant on the nodes the right-hand side vanishes exactly.
    """
    fv = f.f if isinstance(f, EulerianField) else np.asarray(f, dtype=float)
    K = fv.size
    x = (np.arange(K) + 0.5) / K
    g = rho(x) / fv ** (r + 1)
    ff = 0.5 * (fv + np.roll(fv, -1))
    flux = ff * (np.roll(g, -1) - g) * K
    return -r * quantization_constant(r) * (flux - np.roll(flux, 1)) * K


def _eulerian_coupling(fv, u, rho_nodes, r):
    """Nonnegative coefficients ``a_{k,k+1}`` of the u-form of the scheme."""
    K = fv.size
    g = u ** -(r + 1)
    du = np.roll(u, -1) - u
    dg = g - np.roll(g, -1)
    safe = np.abs(du) > 1e-12 * np.abs(u)
    ratio = np.where(safe, dg / np.where(safe, du, 1.0), (r + 1) * u ** -(r + 2))
    ff = 0.5 * (fv + np.roll(fv, -1))
    return r * quantization_constant(r) * ff * ratio * K * K


@dataclass
class EulerianTrajectory:
    times: list = field(default_factory=list)
    fields: list = field(default_factory=list)
    steps: int = 0

    def record(self, t, f):
        self.times.append(float(t))
        self.fields.append(EulerianField(f, t))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x", "f"])
            for fld in self.fields:
                for xv, fv in zip(fld.x, fld.f):
                    w.writerow([repr(fld.t), repr(float(xv)), repr(float(fv))])


def evolve_eulerian(f0: EulerianField, rho: Density1D, r: float = 2.0, dt: float | None = None,
                    t_end: float = 1.0, record_every: int = 1, cfl: float = 0.9,
                    max_steps: int = 50_000_000) -> EulerianTrajectory:
    """Forward Euler in flux form with a step bound from the scheme coefficients.

    Written for ``u = f / m``, ``m = rho^{1/(1+r)}`` on the nodes, one step is
    ``m_k u_k <- m_k u_k + dt sum_j a_kj (u_j - u_k)`` with symmetric
    ``a_kj >= 0``. Taking ``dt <= min_k m_k / sum_j a_kj`` makes the update
    a convex combination, so min/max of u and every ``sum m (u - c)_+``
    are nonincreasing exactly (up to rounding) and mass is conserved.
    ``dt`` is only an upper bound.
    """
    if not rho.periodic:
        raise InputError("the Eulerian flow needs a periodic density")
    fv = f0.f.copy()
    K = fv.size
    x = (np.arange(K) + 0.5) / K
    rho_n = rho(x)
    m = rho_n ** (1.0 / (1.0 + r))
    traj = EulerianTrajectory()
    traj.record(f0.t, fv)
    t = 0.0
    n = 0
    while t < t_end * (1 - 1e-15) and n < max_steps:
        u = fv / m
        a = _eulerian_coupling(fv, u, rho_n, r)
        out = a + np.roll(a, 1)
        limit = cfl * float(np.min(m / out)) if np.any(out > 0) else t_end - t
        step = min(limit, t_end - t) if dt is None else min(dt, limit, t_end - t)
        rhs = eulerian_rhs(fv, rho, r)
        fv = fv + step * rhs
        if np.any(fv <= 0) or not np.all(np.isfinite(fv)):
            raise BlowDownError(f"density reached zero at t={f0.t + t + step:.6g}")
        t += step
        n += 1
        if n % record_every == 0 or t >= t_end * (1 - 1e-15):
            traj.record(f0.t + t, fv)
    traj.steps = n
    return traj


def u_transform(f, rho: Density1D, r: float = 2.0):
    """``m = rho^{1/(1+r)}`` and ``u = f / m`` on the nodes of ``f``."""
    fv = f.f if isinstance(f, EulerianField) else np.asarray(f, dtype=float)
    x = (np.arange(fv.size) + 0.5) / fv.size
    m = rho(x) ** (1.0 / (1.0 + r))
    return fv / m, m


def stationary_state(rho: Density1D, r: float = 2.0, K: int = 256) -> EulerianField:
    """``f = rho^{1/(1+r)} / int rho^{1/(1+r)}`` sampled on the cell centres."""
    target = power_normalize(rho, 1, r)
    x = (np.arange(K) + 0.5) / K
    return EulerianField(target(x))


@dataclass
class ComparisonDiagnostics:
    times: np.ndarray
    max_u: np.ndarray
    min_u: np.ndarray
    levels: tuple
    positive: dict
    negative: dict

    def increases(self, tol: float = 1e-8) -> list[tuple[float, str, int, float]]:
        """``(level, sign, step, increase)`` for every series step rising above ``tol``."""
        out = []
        for c in self.levels:
            for sign, series in (("+", self.positive[c]), ("-", self.negative[c])):
                d = np.diff(series)
                for k in np.nonzero(d > tol)[0]:
                    out.append((c, sign, int(k), float(d[k])))
        return out

    def bounds_hold(self, tol: float = 1e-6) -> bool:
        """Whether ``min u(0) <= u(t) <= max u(0)`` at all recorded times."""
        return bool(np.all(self.max_u <= self.max_u[0] + tol) and np.all(self.min_u >= self.min_u[0] - tol))


def comparison_diagnostics(traj: EulerianTrajectory, levels, rho: Density1D, r: float = 2.0) -> ComparisonDiagnostics:
    """Series of ``max u``, ``min u`` and ``int (u - c)_{+/-} m dx`` along a run."""
    levels = tuple(float(c) for c in levels)
    pos = {c: [] for c in levels}
    neg = {c: [] for c in levels}
    mx, mn = [], []
    for fld in traj.fields:
        u, m = u_transform(fld, rho, r)
        mx.append(float(u.max()))
        mn.append(float(u.min()))
        for c in levels:
            pos[c].append(math.fsum(np.maximum(u - c, 0.0) * m) / u.size)
            neg[c].append(math.fsum(np.maximum(c - u, 0.0) * m) / u.size)
    return ComparisonDiagnostics(np.array(traj.times), np.array(mx), np.array(mn), levels,
                                 {c: np.array(v) for c, v in pos.items()},
                                 {c: np.array(v) for c, v in neg.items()})


@dataclass
class ClosenessSeries:
    times: np.ndarray
    gap: np.ndarray
    w1: np.ndarray
    interpolated: bool

    @property
    def sup(self) -> float:
        return float(np.max(self.gap))


def discrete_continuum_distance(traj_discrete: FlowTrajectory1D, traj_cont: LagrangianTrajectory,
                                N: int, rho: Density1D | None = None, time_exponent: float = 3.0) -> ClosenessSeries:
    """``(1/N) sum_i |x_i(N^3 t) - X(t, (i-1/2)/N)|^2`` on the continuum times.

    Discrete times are divided by ``N**time_exponent``. When they do not hit
    the continuum times the discrete path is interpolated with a cubic in t
    and ``interpolated`` is set. With ``rho`` the W_1 distance between the
    empirical measure and ``rho^{1/3}`` normalized is reported too.
    """
    td, Xd, _ = traj_discrete.as_arrays()
    if Xd.shape[1] != N:
        raise InputError(f"discrete trajectory has {Xd.shape[1]} points, expected {N}")
    td = td / N ** time_exponent
    tc = np.array(traj_cont.times)
    interpolated = not (td.size == tc.size and np.allclose(td, tc, rtol=1e-12, atol=1e-14))
    if interpolated:
        if tc.max() > td.max() * (1 + 1e-12):
            raise InputError("discrete trajectory does not cover the continuum time span")
        Xd = CubicSpline(td, Xd, axis=0)(tc)
    nodes = (np.arange(N) + 0.5) / N
    gap = np.array([np.mean((Xd[k] - lm.sample(nodes)) ** 2) for k, lm in enumerate(traj_cont.maps)])
    w1 = np.full(tc.size, np.nan)
    if rho is not None:
        target = power_normalize(rho, 1, 2)
        w1 = np.array([wasserstein_1d(DiscreteMeasure1D(np.sort(np.clip(x, 0, 1)), np.full(N, 1.0 / N)), target, 1)
                       for x in Xd])
    return ClosenessSeries(tc, gap, w1, interpolated)
