"""Continuum deformation X = id + tau Y of the periodic cell Pi.

Y is sampled on a G x G grid in lattice coordinates (a, b) in [0, 1)^2
(periodic). Each grid rhombus is cut along its short diagonal into two
equilateral triangles carrying piecewise-linear X, so the discrete
energy is ``sum_T |T| F(grad X_T)`` and the flow is its exact L2 gradient
with lumped node mass ``|Pi| / G^2``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import DomainError, InputError, SingularityError
from .forms import BASIS_INV, CELL_AREA, F_phi, F_phi_and_grad


@dataclass(frozen=True)
class DeformationField:
    Y: np.ndarray
    tau: float = 1.0

    def __post_init__(self):
        Y = np.asarray(self.Y, float).copy()
        if Y.ndim != 3 or Y.shape[0] != Y.shape[1] or Y.shape[2] != 2:
            raise InputError("Y must have shape (G, G, 2)")
        Y.setflags(write=False)
        object.__setattr__(self, "Y", Y)

    @property
    def G(self) -> int:
        return self.Y.shape[0]

    @property
    def mean(self) -> np.ndarray:
        return self.Y.mean(axis=(0, 1))

    def centred(self) -> "DeformationField":
        return DeformationField(self.Y - self.mean, self.tau)

    @classmethod
    def zero(cls, G: int = 64, tau: float = 1.0) -> "DeformationField":
        return cls(np.zeros((G, G, 2)), tau)

    @classmethod
    def from_modes(cls, G: int, modes, tau: float = 1.0) -> "DeformationField":
        """Sum of ``c * trig(2 pi (k a + l b))`` with entries ``(k, l, cx, cy, kind)``, kind 'sin' or 'cos'."""
        s = np.arange(G) / G
        a, b = np.meshgrid(s, s, indexing="ij")
        Y = np.zeros((G, G, 2))
        for k, l, cx, cy, kind in modes:
            ph = 2 * math.pi * (k * a + l * b)
            w = np.sin(ph) if kind == "sin" else np.cos(ph)
            Y[..., 0] += cx * w
            Y[..., 1] += cy * w
        return cls(Y, tau).centred()

    def grad_Y(self) -> np.ndarray:
        """grad Y on the 2 G^2 triangles, shape (2, G, G, 2, 2)."""
        return _gradients(self.Y, self.G)

    def grad_X(self) -> np.ndarray:
        return np.eye(2) + self.tau * self.grad_Y()


def _gradients(Y, G):
    Ya = np.roll(Y, -1, axis=0)           # (k+1, l)
    Yb = np.roll(Y, -1, axis=1)           # (k, l+1)
    Yab = np.roll(Ya, -1, axis=1)         # (k+1, l+1)
    lower = np.stack([Ya - Y, Yb - Y], axis=-1) * G
    upper = np.stack([Yab - Yb, Yab - Ya], axis=-1) * G
    # columns hold derivatives along e1, e2; grad = D J^{-1}
    return np.stack([lower, upper]) @ BASIS_INV


def _check_window(gX):
    D = gX[..., 0, 0] * gX[..., 1, 1] - gX[..., 0, 1] * gX[..., 1, 0]
    if np.any(D <= 0):
        idx = np.unravel_index(int(np.argmin(D)), D.shape)
        raise SingularityError(f"det(grad X) <= 0 on triangle {tuple(int(i) for i in idx)}")


def continuum_energy_2d(X: DeformationField) -> float:
    """``int_Pi F(grad X) dx`` for the piecewise-linear X."""
    gX = X.grad_X()
    _check_window(gX)
    try:
        vals = F_phi(gX)
    except DomainError as exc:
        idx = np.unravel_index(exc.index, gX.shape[:-2]) if exc.index is not None else None
        raise DomainError(f"F outside its domain on triangle {idx}", exc.index) from exc
    return math.fsum(vals.ravel()) * CELL_AREA / (2 * X.G ** 2)


def energy_and_gradient(X: DeformationField):
    """``continuum_energy_2d`` and its derivative with respect to the node values of X."""
    G = X.G
    gX = X.grad_X()
    _check_window(gX)
    vals, dF = F_phi_and_grad(gX)
    w = CELL_AREA / (2 * G * G)
    H = dF @ BASIS_INV.T * (G * w)
    lo, up = H[0], H[1]
    out = np.zeros((G, G, 2))
    # lower: +col0 at (k+1,l), -col0 at (k,l), +col1 at (k,l+1), -col1 at (k,l)
    out -= lo[..., 0] + lo[..., 1]
    out += np.roll(lo[..., 0], 1, axis=0)
    out += np.roll(lo[..., 1], 1, axis=1)
    # upper: col0 = X(k+1,l+1) - X(k,l+1); col1 = X(k+1,l+1) - X(k+1,l)
    out += np.roll(np.roll(up[..., 0] + up[..., 1], 1, axis=0), 1, axis=1)
    out -= np.roll(up[..., 0], 1, axis=1)
    out -= np.roll(up[..., 1], 1, axis=0)
    dev = float(np.sqrt(np.max(np.sum((gX - np.eye(2)) ** 2, axis=(-2, -1)))))
    return math.fsum(vals.ravel()) * w, out, dev


def energy_gradient(X: DeformationField) -> np.ndarray:
    """Derivative of ``continuum_energy_2d`` with respect to the node values of X."""
    return energy_and_gradient(X)[1]


def velocity(X: DeformationField) -> np.ndarray:
    """``dX/dt = div(grad F(grad X))`` at the nodes, i.e. minus the gradient over the node mass."""
    return -energy_gradient(X) * X.G ** 2 / CELL_AREA


def l2_distance(X: DeformationField) -> float:
    """``||X - id||_{L2(Pi)}``."""
    return math.sqrt(CELL_AREA * float(np.mean(np.sum((X.tau * X.Y) ** 2, axis=-1))))


def sup_gradient_deviation(X: DeformationField) -> float:
    """``max |grad X - Id|`` over triangles, Frobenius norm."""
    return float(np.max(np.linalg.norm(X.tau * X.grad_Y(), axis=(-2, -1))))


@dataclass
class DeformationTrajectory:
    times: list = field(default_factory=list)
    energies: list = field(default_factory=list)
    distances: list = field(default_factory=list)
    sup_dev: list = field(default_factory=list)
    means: list = field(default_factory=list)
    final: DeformationField | None = None
    dt: float = 0.0
    rejected: int = 0

    def exponential_fit(self, skip: int = 1):
        t = np.asarray(self.times[skip:])
        y = np.log(np.asarray(self.distances[skip:]))
        slope, icpt = np.polyfit(t, y, 1)
        ss = float(np.sum((y - y.mean()) ** 2))
        r2 = 1.0 - float(np.sum((y - slope * t - icpt) ** 2)) / ss if ss > 0 else 1.0
        return -float(slope), r2

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "energy", "l2_distance", "sup_grad_dev"])
            for row in zip(self.times, self.energies, self.distances, self.sup_dev):
                w.writerow([repr(float(v)) for v in row])


def stable_dt(G: int, safety: float = 0.25) -> float:
    """Explicit step for the Laplacian-like operator; stiffness of F near Id is about 2."""
    return safety * CELL_AREA / (4.0 * G * G)


def evolve_deformation(Y0: DeformationField, dt: float | None = None, t_end: float = 0.1,
                       eta: float = 0.05, record_every: int = 10,
                       max_steps: int = 10_000_000) -> DeformationTrajectory:
    """Forward Euler for ``X_t = div(grad F(grad X))``.

    The start must satisfy ``|grad X0 - Id| <= eta/2``. The mean of Y is
    reset to zero each step. A step that raises the energy is halved. If
    the gradient leaves the window ``eta`` the run aborts with DomainError.
    """
    X = Y0.centred()
    dev0 = sup_gradient_deviation(X)
    if dev0 > eta / 2:
        raise InputError(f"initial |grad X - Id| = {dev0:.4g} exceeds eta/2 = {eta / 2:.4g}")
    h0 = stable_dt(X.G) if dt is None else float(dt)
    tr = DeformationTrajectory(dt=h0)
    tau = X.tau
    scale = X.G ** 2 / CELL_AREA
    E, g, dev = energy_and_gradient(X)

    def rec(t, X, E, dev):
        tr.times.append(t)
        tr.energies.append(E)
        tr.distances.append(l2_distance(X))
        tr.sup_dev.append(dev)
        tr.means.append(float(np.max(np.abs(X.mean))))

    t, n = 0.0, 0
    rec(t, X, E, dev)
    while t < t_end * (1 - 1e-12) and n < max_steps:
        v = -g * scale
        h = min(h0, t_end - t)
        while True:
            Yn = X.Y + h * v / tau
            Xn = DeformationField(Yn - Yn.mean(axis=(0, 1)), tau)
            En, gn, devn = energy_and_gradient(Xn)
            if En <= E + 64 * np.finfo(float).eps * abs(E):
                break
            tr.rejected += 1
            h *= 0.5
            if h < 1e-12 * h0:
                raise DomainError("no energy-nonincreasing step")
        X, E, g, dev, t, n = Xn, En, gn, devn, t + h, n + 1
        if dev > eta:
            raise DomainError(f"|grad X - Id| = {dev:.4g} left the window eta = {eta} at t = {t:.4g}")
        if n % record_every == 0 or t >= t_end * (1 - 1e-12):
            rec(t, X, E, dev)
    tr.final = X
    return tr
