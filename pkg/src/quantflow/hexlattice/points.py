"""Point configurations on the periodic cell Pi and their quantization energy.

Pi = {a e1 + b e2 : |a|, |b| <= 1/2} with opposite edges identified.
Points are stored in Euclidean coordinates, reduced to Pi.

Two routes compute the Voronoi quantities (energy, cell areas,
centroids) with ``rho = 1`` on Pi:

* ``"grid"``: nearest-point assignment on a G x G lattice-coordinate
  midpoint grid; ties go to the lowest point index.
* ``"voronoi"``: exact polygons from a Voronoi diagram of the 9 periodic
  images; used for gradients and flows, since the grid route has an
  error floor of roughly one grid cell.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import Voronoi, cKDTree

from ..errors import InputError, ResolutionError, StiffnessError
from .forms import BASIS, BASIS_INV, CELL_AREA, E1, E2

SHIFTS = np.array([(a, b) for a in (-1, 0, 1) for b in (-1, 0, 1)], dtype=float)
SHIFTS_XY = SHIFTS @ BASIS.T
HEX_CONSTANT = 5.0 / (36.0 * math.sqrt(3.0))


def to_lattice(p) -> np.ndarray:
    return np.asarray(p, float) @ BASIS_INV.T


def from_lattice(ab) -> np.ndarray:
    return np.asarray(ab, float) @ BASIS.T


def reduce_to_cell(p) -> np.ndarray:
    """Representative of each point in Pi, lattice coordinates in [-1/2, 1/2)."""
    ab = to_lattice(p)
    ab = ab - np.floor(ab + 0.5)
    return from_lattice(ab)


def min_image(d) -> np.ndarray:
    """Shortest periodic representative of each displacement (9-translate minimum)."""
    d = reduce_to_cell(d)
    cand = d[..., None, :] + SHIFTS_XY
    k = np.argmin(np.sum(cand ** 2, axis=-1), axis=-1)
    return np.take_along_axis(cand, k[..., None, None], axis=-2)[..., 0, :]


def periodic_distance(p, q) -> np.ndarray:
    return np.linalg.norm(min_image(np.asarray(p, float) - np.asarray(q, float)), axis=-1)


@dataclass(frozen=True)
class HexConfig:
    points: np.ndarray
    n: int | None = None

    def __post_init__(self):
        P = np.asarray(self.points, float)
        if P.ndim != 2 or P.shape[1] != 2 or P.shape[0] == 0:
            raise InputError("points must be a nonempty (N, 2) array")
        if not np.all(np.isfinite(P)):
            raise InputError("points must be finite")
        P = reduce_to_cell(P)
        P.setflags(write=False)
        object.__setattr__(self, "points", P)
        if self.n is not None and P.shape[0] != self.n ** 2:
            raise InputError(f"expected {self.n ** 2} points for n={self.n}")

    @property
    def N(self) -> int:
        return self.points.shape[0]

    def with_points(self, P) -> "HexConfig":
        return HexConfig(P, self.n)

    def min_distance(self) -> float:
        P = self.points
        if self.N == 1:
            return float(np.min(np.linalg.norm(SHIFTS_XY[np.any(SHIFTS != 0, axis=1)], axis=1)))
        d = periodic_distance(P[:, None, :], P[None, :, :])
        np.fill_diagonal(d, np.inf)
        return float(d.min())


def hex_points(n: int) -> HexConfig:
    """The n^2 points of the lattice scaled by 1/n, reduced to Pi."""
    if n < 1:
        raise InputError("n must be at least 1")
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    ab = np.column_stack([i.ravel(), j.ravel()]) / n
    return HexConfig(from_lattice(ab), n)


def perturbed_hex(n: int, amplitude: float, seed: int = 0) -> HexConfig:
    """hex_points(n) with i.i.d. uniform displacements in [-amplitude, amplitude]^2."""
    base = hex_points(n)
    rng = np.random.default_rng(seed)
    return base.with_points(base.points + rng.uniform(-amplitude, amplitude, size=base.points.shape))


def _images(P):
    return (P[None, :, :] + SHIFTS_XY[:, None, :]).reshape(-1, 2)


def _grid_nodes(G: int):
    s = (np.arange(G) + 0.5) / G - 0.5
    a, b = np.meshgrid(s, s, indexing="ij")
    return from_lattice(np.column_stack([a.ravel(), b.ravel()]))


def grid_assignment(cfg: HexConfig, G: int = 1024, chunk: int = 1 << 18):
    """Owner index, squared distance and owner-relative offset for every grid node."""
    P = cfg.points
    N = P.shape[0]
    imgs = _images(P)
    tree = cKDTree(imgs)
    Y = _grid_nodes(G)
    k = min(2, imgs.shape[0])
    owner = np.empty(Y.shape[0], dtype=np.int64)
    d2 = np.empty(Y.shape[0])
    off = np.empty_like(Y)
    for s in range(0, Y.shape[0], chunk):
        y = Y[s:s + chunk]
        dist, idx = tree.query(y, k=k)
        dist = dist.reshape(len(y), k)
        idx = idx.reshape(len(y), k)
        pick = idx[:, 0].copy()
        if k > 1:
            tie = np.abs(dist[:, 1] - dist[:, 0]) <= 1e-12
            alt = idx[:, 1] % N < idx[:, 0] % N
            pick = np.where(tie & alt, idx[:, 1], pick)
        owner[s:s + chunk] = pick % N
        rel = y - imgs[pick]
        off[s:s + chunk] = rel
        d2[s:s + chunk] = np.sum(rel ** 2, axis=1)
    return owner, d2, off


@dataclass
class CellData:
    """Per-site cell quantities with rho = 1 on Pi."""

    area: np.ndarray
    centroid_offset: np.ndarray   # centroid minus site, Euclidean
    moment: np.ndarray            # second moment about the site

    @property
    def energy(self) -> float:
        return math.fsum(self.moment)


def cells_grid(cfg: HexConfig, G: int = 1024) -> CellData:
    owner, d2, off = grid_assignment(cfg, G)
    w = CELL_AREA / (G * G)
    N = cfg.N
    area = np.bincount(owner, minlength=N) * w
    if np.any(area == 0):
        raise ResolutionError(f"cell {int(np.argmin(area))} received no quadrature nodes; refine the grid")
    mom = np.bincount(owner, weights=d2, minlength=N) * w
    cx = np.bincount(owner, weights=off[:, 0], minlength=N) * w / area
    cy = np.bincount(owner, weights=off[:, 1], minlength=N) * w / area
    return CellData(area, np.column_stack([cx, cy]), mom)


def _polygon_moments(V):
    """Area, first moments and second polar moment of a CCW polygon about the origin."""
    x, y = V[:, 0], V[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    c = x * yn - xn * y
    A = c.sum() / 2
    Sx = np.sum((x + xn) * c) / 6
    Sy = np.sum((y + yn) * c) / 6
    J = np.sum(c * (x * x + x * xn + xn * xn + y * y + y * yn + yn * yn)) / 12
    return A, Sx, Sy, J


def cells_voronoi(cfg: HexConfig) -> CellData:
    """Exact periodic Voronoi cells via the 3x3 image tiling."""
    P = cfg.points
    N = P.shape[0]
    imgs = _images(P)
    if N > 1 and np.min(np.linalg.norm(P[:, None] - P[None], axis=-1)[np.triu_indices(N, 1)]) == 0:
        raise InputError("coincident points")
    vor = Voronoi(imgs)
    centre = int(np.flatnonzero(np.all(SHIFTS == 0, axis=1))[0])
    area = np.empty(N)
    cent = np.empty((N, 2))
    mom = np.empty(N)
    for i in range(N):
        reg = vor.regions[vor.point_region[centre * N + i]]
        if -1 in reg or len(reg) < 3:
            raise ResolutionError(f"unbounded Voronoi region for point {i}")
        V = vor.vertices[reg] - P[i]
        ang = np.arctan2(V[:, 1] - V[:, 1].mean(), V[:, 0] - V[:, 0].mean())
        V = V[np.argsort(ang)]
        A, Sx, Sy, J = _polygon_moments(V)
        area[i] = A
        cent[i] = (Sx / A, Sy / A)
        mom[i] = J
    total = area.sum()
    if abs(total - CELL_AREA) > 1e-9:
        raise ResolutionError(f"Voronoi areas sum to {total:.12g}, expected {CELL_AREA:.12g}")
    return CellData(area, cent, mom)


def cell_data(cfg: HexConfig, method: str = "voronoi", G: int = 1024) -> CellData:
    if method == "voronoi":
        return cells_voronoi(cfg)
    if method == "grid":
        return cells_grid(cfg, G)
    raise InputError(f"unknown method {method!r}")


def discrete_energy_2d(cfg: HexConfig, method: str = "grid", G: int = 1024) -> float:
    """``int_Pi min_i dist_per(x_i, y)^2 dy``."""
    if method == "grid":
        _, d2, _ = grid_assignment(cfg, G)
        return math.fsum(d2) * CELL_AREA / (G * G)
    return cell_data(cfg, method, G).energy


def hex_energy_exact(n: int) -> float:
    """Energy of hex_points(n): n^2 regular hexagons of area |Pi|/n^2, ``5 / (24 sqrt3 n^2)``."""
    return 5.0 / (24.0 * math.sqrt(3.0) * n * n)


def discrete_gradient_2d(cfg: HexConfig, method: str = "voronoi", G: int = 1024) -> np.ndarray:
    """``2 m_i (x_i - b_i)`` with cell area m_i and centroid b_i."""
    c = cell_data(cfg, method, G)
    return -2.0 * c.area[:, None] * c.centroid_offset


def lattice_distance(cfg: HexConfig, reference: HexConfig) -> float:
    """RMS of min-image displacements from ``reference`` after removing the mean (best translate)."""
    d = min_image(cfg.points - reference.points)
    d = d - d.mean(axis=0)
    return math.sqrt(float(np.mean(np.sum(d ** 2, axis=1))))


@dataclass
class PointFlow2D:
    times: list = field(default_factory=list)
    energies: list = field(default_factory=list)
    distances: list = field(default_factory=list)
    grad_norms: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    rejected: int = 0
    converged: bool = False

    def strictly_decreasing(self) -> bool:
        return bool(np.all(np.diff(self.energies) < 0))

    def exponential_fit(self, skip: int = 0):
        """Rate mu and R^2 of ``log distance = c - mu t``."""
        t = np.asarray(self.times[skip:])
        y = np.log(np.asarray(self.distances[skip:]))
        slope, icpt = np.polyfit(t, y, 1)
        pred = slope * t + icpt
        ss = float(np.sum((y - y.mean()) ** 2))
        r2 = 1.0 - float(np.sum((y - pred) ** 2)) / ss if ss > 0 else 1.0
        return -float(slope), r2

    def snapshots_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iter", "i", "px", "py"])
            for it, P in self.snapshots:
                for i, (px, py) in enumerate(P):
                    w.writerow([it, i, repr(float(px)), repr(float(py))])

    def series_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iter", "t", "energy", "distance", "grad_norm"])
            for k, row in enumerate(zip(self.times, self.energies, self.distances, self.grad_norms)):
                w.writerow([k] + [repr(float(v)) for v in row])


def evolve_points_2d(cfg: HexConfig, dt: float | None = None, t_end: float = math.inf,
                     max_iter: int = 500, gtol: float = 1e-13, reference: HexConfig | None = None,
                     snapshot_every: int = 0, method: str = "voronoi", G: int = 1024) -> PointFlow2D:
    """Gradient descent on the periodic quantization energy.

    The default step ``0.5 / mean cell area`` sends every point to the
    centroid of its cell (a Lloyd step) on an even partition. A step is
    halved until the energy decreases. Stops when the gradient sup-norm
    drops below ``gtol`` or ``t_end``/``max_iter`` is reached.
    """
    ref = reference if reference is not None else (hex_points(cfg.n) if cfg.n else None)
    h0 = 0.5 * cfg.N / CELL_AREA if dt is None else float(dt)
    out = PointFlow2D()
    P = cfg.points.copy()
    c = cell_data(cfg, method, G)
    E = c.energy
    t = 0.0

    def log(k, P, E, g):
        out.times.append(t)
        out.energies.append(E)
        out.distances.append(lattice_distance(HexConfig(P), ref) if ref is not None else float("nan"))
        out.grad_norms.append(float(np.max(np.abs(g))))
        if snapshot_every and k % snapshot_every == 0:
            out.snapshots.append((k, P.copy()))

    g = -2.0 * c.area[:, None] * c.centroid_offset
    log(0, P, E, g)
    for k in range(1, max_iter + 1):
        if out.grad_norms[-1] < gtol:
            out.converged = True
            break
        if t >= t_end:
            break
        h = min(h0, t_end - t)
        while True:
            trial = HexConfig(P - h * g)
            try:
                ct = cell_data(trial, method, G)
            except ResolutionError:
                ct = None
            if ct is not None and ct.energy < E:
                break
            out.rejected += 1
            h *= 0.5
            if h < 1e-12 * h0:
                if out.grad_norms[-1] < 1e3 * gtol:
                    out.converged = True
                    return out
                raise StiffnessError("no energy-decreasing step found", int(np.argmax(np.abs(g).sum(1))))
        P, c, E = trial.points.copy(), ct, ct.energy
        t += h
        g = -2.0 * c.area[:, None] * c.centroid_offset
        log(k, P, E, g)
    return out
