"""Cell energy F(M) of the deformed triangular lattice and related forms.

``F_phi`` is the canonical form; ``F_phi(M)`` equals 16 times the second
moment of a Voronoi cell of the lattice ``M L`` about its site. The
``"printed"`` variant keeps ``det(M)`` in place of ``det(M)^2`` inside Phi
and ``F_trace`` is the alternative three-term trace expression; both are
kept for the calibration report only.

All functions accept a single 2x2 matrix or a stack of shape ``(..., 2, 2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import DomainError, SingularityError

SQRT3 = math.sqrt(3.0)
E1 = np.array([1.0, 0.0])
R = np.array([[0.5, -SQRT3 / 2], [SQRT3 / 2, 0.5]])
E2 = R @ E1
E12 = E1 - E2
DIRECTIONS = np.stack([E1, E2, E12])
S = np.diag([1.0, -1.0])
BASIS = np.column_stack([E1, E2])
BASIS_INV = np.linalg.inv(BASIS)
CELL_AREA = SQRT3 / 2
F_IDENTITY = 10.0 / (3.0 * SQRT3)

_DET_POWER = {"canonical": 2, "printed": 1}


def _stack(M):
    M = np.asarray(M, dtype=float)
    if M.shape[-2:] != (2, 2):
        raise ValueError(f"expected 2x2 matrices, got shape {M.shape}")
    return M


def _det(M):
    return M[..., 0, 0] * M[..., 1, 1] - M[..., 0, 1] * M[..., 1, 0]


def _first_bad(mask) -> int | None:
    flat = np.flatnonzero(np.ravel(mask))
    return None if flat.size == 0 else int(flat[0])


@dataclass(frozen=True)
class Mat2:
    """A 2x2 real matrix with its derived quantities."""

    a: float
    b: float
    c: float
    d: float

    @classmethod
    def from_array(cls, M) -> "Mat2":
        M = np.asarray(M, dtype=float)
        return cls(M[0, 0], M[0, 1], M[1, 0], M[1, 1])

    @property
    def array(self) -> np.ndarray:
        return np.array([[self.a, self.b], [self.c, self.d]])

    @property
    def det(self) -> float:
        return self.a * self.d - self.b * self.c

    @property
    def trace(self) -> float:
        return self.a + self.d

    @property
    def gram(self) -> np.ndarray:
        M = self.array
        return M.T @ M


def _apply(M, V):
    """``M @ V`` for a stack M and a fixed 2x3 matrix V, as two (..., 3) components."""
    m00, m01 = M[..., 0, 0, None], M[..., 0, 1, None]
    m10, m11 = M[..., 1, 0, None], M[..., 1, 1, None]
    return m00 * V[0] + m01 * V[1], m10 * V[0] + m11 * V[1]


_W = DIRECTIONS.T
_RW = R @ _W
_RTW = R.T @ _W


def _phi_parts(M, variant: str):
    k = _DET_POWER[variant]
    D = _det(M)
    bad = _first_bad(D <= 0)
    if bad is not None:
        raise SingularityError(f"det(M) = {np.ravel(D)[bad]:.3g} <= 0 at index {bad}")
    Mw = _apply(M, _W)
    MRw = _apply(M, _RW)
    MRtw = _apply(M, _RTW)
    a = Mw[0] ** 2 + Mw[1] ** 2            # |M w|^2, shape (..., 3)
    p = MRw[0] ** 2 + MRw[1] ** 2
    q = MRtw[0] ** 2 + MRtw[1] ** 2
    Z = p * q / (0.75 * D[..., None] ** k)
    rad = Z - 1.0
    bad = _first_bad(np.any(rad < 0, axis=-1))
    if bad is not None:
        raise DomainError("negative radicand in Phi", bad)
    return a, p, q, Z, np.sqrt(rad), D, Mw, MRw, MRtw, k


def phi(omega, M, variant: str = "canonical"):
    """``Phi(omega, M)`` for a single direction."""
    M = _stack(M)
    w = np.asarray(omega, float)
    D = _det(M)
    if np.any(D <= 0):
        raise SingularityError("det(M) <= 0")
    p = np.sum((M @ (R @ w)) ** 2, axis=-1)
    q = np.sum((M @ (R.T @ w)) ** 2, axis=-1)
    rad = p * q / (0.75 * D ** _DET_POWER[variant]) - 1.0
    if np.any(rad < 0):
        raise DomainError("negative radicand in Phi")
    return np.sqrt(rad)


def F_phi(M, variant: str = "canonical"):
    """``(1/3) sum_w |M w|^4 Phi (3 + Phi^2)`` over ``w in {e1, e2, e12}``."""
    M = _stack(M)
    a, _, _, _, P, *_ = _phi_parts(M, variant)
    return np.sum(a * a * P * (3.0 + P * P), axis=-1) / 3.0


def grad_F_phi(M, variant: str = "canonical"):
    """Derivative of ``F_phi`` with respect to the entries of M, same shape as M."""
    return F_phi_and_grad(M, variant)[1]


def F_phi_and_grad(M, variant: str = "canonical"):
    """``F_phi(M)`` and its derivative from one evaluation of the shared terms."""
    M = _stack(M)
    a, p, q, Z, P, D, Mw, MRw, MRtw, k = _phi_parts(M, variant)
    val = np.sum(a * a * P * (3.0 + P * P), axis=-1) / 3.0
    if np.any(P == 0):
        raise DomainError("Phi vanishes; gradient undefined")
    # dF = (1/3) sum [2a(3P + P^3) da + a^2 (3 + 3P^2) dP],  dP = dZ / (2P)
    ca = 2.0 * a * (3.0 * P + P ** 3) / 3.0
    cz = a * a * (1.0 + P * P) / (2.0 * P) * Z
    cp, cq = 2.0 * cz / p, 2.0 * cz / q
    g = np.empty(M.shape)
    for i in range(2):
        for j in range(2):
            g[..., i, j] = np.sum(2.0 * ca * Mw[i] * _W[j] + cp * MRw[i] * _RW[j] + cq * MRtw[i] * _RTW[j], axis=-1)
    # d det / dM = adj(M)^T
    kz = k * np.sum(cz, axis=-1) / D
    g[..., 0, 0] -= kz * M[..., 1, 1]
    g[..., 0, 1] += kz * M[..., 1, 0]
    g[..., 1, 0] += kz * M[..., 0, 1]
    g[..., 1, 1] -= kz * M[..., 0, 0]
    return val, g


def F_trace(M):
    """The three-term trace expression with ``S = diag(1, -1)``, as written."""
    M = _stack(M)
    D = _det(M)
    bad = _first_bad(D <= 0)
    if bad is not None:
        raise SingularityError(f"det(M) <= 0 at index {bad}")
    G = np.swapaxes(M, -1, -2) @ M
    I = np.eye(2)
    t1 = np.trace(G @ (2 * S - I), axis1=-2, axis2=-1)
    tg = np.trace(G, axis1=-2, axis2=-1)
    ts = np.trace(G @ S, axis1=-2, axis2=-1)
    return (D * t1 / (16 * SQRT3)
            + tg ** 2 * ts / (64 * SQRT3 * D)
            - (tg ** 3 + 4 * ts ** 3) / (192 * SQRT3 * D))


def F0(A, variant: str = "canonical"):
    """``F(A) - (20/(3 sqrt3)) tr(A - I) - (14/(3 sqrt3)) det(A - I)``."""
    A = _stack(A)
    B = A - np.eye(2)
    return (F_phi(A, variant) - 20.0 / (3 * SQRT3) * np.trace(B, axis1=-2, axis2=-1)
            - 14.0 / (3 * SQRT3) * _det(B))


def expansion_polynomial(B, tau):
    """``10 + 20 tau tr B + tau^2 (14 det B + 10 tr^2 B + 3 |B|^2)``."""
    B = _stack(B)
    tr = np.trace(B, axis1=-2, axis2=-1)
    return 10.0 + 20.0 * tau * tr + tau ** 2 * (14.0 * _det(B) + 10.0 * tr ** 2 + 3.0 * np.sum(B ** 2, axis=(-2, -1)))


@dataclass
class ExpansionReport:
    taus: np.ndarray
    residuals: np.ndarray
    order: float

    def as_dict(self) -> dict:
        return {"taus": self.taus.tolist(), "max_residual": self.residuals.tolist(), "fitted_order": self.order}


def expansion_check(gradY, taus=(1e-1, 1e-2, 1e-3), variant: str = "canonical") -> ExpansionReport:
    """Max residual of ``3 sqrt3 F(Id + tau B) - expansion_polynomial`` over the field B.

    ``gradY`` is a stack of 2x2 matrices (a sampled ``grad Y``) or a
    DeformationField. The fitted order is the log-log slope in tau.
    """
    if hasattr(gradY, "grad_Y"):
        gradY = gradY.grad_Y()
    B = _stack(gradY).reshape(-1, 2, 2)
    taus = np.asarray(taus, float)
    res = np.array([np.max(np.abs(3 * SQRT3 * F_phi(np.eye(2) + t * B, variant) - expansion_polynomial(B, t)))
                    for t in taus])
    if np.all(res > 0):
        order = float(np.polyfit(np.log(taus), np.log(res), 1)[0])
    else:
        order = float("inf")
    return ExpansionReport(taus, res, order)


@dataclass
class ConvexityReport:
    eta: float
    samples: int
    h: float
    kappa_min: float
    worst_A: np.ndarray
    worst_B: np.ndarray

    @property
    def convex(self) -> bool:
        return self.kappa_min > 0

    def as_dict(self) -> dict:
        return {"eta": self.eta, "samples": self.samples, "h": self.h, "kappa_min": self.kappa_min,
                "worst_A": self.worst_A.tolist(), "worst_B": self.worst_B.tolist()}


def second_difference(fn, A, B, h: float = 1e-4):
    return (fn(A + h * B) - 2.0 * fn(A) + fn(A - h * B)) / (h * h)


def convexity_probe(eta: float = 0.05, samples: int = 1000, h: float = 1e-4, seed: int = 0,
                    variant: str = "canonical") -> ConvexityReport:
    """Smallest second difference of F0 over random ``|A - I| <= eta`` and unit B (Frobenius)."""
    rng = np.random.default_rng(seed)
    P = rng.normal(size=(samples, 2, 2))
    P /= np.linalg.norm(P, axis=(1, 2))[:, None, None]
    A = np.eye(2) + P * (eta * np.sqrt(rng.uniform(size=samples)))[:, None, None]
    B = rng.normal(size=(samples, 2, 2))
    B /= np.linalg.norm(B, axis=(1, 2))[:, None, None]
    kappa = second_difference(lambda X: F0(X, variant), A, B, h)
    j = int(np.argmin(kappa))
    return ConvexityReport(eta, samples, h, float(kappa[j]), A[j], B[j])


def rotation(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])
