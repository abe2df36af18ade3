"""Moment conditions for radially symmetric probability measures on model spaces.

For a measure with radial profile h (density against the volume element,
``R^{d-1}`` flat or ``sinh^{d-1} R`` hyperbolic) the condition is

    int d^{r+delta} dmu + int A(d)^r dmu < inf,   A(R) = R or sinh R.

Integrals are truncated at ``R_max``; finiteness is decided from the
shape of the log-integrand on ``[R_max/2, R_max]``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np
from scipy.integrate import quad

from .errors import InputError

SPACES = ("euclidean", "hyperbolic")


@dataclass(frozen=True)
class ModelSpace:
    kind: str
    d: int = 2

    def __post_init__(self):
        if self.kind not in SPACES:
            raise InputError(f"space must be one of {SPACES}")
        if self.d < 2:
            raise InputError("dimension must be at least 2")

    def log_volume(self, R):
        R = np.asarray(R, float)
        with np.errstate(divide="ignore"):
            if self.kind == "euclidean":
                return (self.d - 1) * np.log(R)
            return (self.d - 1) * _log_sinh(R)


def _log_sinh(R):
    R = np.asarray(R, float)
    # log sinh R = R + log(1 - e^{-2R}) - log 2, stable for large R
    with np.errstate(divide="ignore"):
        return R + np.log1p(-np.exp(-2 * R)) - math.log(2.0)


def A_model(space, R):
    """``R`` on flat space, ``sinh R`` on hyperbolic space."""
    kind = space.kind if isinstance(space, ModelSpace) else space
    R = np.asarray(R, float)
    if np.any(R < 0):
        raise InputError("R must be nonnegative")
    if kind == "euclidean":
        return R
    if kind == "hyperbolic":
        return np.sinh(R)
    raise InputError(f"unknown space {kind!r}")


def _log_A(kind, R):
    with np.errstate(divide="ignore"):
        return np.log(R) if kind == "euclidean" else _log_sinh(R)


@dataclass(frozen=True)
class RadialMeasure:
    """Profile given through ``log h(R)``; normalized against the model volume on demand."""

    log_profile: Callable
    label: str = "custom"
    R_max: float = 60.0

    @classmethod
    def gaussian(cls, sigma: float = 1.0, R_max: float = 60.0) -> "RadialMeasure":
        return cls(lambda R: -np.asarray(R, float) ** 2 / (2 * sigma ** 2), f"gaussian(sigma={sigma})", R_max)

    @classmethod
    def exponential(cls, a: float, R_max: float = 60.0) -> "RadialMeasure":
        """``h(R) = e^{-a R}``."""
        return cls(lambda R: -a * np.asarray(R, float), f"exp(-{a}R)", R_max)

    @classmethod
    def power(cls, k: float, R_max: float = 60.0) -> "RadialMeasure":
        """``h(R) = (1 + R)^{-k}``."""
        return cls(lambda R: -k * np.log1p(np.asarray(R, float)), f"(1+R)^-{k}", R_max)

    @classmethod
    def from_config(cls, spec: dict) -> "RadialMeasure":
        kind = spec.get("kind")
        R_max = float(spec.get("R_max", 60.0))
        if kind == "gaussian":
            return cls.gaussian(float(spec.get("sigma", 1.0)), R_max)
        if kind == "exponential":
            return cls.exponential(float(spec["a"]), R_max)
        if kind == "power":
            return cls.power(float(spec["k"]), R_max)
        raise InputError(f"unknown radial profile {kind!r}")


@dataclass
class TailVerdict:
    verdict: str          # "finite", "divergent" or "inconclusive"
    rate: float           # fitted exponential rate of the log-integrand
    exponent: float       # fitted power exponent (used when rate is near 0)
    value: float          # truncated integral on [0, R_max]


def _tail_test(log_f: Callable, R_max: float, nodes: int = 64) -> tuple[str, float, float]:
    """Classify the tail of ``exp(log_f)`` on ``[R_max/2, R_max]``.

    Both ``log f ~ c + rate R`` and ``log f ~ c + exponent log R`` are
    fitted; the one with the smaller residual decides (rate > 0, or
    exponent >= -1, means divergent). A non-monotone tail is inconclusive.
    """
    R = np.linspace(R_max / 2, R_max, nodes)
    L = log_f(R)
    if not np.all(np.isfinite(L)):
        return "inconclusive", float("nan"), float("nan")
    dL = np.diff(L)
    scale = max(1.0, float(np.max(np.abs(L))))
    if np.any(dL > 1e-12 * scale) and np.any(dL < -1e-12 * scale):
        return "inconclusive", float("nan"), float("nan")
    lin, res_lin = np.polyfit(R, L, 1, full=True)[:2]
    pw, res_pw = np.polyfit(np.log(R), L, 1, full=True)[:2]
    rate, expo = float(lin[0]), float(pw[0])
    res_lin = float(res_lin[0]) if len(res_lin) else 0.0
    res_pw = float(res_pw[0]) if len(res_pw) else 0.0
    if res_pw < res_lin:
        return ("divergent" if expo >= -1.0 else "finite"), rate, expo
    return ("divergent" if rate > -1e-9 else "finite"), rate, expo


def _log_integral(log_f: Callable, R_max: float) -> float:
    """``log int_0^{R_max} exp(log_f)``, shifted by the maximum to avoid overflow."""
    R = np.linspace(0.0, R_max, 4001)[1:]
    shift = float(np.max(log_f(R)))
    val, _ = quad(lambda x: math.exp(float(log_f(np.array([x]))[0]) - shift) if x > 0 else 0.0,
                  0.0, R_max, limit=400, epsabs=0.0, epsrel=1e-11)
    return shift + math.log(val)


def radial_integral(mu: RadialMeasure, space: ModelSpace, log_weight: Callable) -> TailVerdict:
    """``int weight(d) dmu`` with mu normalized to mass 1, truncated at ``R_max``."""
    log_mass_f = lambda R: mu.log_profile(R) + space.log_volume(R)
    mass_verdict, *_ = _tail_test(log_mass_f, mu.R_max)
    if mass_verdict != "finite":
        raise InputError(f"profile {mu.label} is not normalizable on {space.kind} d={space.d}")
    log_mass = _log_integral(log_mass_f, mu.R_max)
    log_f = lambda R: log_weight(R) + log_mass_f(R)
    verdict, rate, expo = _tail_test(log_f, mu.R_max)
    value = math.exp(_log_integral(log_f, mu.R_max) - log_mass)
    return TailVerdict(verdict, rate, expo, value)


def polynomial_moment(mu: RadialMeasure, space: ModelSpace, p: float) -> TailVerdict:
    """``int d(x, x0)^p dmu``."""
    with np.errstate(divide="ignore"):
        return radial_integral(mu, space, lambda R: p * np.log(np.asarray(R, float)))


def A_moment(mu: RadialMeasure, space: ModelSpace, r: float) -> TailVerdict:
    """``int A(d(x, x0))^r dmu``."""
    return radial_integral(mu, space, lambda R: r * _log_A(space.kind, np.asarray(R, float)))


@dataclass
class MomentRecord:
    space: str
    d: int
    r: float
    delta: float
    moment_value: float
    A_term_value: float
    verdict: str
    profile: str = ""
    moment_rate: float = float("nan")
    A_rate: float = float("nan")

    def as_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True)


def moment_condition(mu: RadialMeasure, space: ModelSpace, r: float = 2.0, delta: float = 1.0) -> MomentRecord:
    """Evaluate both terms and combine their verdicts.

    The verdict is ``finite``, ``divergent (moment)``, ``divergent (A-term)``,
    ``divergent (both)`` or ``inconclusive``.
    """
    if r < 1:
        raise InputError("r must be at least 1")
    if not delta > 0:
        raise InputError("delta must be positive")
    m = polynomial_moment(mu, space, r + delta)
    a = A_moment(mu, space, r)
    verdicts = {m.verdict, a.verdict}
    if "inconclusive" in verdicts:
        verdict = "inconclusive"
    elif m.verdict == "divergent" and a.verdict == "divergent":
        verdict = "divergent (both)"
    elif m.verdict == "divergent":
        verdict = "divergent (moment)"
    elif a.verdict == "divergent":
        verdict = "divergent (A-term)"
    else:
        verdict = "finite"
    return MomentRecord(space.kind, space.d, float(r), float(delta), m.value, a.value, verdict,
                        mu.label, m.rate, a.rate)


def sharpness_contrast(d: int = 2, r: float = 2.0, delta: float = 1.0, powers=(1, 2, 4, 8)) -> dict:
    """Hyperbolic profiles ``e^{-aR}`` on either side of the A-term threshold.

    Against ``sinh^{d-1} R`` the profile is normalizable for ``a > d - 1``
    and ``int sinh^r`` is finite iff ``a > d - 1 + r``. The slow rate
    ``d - 1 + r/2`` and fast rate ``d - 1 + 3r/2`` sit on either side
    (2 and 4 for d = r = 2); every polynomial moment of both is finite.
    """
    H = ModelSpace("hyperbolic", d)
    slow = RadialMeasure.exponential(d - 1 + r / 2)
    fast = RadialMeasure.exponential(d - 1 + 1.5 * r)
    return {
        "slow": moment_condition(slow, H, r, delta).as_dict(),
        "fast": moment_condition(fast, H, r, delta).as_dict(),
        "slow_polynomial_moments": {str(p): asdict(polynomial_moment(slow, H, p)) for p in powers},
    }
