"""Transforms connecting frequency statistics to distinct-count measurements.

A concave sublinear statistic f(W) = sum_x f(w_x) is handled through two
decompositions:

* a nonnegative coefficient function a(t) with
  f(w) = integral a(t) (1 - exp(-w t)) dt, so f(W) is a weighted combination
  of transform values of the frequency distribution, and
* a capping decomposition f(x) = A_inf * x + integral a(t) min(t, x) dt for
  statistics that need a signed approximation.

Coefficient functions are represented symbolically (Dirac deltas plus named
continuous families) with closed-form tail integrals ``int_tau^inf a`` and
head integrals ``int_0^tau t a(t) dt``, which is what the element mappers need
per draw; nothing in the hot path does quadrature.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from math import e as _E
from math import gamma
from typing import Callable

import numpy as np
from scipy import integrate, special

from .core import IllPosedTransformError, UnsupportedStatisticError

__all__ = [
    "StatisticSpec",
    "parse_statistic",
    "soft_cap",
    "cap",
    "laplace_c",
    "CoefficientFunction",
    "SignedCoefficientFunction",
    "CappingTransform",
    "inverse_transform",
    "tail_integral",
    "head_integral",
    "capping_transform",
    "cap1_approximation",
    "lift_cap1_to_f",
    "rho_estimate",
    "signed_lapm",
    "relative_error_to",
    "THREE_POINT_TIGHT",
    "THREE_POINT_STABLE",
    "DEFAULT_RHO_GRID",
    "CAP1_ERROR_GRID",
]

DEFAULT_RHO_GRID = np.logspace(-4, 4, 200)
CAP1_ERROR_GRID = np.logspace(-3, 3, 200)


# ---------------------------------------------------------------------------
# statistic descriptors


@dataclass(frozen=True)
class StatisticSpec:
    """A named statistic with parameters, e.g. cap(T) or moment(p)."""

    name: str
    params: dict[str, float] = field(default_factory=dict)

    def evaluate(self, w):
        """Pointwise f(w); accepts floats or numpy arrays. f(0) = 0 throughout."""
        w = np.asarray(w, dtype=np.float64)
        n = self.name
        if n == "cap":
            out = np.minimum(self.params["T"], w)
        elif n == "softcap":
            out = soft_cap(self.params["T"], w)
        elif n == "moment":
            out = w ** self.params["p"]
        elif n == "sqrt":
            out = np.sqrt(w)
        elif n == "log1p":
            out = np.log1p(w)
        elif n == "clipped_moment":
            out = np.minimum(w, w ** self.params["p"])
        elif n == "distinct":
            out = (w > 0).astype(np.float64)
        elif n == "sum":
            out = w.astype(np.float64)
        elif n == "cap1approx":
            out = np.minimum(1.0, w)
        else:
            raise UnsupportedStatisticError(f"cannot evaluate statistic {n!r}")
        out = np.asarray(out, dtype=np.float64)
        return out if out.ndim else float(out)

    def descriptor(self) -> str:
        """Canonical descriptor string (inverse of :func:`parse_statistic`)."""
        n = self.name
        if n == "cap":
            return f"capT={self.params['T']:g}"
        if n == "softcap":
            return f"softcapT={self.params['T']:g}"
        if n == "moment":
            return f"moment={self.params['p']:g}"
        if n == "cap1approx":
            p = self.params
            return f"cap1approx=A:{p['A']:g},b1:{p['b1']:g},b2:{p['b2']:g}"
        return n


def parse_statistic(text: str) -> StatisticSpec:
    """Parse a statistic descriptor.

    Supported: ``capT=5``, ``softcapT=5``, ``moment=0.5``, ``sqrt``, ``log1p``,
    ``distinct``, ``sum``, ``cap1approx=A:1.5,b1:0.6,b2:7.97``.
    """
    text = text.strip()
    if text in ("sqrt", "log1p", "distinct", "sum"):
        return StatisticSpec(text)
    m = re.fullmatch(r"capT=([^,]+)", text)
    if m:
        T = _positive(m.group(1), "capT")
        return StatisticSpec("cap", {"T": T})
    m = re.fullmatch(r"softcapT=([^,]+)", text)
    if m:
        T = _positive(m.group(1), "softcapT")
        return StatisticSpec("softcap", {"T": T})
    m = re.fullmatch(r"moment=([^,]+)", text)
    if m:
        p = _as_float(m.group(1), "moment")
        if not 0.0 < p < 1.0:
            raise UnsupportedStatisticError(f"moment exponent must be in (0,1), got {p}")
        return StatisticSpec("moment", {"p": p})
    m = re.fullmatch(r"cap1approx=A:([^,]+),b1:([^,]+),b2:([^,]+)", text)
    if m:
        A = _positive(m.group(1), "cap1approx A")
        b1 = _positive(m.group(2), "cap1approx b1")
        b2 = _positive(m.group(3), "cap1approx b2")
        if not (b1 < 1.0 < b2):
            raise UnsupportedStatisticError(f"cap1approx needs b1 < 1 < b2, got b1={b1} b2={b2}")
        return StatisticSpec("cap1approx", {"A": A, "b1": b1, "b2": b2})
    raise UnsupportedStatisticError(f"unrecognized statistic descriptor {text!r}")


def _as_float(s: str, what: str) -> float:
    try:
        return float(s)
    except ValueError:
        raise UnsupportedStatisticError(f"bad {what} parameter {s!r}") from None


def _positive(s: str, what: str) -> float:
    v = _as_float(s, what)
    if not v > 0.0 or v == float("inf"):
        raise UnsupportedStatisticError(f"{what} parameter must be positive and finite, got {v}")
    return v


# ---------------------------------------------------------------------------
# basic statistics of a frequency distribution


def cap(T: float, w):
    """Hard capping min(T, w)."""
    return np.minimum(T, w) if np.ndim(w) else min(float(T), float(w))


def soft_cap(T: float, w):
    """Smooth capping T(1 - exp(-w/T)); sandwiched between (1-1/e)min(T,w) and min(T,w)."""
    if not T > 0.0:
        raise ValueError(f"soft cap scale T must be > 0, got {T}")
    out = T * -np.expm1(-np.asarray(w, dtype=np.float64) / T)
    return out if out.ndim else float(out)


def laplace_c(dist, t):
    """Distinct count minus the Laplace transform of the weight histogram.

    Returns sum_w W(w) (1 - exp(-w t)); nondecreasing in t, approaching
    t * SUM(W) for small t and the distinct count for large t.
    """
    t_arr = np.asarray(t, dtype=np.float64)
    if np.any(t_arr < 0.0):
        raise ValueError("transform argument t must be >= 0")
    ws, cs = dist.arrays()
    if ws.size == 0:
        return np.zeros_like(t_arr) if t_arr.ndim else 0.0
    out = -(cs[None, :] * np.expm1(-np.outer(np.atleast_1d(t_arr), ws))).sum(axis=1)
    return out.reshape(t_arr.shape) if t_arr.ndim else float(out[0])


# ---------------------------------------------------------------------------
# continuous coefficient families

_QUAD_OPTS = dict(limit=400, epsabs=1e-12, epsrel=1e-10)


class ContinuousFamily:
    """A nonnegative density a(t) with closed-form tail and head integrals."""

    scale: float

    def density(self, t):
        raise NotImplementedError

    def tail(self, tau):
        """int_tau^inf a(t) dt (may be +inf at tau=0 for divergent families)."""
        raise NotImplementedError

    def head(self, tau):
        """int_0^tau t a(t) dt."""
        raise NotImplementedError

    def lapm(self, w):
        """int_0^inf a(t) (1 - exp(-w t)) dt; quadrature fallback."""
        if np.ndim(w):
            return np.array([self.lapm(float(x)) for x in np.asarray(w).ravel()]).reshape(np.shape(w))
        w = float(w)
        if w == 0.0:
            return 0.0
        val, _ = integrate.quad(lambda t: self.density(t) * -np.expm1(-w * t), 0.0, np.inf, **_QUAD_OPTS)
        return val

    def scaled(self, c: float) -> "ContinuousFamily":
        raise NotImplementedError


@dataclass(frozen=True)
class MomentDensity(ContinuousFamily):
    """Inverse transform of w^p: a(t) = scale * p / Gamma(1-p) * t^(-1-p)."""

    p: float
    scale: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise ValueError(f"moment exponent must be in (0,1), got {self.p}")

    def density(self, t):
        return self.scale * self.p / gamma(1.0 - self.p) * np.asarray(t, dtype=np.float64) ** (-1.0 - self.p)

    def tail(self, tau):
        tau = np.asarray(tau, dtype=np.float64)
        with np.errstate(divide="ignore"):
            out = self.scale / (tau**self.p * gamma(1.0 - self.p))
        return out if out.ndim else float(out)

    def head(self, tau):
        tau = np.asarray(tau, dtype=np.float64)
        out = self.scale * self.p * tau ** (1.0 - self.p) / ((1.0 - self.p) * gamma(1.0 - self.p))
        return out if out.ndim else float(out)

    def lapm(self, w):
        out = self.scale * np.asarray(w, dtype=np.float64) ** self.p
        return out if out.ndim else float(out)

    def scaled(self, c: float):
        return MomentDensity(self.p, self.scale * c)


@dataclass(frozen=True)
class ReciprocalExpDensity(ContinuousFamily):
    """Inverse transform of log(1+w): a(t) = scale * exp(-t)/t.

    The tail integral is the exponential integral E1(tau).
    """

    scale: float = 1.0

    def density(self, t):
        t = np.asarray(t, dtype=np.float64)
        return self.scale * np.exp(-t) / t

    def tail(self, tau):
        tau = np.asarray(tau, dtype=np.float64)
        with np.errstate(divide="ignore"):
            out = np.where(tau == 0.0, np.inf, self.scale * special.exp1(np.maximum(tau, 1e-300)))
        return out if out.ndim else float(out)

    def head(self, tau):
        out = self.scale * -np.expm1(-np.asarray(tau, dtype=np.float64))
        return out if out.ndim else float(out)

    def lapm(self, w):
        out = self.scale * np.log1p(np.asarray(w, dtype=np.float64))
        return out if out.ndim else float(out)

    def scaled(self, c: float):
        return ReciprocalExpDensity(self.scale * c)


@dataclass(frozen=True)
class ExpDensity(ContinuousFamily):
    """Capping coefficient of soft capping at scale T: a(t) = scale * exp(-t/T)/T."""

    T: float
    scale: float = 1.0

    def __post_init__(self):
        if not self.T > 0.0:
            raise ValueError(f"scale T must be > 0, got {self.T}")

    def density(self, t):
        return self.scale * np.exp(-np.asarray(t, dtype=np.float64) / self.T) / self.T

    def tail(self, tau):
        out = self.scale * np.exp(-np.asarray(tau, dtype=np.float64) / self.T)
        return out if out.ndim else float(out)

    def head(self, tau):
        tau = np.asarray(tau, dtype=np.float64)
        x = tau / self.T
        with np.errstate(invalid="ignore"):
            out = self.scale * (self.T * -np.expm1(-x) - np.where(np.isinf(tau), 0.0, tau * np.exp(-x)))
        return out if out.ndim else float(out)

    def lapm(self, w):
        w = np.asarray(w, dtype=np.float64)
        out = self.scale * w * self.T / (1.0 + w * self.T)
        return out if out.ndim else float(out)

    def scaled(self, c: float):
        return ExpDensity(self.T, self.scale * c)


@dataclass(frozen=True)
class InverseSquareDensity(ContinuousFamily):
    """Capping coefficient of log(1+w): a(t) = scale / (1+t)^2."""

    scale: float = 1.0

    def density(self, t):
        return self.scale / (1.0 + np.asarray(t, dtype=np.float64)) ** 2

    def tail(self, tau):
        out = self.scale / (1.0 + np.asarray(tau, dtype=np.float64))
        return out if out.ndim else float(out)

    def head(self, tau):
        tau = np.asarray(tau, dtype=np.float64)
        out = self.scale * (np.log1p(tau) - np.where(np.isinf(tau), 1.0, tau / (1.0 + tau)))
        return out if out.ndim else float(out)

    def scaled(self, c: float):
        return InverseSquareDensity(self.scale * c)


@dataclass(frozen=True)
class PowerTailAboveOne(ContinuousFamily):
    """Continuous part of the capping coefficient of min(w, w^p):
    a(t) = scale * p(1-p) t^(p-2) for t > 1, zero below."""

    p: float
    scale: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise ValueError(f"moment exponent must be in (0,1), got {self.p}")

    def density(self, t):
        t = np.asarray(t, dtype=np.float64)
        return np.where(t > 1.0, self.scale * self.p * (1.0 - self.p) * t ** (self.p - 2.0), 0.0)

    def tail(self, tau):
        tau = np.maximum(np.asarray(tau, dtype=np.float64), 1.0)
        out = self.scale * self.p * tau ** (self.p - 1.0)
        return out if out.ndim else float(out)

    def head(self, tau):
        tau = np.asarray(tau, dtype=np.float64)
        out = np.where(tau <= 1.0, 0.0, self.scale * (1.0 - self.p) * (np.maximum(tau, 1.0) ** self.p - 1.0))
        return out if out.ndim else float(out)

    def scaled(self, c: float):
        return PowerTailAboveOne(self.p, self.scale * c)


@dataclass(frozen=True)
class LiftedDensity(ContinuousFamily):
    """A continuous capping coefficient composed with one approximation point.

    For a base capping density a(T) and a point mass m at location s of an
    approximate cap_1 coefficient, the composed density in x is
    m s^2 a(s/x) / x^3. Substituting T = s/x gives the dual identities

        tail(tau) = m * int_0^{s/tau} T a(T) dT = m * base.head(s/tau)
        head(tau) = m * s * int_{s/tau}^inf a(T) dT = m * s * base.tail(s/tau)

    so both sides stay closed-form whenever the base family is.
    """

    base: ContinuousFamily
    s: float
    m: float

    def __post_init__(self):
        if not (self.s > 0.0 and self.m > 0.0):
            raise ValueError("lifted point mass needs s > 0 and m > 0")

    @property
    def scale(self) -> float:
        return self.m

    def density(self, x):
        x = np.asarray(x, dtype=np.float64)
        return self.m * self.s**2 * self.base.density(self.s / x) / x**3

    def tail(self, tau):
        tau = np.asarray(tau, dtype=np.float64)
        with np.errstate(divide="ignore"):
            arg = np.where(tau == 0.0, np.inf, self.s / np.maximum(tau, 1e-300))
        out = self.m * np.asarray(self.base.head(arg), dtype=np.float64)
        return out if out.ndim else float(out)

    def head(self, tau):
        tau = np.asarray(tau, dtype=np.float64)
        with np.errstate(divide="ignore"):
            arg = np.where(tau == 0.0, np.inf, self.s / np.maximum(tau, 1e-300))
        out = self.m * self.s * np.asarray(self.base.tail(arg), dtype=np.float64)
        return out if out.ndim else float(out)

    def lapm(self, w):
        if np.ndim(w):
            return np.array([self.lapm(float(x)) for x in np.asarray(w).ravel()]).reshape(np.shape(w))
        w = float(w)
        if w == 0.0:
            return 0.0

        def integrand(T):
            return self.base.density(T) * T * -np.expm1(-w * self.s / T)

        val, _ = integrate.quad(integrand, 0.0, np.inf, **_QUAD_OPTS)
        return self.m * val

    def scaled(self, c: float):
        return LiftedDensity(self.base, self.s, self.m * c)


# ---------------------------------------------------------------------------
# coefficient functions


@dataclass(frozen=True)
class CoefficientFunction:
    """Nonnegative a(t): Dirac deltas plus continuous families."""

    deltas: tuple[tuple[float, float], ...] = ()
    parts: tuple[ContinuousFamily, ...] = ()

    def __post_init__(self):
        clean = []
        for loc, mass in self.deltas:
            loc, mass = float(loc), float(mass)
            if not (loc > 0.0 and np.isfinite(loc)):
                raise ValueError(f"delta location must be positive and finite, got {loc}")
            if mass < 0.0:
                raise ValueError(f"delta mass must be >= 0, got {mass}")
            if mass > 0.0:
                clean.append((loc, mass))
        clean.sort()
        object.__setattr__(self, "deltas", tuple(clean))
        object.__setattr__(self, "parts", tuple(self.parts))

    @property
    def is_discrete(self) -> bool:
        return not self.parts

    @property
    def is_empty(self) -> bool:
        return not self.deltas and not self.parts

    def tail(self, tau):
        """int_tau^inf a(t) dt, with delta mass at tau included."""
        tau_arr = np.asarray(tau, dtype=np.float64)
        out = np.zeros_like(tau_arr, dtype=np.float64)
        for loc, mass in self.deltas:
            out = out + mass * (loc >= tau_arr)
        for part in self.parts:
            out = out + part.tail(tau_arr)
        return out if out.ndim else float(out)

    def head(self, tau):
        """int_0^tau t a(t) dt, with delta mass at tau included."""
        tau_arr = np.asarray(tau, dtype=np.float64)
        out = np.zeros_like(tau_arr, dtype=np.float64)
        for loc, mass in self.deltas:
            out = out + loc * mass * (loc <= tau_arr)
        for part in self.parts:
            out = out + part.head(tau_arr)
        return out if out.ndim else float(out)

    def lapm(self, w):
        """int a(t) (1 - exp(-w t)) dt."""
        w_arr = np.asarray(w, dtype=np.float64)
        out = np.zeros_like(w_arr, dtype=np.float64)
        for loc, mass in self.deltas:
            out = out - mass * np.expm1(-w_arr * loc)
        for part in self.parts:
            out = out + np.asarray(part.lapm(w_arr), dtype=np.float64)
        return out if out.ndim else float(out)

    def scaled(self, c: float) -> "CoefficientFunction":
        if c < 0.0:
            raise ValueError("coefficient functions are nonnegative; cannot scale by a negative factor")
        return CoefficientFunction(
            tuple((loc, mass * c) for loc, mass in self.deltas),
            tuple(p.scaled(c) for p in self.parts),
        )


def tail_integral(a: CoefficientFunction, tau: float, allow_infinite: bool = False):
    """int_tau^inf a(t) dt; rejects a divergent value unless the caller opts in."""
    if np.ndim(tau) == 0 and tau < 0.0:
        raise ValueError("tail integral cutoff must be >= 0")
    out = a.tail(tau)
    if not allow_infinite and np.any(np.isinf(out)):
        raise ValueError("tail integral diverges at tau=0 for this coefficient function")
    return out


def head_integral(a: CoefficientFunction, tau: float):
    """int_0^tau t a(t) dt."""
    if np.ndim(tau) == 0 and tau < 0.0:
        raise ValueError("head integral cutoff must be >= 0")
    return a.head(tau)


def inverse_transform(spec: StatisticSpec | str) -> CoefficientFunction:
    """Coefficient function a(t) with f(w) = int a(t)(1 - exp(-wt)) dt.

    Exact closed forms exist for soft capping, moments with p in (0,1),
    sqrt and log1p; other statistics have no nonnegative inverse.
    """
    if isinstance(spec, str):
        spec = parse_statistic(spec)
    n = spec.name
    if n == "softcap":
        T = spec.params["T"]
        return CoefficientFunction(deltas=((1.0 / T, T),))
    if n == "moment":
        return CoefficientFunction(parts=(MomentDensity(spec.params["p"]),))
    if n == "sqrt":
        return CoefficientFunction(parts=(MomentDensity(0.5),))
    if n == "log1p":
        return CoefficientFunction(parts=(ReciprocalExpDensity(),))
    raise UnsupportedStatisticError(f"statistic {n!r} has no nonnegative inverse transform")


# ---------------------------------------------------------------------------
# hard capping span


@dataclass(frozen=True)
class CappingTransform:
    """Decomposition f(x) = a_inf * x + int a(t) min(t, x) dt."""

    a_inf: float
    coef: CoefficientFunction

    def __post_init__(self):
        if self.a_inf < 0.0:
            raise ValueError(f"linear coefficient must be >= 0, got {self.a_inf}")

    def reconstruct(self, w):
        """Evaluate the decomposition; equals f(w) for a valid transform."""
        w_arr = np.asarray(w, dtype=np.float64)
        out = self.a_inf * w_arr + self.coef.head(w_arr) + w_arr * self.coef.tail(w_arr)
        # head and tail both include an atom sitting exactly at w; min(t, w)
        # counts it once
        for loc, mass in self.coef.deltas:
            out = out - loc * mass * (w_arr == loc)
        return out if out.ndim else float(out)

    @property
    def slope_at_zero(self) -> float:
        """a_inf + total coefficient mass; equals the right derivative of f at 0."""
        return self.a_inf + float(self.coef.tail(0.0))


def capping_transform(spec: StatisticSpec | str) -> CappingTransform:
    """Capping decomposition of a supported concave sublinear statistic."""
    if isinstance(spec, str):
        spec = parse_statistic(spec)
    n = spec.name
    if n == "cap":
        return CappingTransform(0.0, CoefficientFunction(deltas=((spec.params["T"], 1.0),)))
    if n in ("identity", "sum"):
        return CappingTransform(1.0, CoefficientFunction())
    if n == "clipped_moment":
        p = spec.params["p"]
        return CappingTransform(
            0.0,
            CoefficientFunction(deltas=((1.0, 1.0 - p),), parts=(PowerTailAboveOne(p),)),
        )
    if n == "softcap":
        return CappingTransform(0.0, CoefficientFunction(parts=(ExpDensity(spec.params["T"]),)))
    if n == "log1p":
        return CappingTransform(0.0, CoefficientFunction(parts=(InverseSquareDensity(),)))
    raise UnsupportedStatisticError(f"no capping transform for statistic {n!r}")


# ---------------------------------------------------------------------------
# signed approximate inverse transforms


@dataclass(frozen=True)
class SignedCoefficientFunction:
    """a = plus - minus with disjoint discrete support, plus a certified
    stability factor bounding how much component errors can amplify."""

    plus: CoefficientFunction
    minus: CoefficientFunction
    rho_bound: float = 1.0

    def __post_init__(self):
        shared = {loc for loc, _ in self.plus.deltas} & {loc for loc, _ in self.minus.deltas}
        if shared:
            raise ValueError(f"plus and minus parts share delta locations {sorted(shared)}")
        if self.rho_bound < 1.0:
            raise ValueError(f"stability factor is always >= 1, got {self.rho_bound}")

    @property
    def is_discrete(self) -> bool:
        return self.plus.is_discrete and self.minus.is_discrete

    def lapm(self, w):
        return signed_lapm(self, w)


def signed_lapm(a: SignedCoefficientFunction, w):
    """LapM of the signed coefficient function: plus side minus minus side."""
    return a.plus.lapm(w) - a.minus.lapm(w)


def rho_estimate(a: SignedCoefficientFunction, w_grid) -> float:
    """Grid-certified stability factor max_w LapM[a+-](w) / LapM[a](w).

    The grid must be nonempty and span at least six decades.
    """
    grid = np.asarray(w_grid, dtype=np.float64)
    if grid.size == 0:
        raise ValueError("probe grid must be nonempty")
    if np.any(grid <= 0.0):
        raise ValueError("probe grid values must be positive")
    if grid.max() / grid.min() < 1e6:
        raise ValueError("probe grid must span at least six decades")
    plus = np.asarray(a.plus.lapm(grid), dtype=np.float64)
    minus = np.asarray(a.minus.lapm(grid), dtype=np.float64)
    total = plus - minus
    if np.any(total <= 0.0):
        raise IllPosedTransformError("signed transform is non-positive on the probe grid")
    return float(max(1.0, (plus / total).max(), (minus / total).max()))


def relative_error_to(a: SignedCoefficientFunction, f: Callable, w_grid) -> float:
    """max over the grid of |LapM[a](w) - f(w)| / f(w)."""
    grid = np.asarray(w_grid, dtype=np.float64)
    target = np.asarray(f(grid), dtype=np.float64)
    approx = np.asarray(signed_lapm(a, grid), dtype=np.float64)
    return float(np.max(np.abs(approx - target) / target))


# Hard-coded three-point parameter sets: "tight" trades stability for the
# smallest worst-case error, "stable" keeps the amplification factor low.
THREE_POINT_TIGHT = {"A": 10.0, "b1": 0.9, "b2": 3.75}
THREE_POINT_STABLE = {"A": 1.5, "b1": 0.6, "b2": 7.97}

_SCALED_SOFT_MASS = 2.0 * _E / (2.0 * _E - 1.0)


def cap1_approximation(
    variant: str,
    A: float | None = None,
    b1: float | None = None,
    b2: float | None = None,
) -> SignedCoefficientFunction:
    """Signed approximate inverse transform of min(1, w).

    Variants: ``soft`` (single point mass, 37% worst-case error vanishing at
    the extremes), ``scaled_soft`` (23% error spread everywhere), and
    ``three_point`` with masses (A+1, -a1, -a2) at (1, b1, b2) chosen so the
    approximation is exact to first order at both ends:
    a1 = A(b2-1)/(b2-b1), a2 = A(1-b1)/(b2-b1).
    """
    if variant == "soft":
        plus = CoefficientFunction(deltas=((1.0, 1.0),))
        return SignedCoefficientFunction(plus, CoefficientFunction(), 1.0)
    if variant == "scaled_soft":
        plus = CoefficientFunction(deltas=((1.0, _SCALED_SOFT_MASS),))
        return SignedCoefficientFunction(plus, CoefficientFunction(), 1.0)
    if variant == "three_point":
        if A is None or b1 is None or b2 is None:
            raise ValueError("three_point requires A, b1 and b2")
        if not (0.0 < b1 < 1.0 < b2):
            raise ValueError(f"three_point needs 0 < b1 < 1 < b2, got b1={b1} b2={b2}")
        if not A > 0.0:
            raise ValueError(f"three_point needs A > 0, got {A}")
        a1 = A * (b2 - 1.0) / (b2 - b1)
        a2 = A * (1.0 - b1) / (b2 - b1)
        plus = CoefficientFunction(deltas=((1.0, A + 1.0),))
        minus = CoefficientFunction(deltas=((b1, a1), (b2, a2)))
        signed = SignedCoefficientFunction(plus, minus, 1.0)
        rho = rho_estimate(signed, DEFAULT_RHO_GRID)
        return SignedCoefficientFunction(plus, minus, rho)
    raise ValueError(f"unknown cap1 approximation variant {variant!r}")


def _lift_side(side: CoefficientFunction, ct: CappingTransform) -> CoefficientFunction:
    deltas: dict[float, float] = {}
    parts: list[ContinuousFamily] = []
    for s, m in side.deltas:
        for loc, mass in ct.coef.deltas:
            # point mass M at capping scale T composes to mass M*T*m at s/T
            pos = s / loc
            deltas[pos] = deltas.get(pos, 0.0) + mass * loc * m
        for base in ct.coef.parts:
            parts.append(LiftedDensity(base, s, m))
    return CoefficientFunction(tuple(deltas.items()), tuple(parts))


def lift_cap1_to_f(ct: CappingTransform, alpha: SignedCoefficientFunction) -> SignedCoefficientFunction:
    """Extend a signed cap_1 approximation through a capping decomposition.

    Each point mass of ``alpha`` is rescaled against every component of the
    capping coefficient; the result approximates f with relative error no
    worse than the cap_1 approximation's, and no larger stability factor.
    """
    if not alpha.is_discrete:
        raise UnsupportedStatisticError("lifting supports discrete cap_1 approximations only")
    if ct.a_inf != 0.0:
        raise UnsupportedStatisticError(
            "statistics with a linear component should estimate that part by the exact sum"
        )
    plus = _lift_side(alpha.plus, ct)
    minus = _lift_side(alpha.minus, ct)
    signed = SignedCoefficientFunction(plus, minus, 1.0)
    rho = rho_estimate(signed, DEFAULT_RHO_GRID)
    return SignedCoefficientFunction(plus, minus, rho)
