"""One-dimensional probability laws and quadrature.

Every spatial, temporal and velocity law of the trip model is one of a small
set of closed parametric families, so CDFs and survival functions are analytic
and can be evaluated cheaply at every quadrature node.

All densities are vectorised over numpy arrays.  ``sf`` is defined as
``1.0 - cdf`` so the two are exact complements at every evaluation point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Callable

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import ConfigError, DiracDensityError, NonFiniteIntegrand

__all__ = [
    "QuadratureSpec",
    "DEFAULT_QUADRATURE",
    "integrate",
    "Density1D",
    "Uniform",
    "TruncatedGaussianMixture",
    "PiecewiseLinear",
    "Dirac",
    "CosineSeries",
    "ConditionalSchedule",
    "FixedSchedule",
    "LinearShiftSchedule",
    "eval_density",
    "eval_cdf",
    "eval_survival",
    "sample",
    "density_from_dict",
    "schedule_from_dict",
]


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------


@lru_cache(maxsize=64)
def _gauss_legendre_unit(order: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


@dataclass(frozen=True)
class QuadratureSpec:
    """Composite quadrature rule.

    ``scheme`` is ``"gauss_legendre"`` (``panels`` panels of ``order`` nodes)
    or ``"trapezoid"`` (``n`` equispaced nodes).
    """

    scheme: str = "gauss_legendre"
    panels: int = 32
    order: int = 8
    n: int = 257
    abs_tol: float = 1e-12
    rel_tol: float = 1e-10

    def __post_init__(self):
        if self.scheme not in ("gauss_legendre", "trapezoid"):
            raise ValueError(f"unknown quadrature scheme {self.scheme!r}")
        if self.panels < 1 or self.order < 2 or self.n < 2:
            raise ValueError("quadrature needs panels >= 1, order >= 2, n >= 2")
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("quadrature tolerances must be positive")

    @property
    def exactness_degree(self) -> int:
        return 2 * self.order - 1 if self.scheme == "gauss_legendre" else 1

    def unit_rule(self) -> tuple[np.ndarray, np.ndarray]:
        """Nodes and weights on [0, 1] (weights sum to 1)."""
        return _unit_rule(self.scheme, self.panels, self.order, self.n)

    def nodes(self, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
        r, w = self.unit_rule()
        return a + (b - a) * r, (b - a) * w

    def refined(self) -> "QuadratureSpec":
        return QuadratureSpec(self.scheme, 2 * self.panels, self.order, 2 * self.n - 1,
                              self.abs_tol, self.rel_tol)

    def to_dict(self) -> dict:
        return {"scheme": self.scheme, "panels": self.panels, "order": self.order,
                "n": self.n, "abs_tol": self.abs_tol, "rel_tol": self.rel_tol}

    @classmethod
    def from_dict(cls, d: dict | None) -> "QuadratureSpec":
        if not d:
            return cls()
        try:
            return cls(**d)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad quadrature section: {exc}") from None


@lru_cache(maxsize=64)
def _unit_rule(scheme: str, panels: int, order: int, n: int):
    if scheme == "trapezoid":
        x = np.linspace(0.0, 1.0, n)
        w = np.full(n, 1.0 / (n - 1))
        w[0] = w[-1] = 0.5 / (n - 1)
    else:
        g, gw = _gauss_legendre_unit(order)
        left = np.arange(panels)[:, None] / panels
        x = (left + g[None, :] / panels).ravel()
        w = np.tile(gw / panels, panels)
    for _ in range(4):  # absorb the last ulp so constants integrate exactly
        r = 1.0 - math.fsum(w)
        if r == 0.0:
            break
        w[w.size // 2] += r
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


DEFAULT_QUADRATURE = QuadratureSpec()


def _apply_rule(f, a, b, spec):
    x, w = spec.nodes(a, b)
    y = np.asarray(f(x), dtype=float)
    if y.shape != x.shape:
        y = np.broadcast_to(y, x.shape)
    if not np.all(np.isfinite(y)):
        raise NonFiniteIntegrand(f"integrand is not finite on [{a}, {b}]")
    return math.fsum(w * y)


def integrate(f: Callable[[np.ndarray], Any], interval: tuple[float, float],
              spec: QuadratureSpec = DEFAULT_QUADRATURE, max_refinements: int = 8) -> float:
    """Integrate a vectorised ``f`` over ``interval``.

    The rule is applied at the requested resolution and then with doubled
    panel counts until two successive results agree within
    ``abs_tol + rel_tol * |result|`` (at most ``max_refinements`` doublings).
    """
    a, b = float(interval[0]), float(interval[1])
    if a == b:
        return 0.0
    coarse = _apply_rule(f, a, b, spec)
    for _ in range(max_refinements):
        spec = spec.refined()
        fine = _apply_rule(f, a, b, spec)
        if abs(fine - coarse) <= spec.abs_tol + spec.rel_tol * abs(fine):
            return fine
        coarse = fine
    return coarse


# ---------------------------------------------------------------------------
# Densities
# ---------------------------------------------------------------------------


def _as_float_array(x):
    return np.asarray(x, dtype=float)


def _maybe_scalar(out, x):
    return float(out) if np.ndim(x) == 0 else out


class Density1D:
    """Base class of the closed set of one-dimensional laws."""

    kind = "abstract"
    is_dirac = False

    @property
    def support(self) -> tuple[float, float]:
        raise NotImplementedError

    def pdf(self, x):
        raise NotImplementedError

    def cdf(self, x):
        raise NotImplementedError

    def sf(self, x):
        return 1.0 - self.cdf(x)

    def sample(self, rng: np.random.Generator, size=None):
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Uniform(Density1D):
    lo: float = 0.0
    hi: float = 1.0
    kind = "uniform"

    def __post_init__(self):
        if not self.hi > self.lo:
            raise ValueError("uniform law needs hi > lo")

    @property
    def support(self):
        return (self.lo, self.hi)

    def pdf(self, x):
        x = _as_float_array(x)
        out = np.where((x >= self.lo) & (x <= self.hi), 1.0 / (self.hi - self.lo), 0.0)
        return _maybe_scalar(out, x)

    def cdf(self, x):
        x = _as_float_array(x)
        out = np.clip((x - self.lo) / (self.hi - self.lo), 0.0, 1.0)
        return _maybe_scalar(out, x)

    def sample(self, rng, size=None):
        return self.lo + (self.hi - self.lo) * rng.random(size)

    def to_dict(self):
        return {"kind": self.kind, "lo": self.lo, "hi": self.hi}


def _phi_between(a, b):
    """Phi(b) - Phi(a) for a <= b, computed on the accurate tail."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim == 0:  # one branch only; this is the hot path of the mixture CDF
        return ndtr(-a) - ndtr(-b) if a > 0 else ndtr(b) - ndtr(a)
    return np.where(a > 0, ndtr(-a) - ndtr(-b), ndtr(b) - ndtr(a))


@dataclass(frozen=True)
class TruncatedGaussianMixture(Density1D):
    """Mixture of Gaussians, each component truncated to ``support``.

    Truncating component-wise keeps the mixture weights equal to the
    component probabilities.
    """

    weights: tuple[float, ...]
    means: tuple[float, ...]
    sds: tuple[float, ...]
    bounds: tuple[float, float] = (-math.inf, math.inf)
    kind = "truncated_gaussian_mixture"
    _alpha: np.ndarray = field(init=False, repr=False, compare=False)
    _beta: np.ndarray = field(init=False, repr=False, compare=False)
    _mass: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        mu = np.asarray(self.means, dtype=float)
        sd = np.asarray(self.sds, dtype=float)
        if not (w.ndim == 1 and w.shape == mu.shape == sd.shape and w.size >= 1):
            raise ValueError("weights, means and sds must be equal-length sequences")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("mixture weights must be nonnegative and sum to 1")
        if np.any(sd <= 0):
            raise ValueError("standard deviations must be positive")
        lo, hi = self.bounds
        if not hi > lo:
            raise ValueError("truncation support needs hi > lo")
        object.__setattr__(self, "weights", tuple(map(float, w)))
        object.__setattr__(self, "means", tuple(map(float, mu)))
        object.__setattr__(self, "sds", tuple(map(float, sd)))
        object.__setattr__(self, "bounds", (float(lo), float(hi)))
        alpha = (lo - mu) / sd
        beta = (hi - mu) / sd
        mass = _phi_between(alpha, beta)
        if np.any(mass <= 0):
            raise ValueError("a mixture component has no mass inside the support")
        object.__setattr__(self, "_alpha", alpha)
        object.__setattr__(self, "_beta", beta)
        object.__setattr__(self, "_mass", mass)

    @property
    def support(self):
        return self.bounds

    def shifted(self, delta: float) -> "TruncatedGaussianMixture":
        lo, hi = self.bounds
        return TruncatedGaussianMixture(self.weights, tuple(m + delta for m in self.means),
                                        self.sds, (lo + delta, hi + delta))

    def reflected(self) -> "TruncatedGaussianMixture":
        """Law of ``-X``."""
        lo, hi = self.bounds
        return TruncatedGaussianMixture(self.weights, tuple(-m for m in self.means),
                                        self.sds, (-hi, -lo))

    def pdf(self, x):
        x = _as_float_array(x)
        out = np.zeros(x.shape)
        for w, mu, sd, z in zip(self.weights, self.means, self.sds, self._mass):
            u = (x - mu) / sd
            out += (w / (sd * z * math.sqrt(2.0 * math.pi))) * np.exp(-0.5 * u * u)
        lo, hi = self.bounds
        out = np.where((x >= lo) & (x <= hi), out, 0.0)
        return _maybe_scalar(out, x)

    def cdf(self, x):
        x = _as_float_array(x)
        lo, hi = self.bounds
        xc = np.clip(x, lo, hi)
        out = np.zeros(x.shape)
        for w, mu, sd, a, z in zip(self.weights, self.means, self.sds, self._alpha, self._mass):
            out += w * _phi_between(a, (xc - mu) / sd) / z
        out = np.clip(out, 0.0, 1.0)
        out = np.where(x >= hi, 1.0, np.where(x <= lo, 0.0, out))
        return _maybe_scalar(out, x)

    def sample(self, rng, size=None):
        n = 1 if size is None else int(np.prod(size))
        comp = rng.choice(len(self.weights), size=n, p=np.asarray(self.weights))
        u = rng.random(n)
        mu = np.asarray(self.means)[comp]
        sd = np.asarray(self.sds)[comp]
        a = self._alpha[comp]
        b = self._beta[comp]
        z = self._mass[comp]
        lower = a <= 0
        draw = np.empty(n)
        draw[lower] = ndtri(np.clip(ndtr(a[lower]) + u[lower] * z[lower], 0.0, 1.0))
        up = ~lower
        draw[up] = -ndtri(np.clip(ndtr(-a[up]) - u[up] * z[up], 0.0, 1.0))
        draw = np.clip(draw, a, b)
        out = mu + sd * draw
        lo, hi = self.bounds
        out = np.clip(out, lo, hi)
        if size is None:
            return float(out[0])
        return out.reshape(size)

    def to_dict(self):
        return {"kind": self.kind, "weights": list(self.weights), "means": list(self.means),
                "sds": list(self.sds), "support": list(self.bounds)}


@dataclass(frozen=True)
class PiecewiseLinear(Density1D):
    """Density linear between ``knots``; must integrate to one."""

    knots: tuple[float, ...]
    values: tuple[float, ...]
    kind = "piecewise_linear"
    _cum: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        k = np.asarray(self.knots, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if k.ndim != 1 or k.shape != v.shape or k.size < 2:
            raise ValueError("knots and values must be equal-length sequences (>= 2)")
        if np.any(np.diff(k) <= 0):
            raise ValueError("knots must be strictly increasing")
        if np.any(v < 0):
            raise ValueError("density values must be nonnegative")
        seg = 0.5 * (v[1:] + v[:-1]) * np.diff(k)
        total = seg.sum()
        if abs(total - 1.0) > 1e-10:
            raise ValueError(f"piecewise-linear density integrates to {total!r}, not 1")
        object.__setattr__(self, "knots", tuple(map(float, k)))
        object.__setattr__(self, "values", tuple(map(float, v)))
        object.__setattr__(self, "_cum", np.concatenate([[0.0], np.cumsum(seg)]))

    @classmethod
    def normalized(cls, knots, values) -> "PiecewiseLinear":
        k = np.asarray(knots, dtype=float)
        v = np.asarray(values, dtype=float)
        total = (0.5 * (v[1:] + v[:-1]) * np.diff(k)).sum()
        return cls(tuple(k), tuple(v / total))

    @property
    def support(self):
        return (self.knots[0], self.knots[-1])

    def pdf(self, x):
        x = _as_float_array(x)
        out = np.interp(x, self.knots, self.values, left=0.0, right=0.0)
        return _maybe_scalar(out, x)

    def cdf(self, x):
        x = _as_float_array(x)
        k = np.asarray(self.knots)
        v = np.asarray(self.values)
        idx = np.clip(np.searchsorted(k, x, side="right") - 1, 0, k.size - 2)
        s = np.clip(x - k[idx], 0.0, k[idx + 1] - k[idx])
        slope = (v[idx + 1] - v[idx]) / (k[idx + 1] - k[idx])
        out = self._cum[idx] + v[idx] * s + 0.5 * slope * s * s
        out = np.clip(out / self._cum[-1], 0.0, 1.0)
        out = np.where(x >= k[-1], 1.0, np.where(x <= k[0], 0.0, out))
        return _maybe_scalar(out, x)

    def sample(self, rng, size=None):
        k = np.asarray(self.knots)
        v = np.asarray(self.values)
        p = rng.random(size) * self._cum[-1]
        idx = np.clip(np.searchsorted(self._cum, p, side="right") - 1, 0, k.size - 2)
        r = p - self._cum[idx]
        slope = (v[idx + 1] - v[idx]) / (k[idx + 1] - k[idx])
        disc = np.sqrt(np.maximum(v[idx] ** 2 + 2.0 * slope * r, 0.0))
        denom = v[idx] + disc
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.where(denom > 0, 2.0 * r / denom, 0.0)
        out = np.clip(k[idx] + s, k[idx], k[idx + 1])
        return float(out) if size is None else out

    def to_dict(self):
        return {"kind": self.kind, "knots": list(self.knots), "values": list(self.values)}


@dataclass(frozen=True)
class Dirac(Density1D):
    atom: float
    kind = "dirac"
    is_dirac = True

    @property
    def support(self):
        return (self.atom, self.atom)

    def pdf(self, x):
        raise DiracDensityError(f"Dirac law at {self.atom} has no density")

    def cdf(self, x):
        x = _as_float_array(x)
        out = np.where(x >= self.atom, 1.0, 0.0)
        return _maybe_scalar(out, x)

    def sample(self, rng, size=None):
        return self.atom if size is None else np.full(size, float(self.atom))

    def to_dict(self):
        return {"kind": self.kind, "atom": self.atom}


@dataclass(frozen=True)
class CosineSeries(Density1D):
    """Density ``(1 + sum_m c_m cos(2 pi m y)) / (hi - lo)`` with ``y = (x - lo)/(hi - lo)``.

    Covers the counter-placement laws ``8 cos(pi x)^4 / 3`` (coefficients
    ``(4/3, 1/3)``) and ``8 sin(pi x)^4 / 3`` (``(-4/3, 1/3)``) on [0, 1].
    """

    lo: float
    hi: float
    coefficients: tuple[float, ...]
    kind = "cosine_series"

    def __post_init__(self):
        if not self.hi > self.lo:
            raise ValueError("cosine-series law needs hi > lo")
        object.__setattr__(self, "coefficients", tuple(map(float, self.coefficients)))
        y = np.linspace(0.0, 1.0, 4097)
        if np.min(self._shape(y)) < -1e-12:
            raise ValueError("cosine-series coefficients give a negative density")

    @classmethod
    def cos4(cls, lo: float = 0.0, hi: float = 1.0) -> "CosineSeries":
        return cls(lo, hi, (4.0 / 3.0, 1.0 / 3.0))

    @classmethod
    def sin4(cls, lo: float = 0.0, hi: float = 1.0) -> "CosineSeries":
        return cls(lo, hi, (-4.0 / 3.0, 1.0 / 3.0))

    def _shape(self, y):
        out = np.ones_like(y)
        for m, c in enumerate(self.coefficients, start=1):
            out = out + c * np.cos(2.0 * math.pi * m * y)
        return out

    def _unit_cdf(self, y):
        out = y.copy()
        for m, c in enumerate(self.coefficients, start=1):
            out = out + c * np.sin(2.0 * math.pi * m * y) / (2.0 * math.pi * m)
        return out

    @property
    def support(self):
        return (self.lo, self.hi)

    def pdf(self, x):
        x = _as_float_array(x)
        y = (x - self.lo) / (self.hi - self.lo)
        out = np.maximum(self._shape(y), 0.0) / (self.hi - self.lo)
        out = np.where((y >= 0) & (y <= 1), out, 0.0)
        return _maybe_scalar(out, x)

    def cdf(self, x):
        x = _as_float_array(x)
        y = np.clip((x - self.lo) / (self.hi - self.lo), 0.0, 1.0)
        out = np.clip(self._unit_cdf(y), 0.0, 1.0)
        out = np.where(y >= 1.0, 1.0, np.where(y <= 0.0, 0.0, out))
        return _maybe_scalar(out, x)

    def sample(self, rng, size=None):
        p = np.atleast_1d(rng.random(size))
        a = np.zeros_like(p)
        b = np.ones_like(p)
        for _ in range(64):  # bisection to below 1e-18 on the unit interval
            mid = 0.5 * (a + b)
            below = self._unit_cdf(mid) < p
            a = np.where(below, mid, a)
            b = np.where(below, b, mid)
        out = self.lo + (self.hi - self.lo) * 0.5 * (a + b)
        return float(out[0]) if size is None else out.reshape(np.shape(p))

    def to_dict(self):
        return {"kind": self.kind, "lo": self.lo, "hi": self.hi,
                "coefficients": list(self.coefficients)}


def eval_density(d: Density1D, x):
    """Lebesgue density at ``x``; raises :class:`DiracDensityError` for a Dirac."""
    return d.pdf(x)


def eval_cdf(d: Density1D, x):
    return d.cdf(x)


def eval_survival(d: Density1D, x):
    return d.sf(x)


# ---------------------------------------------------------------------------
# Conditional schedules
# ---------------------------------------------------------------------------


class ConditionalSchedule:
    """Law of a time (hours) conditional on a location ``u``."""

    def pdf(self, t, u):
        raise NotImplementedError

    def cdf(self, t, u):
        raise NotImplementedError

    def sample(self, u, rng: np.random.Generator):
        raise NotImplementedError

    def at(self, u: float) -> Density1D:
        raise NotImplementedError

    @property
    def is_dirac(self) -> bool:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class FixedSchedule(ConditionalSchedule):
    """Schedule that does not depend on location."""

    density: Density1D

    def pdf(self, t, u=None):
        return self.density.pdf(t)

    def cdf(self, t, u=None):
        return self.density.cdf(t)

    def sample(self, u, rng):
        return self.density.sample(rng, np.shape(u) if np.ndim(u) else None)

    def at(self, u):
        return self.density

    @property
    def is_dirac(self):
        return self.density.is_dirac

    def reflected(self) -> "FixedSchedule":
        return FixedSchedule(_reflect(self.density))

    def to_dict(self):
        return self.density.to_dict()


@dataclass(frozen=True)
class LinearShiftSchedule(ConditionalSchedule):
    """``base`` translated by ``slope * (u - reference)`` hours at location ``u``."""

    base: Density1D
    slope: float
    reference: float = 0.0

    def _shift(self, u):
        return self.slope * (np.asarray(u, dtype=float) - self.reference)

    def pdf(self, t, u):
        return self.base.pdf(np.asarray(t, dtype=float) - self._shift(u))

    def cdf(self, t, u):
        return self.base.cdf(np.asarray(t, dtype=float) - self._shift(u))

    def sample(self, u, rng):
        size = np.shape(u) if np.ndim(u) else None
        return self.base.sample(rng, size) + self._shift(u)

    def at(self, u):
        shift = float(self._shift(u))
        if isinstance(self.base, TruncatedGaussianMixture):
            return self.base.shifted(shift)
        if isinstance(self.base, Uniform):
            return Uniform(self.base.lo + shift, self.base.hi + shift)
        if isinstance(self.base, Dirac):
            return Dirac(self.base.atom + shift)
        raise NotImplementedError(f"cannot shift a {self.base.kind} law")

    @property
    def is_dirac(self):
        return self.base.is_dirac

    def reflected(self) -> "LinearShiftSchedule":
        return LinearShiftSchedule(_reflect(self.base), -self.slope, self.reference)

    def to_dict(self):
        return {"kind": "linear_shift", "base": self.base.to_dict(), "slope": self.slope,
                "reference": self.reference}


def _reflect(d: Density1D) -> Density1D:
    if isinstance(d, TruncatedGaussianMixture):
        return d.reflected()
    if isinstance(d, Uniform):
        return Uniform(-d.hi, -d.lo)
    if isinstance(d, Dirac):
        return Dirac(-d.atom)
    if isinstance(d, PiecewiseLinear):
        return PiecewiseLinear(tuple(-k for k in reversed(d.knots)), tuple(reversed(d.values)))
    raise NotImplementedError(f"cannot reflect a {d.kind} law")


def sample(d: Density1D | ConditionalSchedule, rng: np.random.Generator, u=None, size=None):
    """Draw from a law; schedules are sampled conditionally on location ``u``."""
    if isinstance(d, ConditionalSchedule):
        return d.sample(u, rng)
    return d.sample(rng, size)


# ---------------------------------------------------------------------------
# Structured-text declarations
# ---------------------------------------------------------------------------


def density_from_dict(d: dict) -> Density1D:
    if not isinstance(d, dict) or "kind" not in d:
        raise ConfigError(f"distribution declaration needs a 'kind': {d!r}")
    kind = d["kind"]
    try:
        if kind == "uniform":
            return Uniform(float(d["lo"]), float(d["hi"]))
        if kind == "truncated_gaussian_mixture":
            support = d.get("support", (-math.inf, math.inf))
            return TruncatedGaussianMixture(tuple(d["weights"]), tuple(d["means"]),
                                            tuple(d["sds"]), tuple(map(float, support)))
        if kind == "piecewise_linear":
            if d.get("normalize", False):
                return PiecewiseLinear.normalized(d["knots"], d["values"])
            return PiecewiseLinear(tuple(d["knots"]), tuple(d["values"]))
        if kind == "dirac":
            return Dirac(float(d["atom"]))
        if kind == "cosine_series":
            return CosineSeries(float(d.get("lo", 0.0)), float(d.get("hi", 1.0)),
                                tuple(d["coefficients"]))
        if kind == "cos4":
            return CosineSeries.cos4(float(d.get("lo", 0.0)), float(d.get("hi", 1.0)))
        if kind == "sin4":
            return CosineSeries.sin4(float(d.get("lo", 0.0)), float(d.get("hi", 1.0)))
    except KeyError as exc:
        raise ConfigError(f"{kind} declaration is missing field {exc}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad {kind} declaration: {exc}") from None
    raise ConfigError(f"unknown distribution kind {kind!r}")


def schedule_from_dict(d: dict) -> ConditionalSchedule:
    if isinstance(d, dict) and d.get("kind") == "linear_shift":
        try:
            return LinearShiftSchedule(density_from_dict(d["base"]), float(d["slope"]),
                                       float(d.get("reference", 0.0)))
        except KeyError as exc:
            raise ConfigError(f"linear_shift schedule is missing field {exc}") from None
    return FixedSchedule(density_from_dict(d))
