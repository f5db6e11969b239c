"""Poisson observation model for aggregated counts.

Counts at counter ``j`` and step ``i`` are Poisson with mean
``<nu, a(i, x_j)>``.  Log-likelihoods drop the ``nu``-independent terms
(``log n!`` and the counter density at ``x_j``), so values are only
comparable within one dataset.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .attendance import AttendanceTable, JourneyTypeSpec, TimeGrid, attendance_profile
from .distributions import DEFAULT_QUADRATURE, Density1D, QuadratureSpec
from .errors import DomainError, SingularAttendance, ZeroRateWithPositiveCount

RATE_FLOOR = 1e-300


def _counts_of(dataset) -> np.ndarray:
    counts = getattr(dataset, "counts", dataset)
    return np.asarray(counts, dtype=float)


def _table_of(model) -> AttendanceTable:
    return model.table if isinstance(model, PoissonModel) else model


def _rates(table: AttendanceTable, nu, counts: np.ndarray) -> np.ndarray:
    nu = np.asarray(nu, dtype=float)
    if nu.shape != (table.K,):
        raise ValueError(f"nu has shape {nu.shape}, expected ({table.K},)")
    if counts.shape != (table.I, table.J):
        raise ValueError(f"counts have shape {counts.shape}, table expects {(table.I, table.J)}")
    return table.rates(nu)


@dataclass
class PoissonModel:
    """Attendance at the counters plus what is needed to integrate over ``x``.

    ``specs`` and ``grid`` provide attendance at arbitrary locations for the
    Fisher integral; they may be omitted when only likelihoods are needed.
    """

    table: AttendanceTable
    counter_density: Density1D
    specs: Sequence[JourneyTypeSpec] | None = None
    quad: QuadratureSpec = DEFAULT_QUADRATURE
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def K(self) -> int:
        return self.table.K

    def attendance_at(self, xs) -> np.ndarray:
        """Attendance of every journey at ``xs``, shape (K, I, len(xs))."""
        if self.specs is None:
            raise ValueError("model was built without journey specs")
        xs = np.asarray(xs, dtype=float)
        key = xs.tobytes()
        if key not in self._cache:
            self._cache[key] = np.stack(
                [attendance_profile(s, self.table.grid, xs, self.quad) for s in self.specs]
            ) if self.specs else np.zeros((0, self.table.I, xs.size))
        return self._cache[key]

    def log_likelihood(self, nu, dataset) -> float:
        return log_likelihood(self, nu, dataset)

    def score(self, nu, dataset) -> np.ndarray:
        return score(self, nu, dataset)

    def fisher_information(self, N, quad: QuadratureSpec | None = None) -> "FisherMatrix":
        return fisher_information(self, N, quad)


def counter_log_likelihood(model, nu, dataset, strict: bool = False) -> np.ndarray:
    """Per-counter contributions, shape (J,)."""
    table = _table_of(model)
    n = _counts_of(dataset)
    rate = _rates(table, nu, n)
    bad = (rate <= 0) & (n > 0)
    if np.any(bad):
        if strict:
            raise ZeroRateWithPositiveCount("zero rate at a cell with a positive count")
    safe = np.maximum(rate, RATE_FLOOR)
    terms = -rate + np.where(n > 0, n * np.log(safe), 0.0)
    out = terms.sum(axis=0)
    out[bad.any(axis=0)] = -np.inf
    return out


def log_likelihood(model, nu, dataset, strict: bool = False) -> float:
    """Sum over counters and steps of ``-rate + n log rate``, up to a constant.

    Returns ``-inf`` when a cell has a positive count but zero rate, or raises
    :class:`ZeroRateWithPositiveCount` with ``strict=True``.
    """
    return float(np.sum(counter_log_likelihood(model, nu, dataset, strict)))


def score(model, nu, dataset) -> np.ndarray:
    """Gradient of :func:`log_likelihood` in ``nu``."""
    table = _table_of(model)
    n = _counts_of(dataset)
    rate = _rates(table, nu, n)
    if np.any((rate <= 0) & (n > 0)):
        raise ZeroRateWithPositiveCount("score is infinite at a zero-rate cell with positive count")
    ratio = np.where(n > 0, n / np.maximum(rate, RATE_FLOOR), 0.0) - 1.0
    return np.einsum("kij,ij->k", table.values, ratio)


def observed_information(model, nu, dataset) -> np.ndarray:
    """Negative Hessian of the log-likelihood."""
    table = _table_of(model)
    n = _counts_of(dataset)
    rate = _rates(table, nu, n)
    if np.any((rate <= 0) & (n > 0)):
        raise ZeroRateWithPositiveCount("Hessian is infinite at a zero-rate cell with positive count")
    w = np.where(n > 0, n / np.maximum(rate, RATE_FLOOR) ** 2, 0.0)
    return np.einsum("kij,lij,ij->kl", table.values, table.values, w)


def counter_scores(values: np.ndarray, N, counts: np.ndarray) -> np.ndarray:
    """Score of each counter at ``N``; ``values`` is (K, I, J), result (J, K)."""
    rate = np.einsum("k,kij->ij", np.asarray(N, dtype=float), values)
    if np.any((rate <= 0) & (counts > 0)):
        raise ZeroRateWithPositiveCount("zero rate at a cell with a positive count")
    ratio = np.where(counts > 0, counts / np.maximum(rate, RATE_FLOOR), 0.0) - 1.0
    return np.einsum("kij,ij->jk", values, ratio)


# ---------------------------------------------------------------------------
# Fisher information
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FisherMatrix:
    matrix: np.ndarray
    evaluated_at: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "matrix", np.asarray(self.matrix, dtype=float))
        object.__setattr__(self, "evaluated_at", np.asarray(self.evaluated_at, dtype=float))

    @property
    def K(self) -> int:
        return self.matrix.shape[0]

    def eigvalsh(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)

    def is_positive_definite(self) -> bool:
        return self.K == 0 or bool(self.eigvalsh()[0] > 0)

    def to_dict(self) -> dict:
        return {"matrix": self.matrix.tolist(), "evaluated_at": self.evaluated_at.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "FisherMatrix":
        return cls(np.array(d["matrix"], dtype=float), np.array(d["evaluated_at"], dtype=float))


def fisher_from_values(values: np.ndarray, weights: np.ndarray, N,
                       floor: float = RATE_FLOOR) -> np.ndarray:
    """``sum_i sum_q w_q a_k a_l / <N, a>`` for attendance ``values`` (K, I, Q)."""
    N = np.asarray(N, dtype=float)
    rate = np.einsum("k,kiq->iq", N, values)
    numer_pos = np.any(values > 0, axis=0)
    if np.any((rate < floor) & numer_pos):
        raise SingularAttendance("<N, a(i, x)> vanishes where some attendance is positive")
    inv = np.where(rate >= floor, 1.0 / np.maximum(rate, floor), 0.0) * weights[None, :]
    m = np.einsum("kiq,liq,iq->kl", values, values, inv)
    return 0.5 * (m + m.T)


def _counter_rule(density: Density1D, quad: QuadratureSpec):
    if density.is_dirac:
        return np.array([density.atom]), np.array([1.0])
    lo, hi = density.support
    xs, w = quad.nodes(lo, hi)
    return xs, w * density.pdf(xs)


def fisher_information(model: PoissonModel, N, quad: QuadratureSpec | None = None,
                       density: Density1D | None = None) -> FisherMatrix:
    """Expected information of one counter drawn from the counter density.

    ``density`` overrides the model's counter density, which lets several
    placement strategies share the cached attendance evaluations.
    """
    N = np.asarray(N, dtype=float)
    if N.shape != (model.K,) or np.any(N < 0) or not np.any(N > 0):
        raise DomainError("N must be nonnegative, nonzero, with one entry per journey")
    xs, w = _counter_rule(density or model.counter_density, quad or model.quad)
    vals = model.attendance_at(xs)
    return FisherMatrix(fisher_from_values(vals, w, N), N.copy())


# ---------------------------------------------------------------------------
# Chi-square quantile
# ---------------------------------------------------------------------------


def _gamma_p(a: float, x: float) -> float:
    """Regularized lower incomplete gamma P(a, x)."""
    if x <= 0:
        return 0.0
    log_pref = a * math.log(x) - x - math.lgamma(a)
    if x < a + 1.0:
        term = 1.0 / a
        total = term
        ap = a
        for _ in range(10000):
            ap += 1.0
            term *= x / ap
            total += term
            if abs(term) < abs(total) * 1e-17:
                break
        return min(1.0, total * math.exp(log_pref))
    # continued fraction for Q(a, x), modified Lentz
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for n in range(1, 10000):
        an = -n * (n - a)
        b += 2.0
        d = an * d + b
        d = tiny if abs(d) < tiny else d
        c = b + an / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-17:
            break
    return max(0.0, 1.0 - math.exp(log_pref) * h)


def chi2_cdf(x: float, dof: int) -> float:
    return _gamma_p(dof / 2.0, x / 2.0)


def chi2_quantile(dof: int, level: float) -> float:
    """Quantile of the chi-square law with ``dof`` degrees of freedom."""
    if int(dof) != dof or dof < 1:
        raise DomainError(f"dof must be a positive integer, got {dof}")
    if not 0.0 < level < 1.0:
        raise DomainError(f"level must lie in (0, 1), got {level}")
    a = dof / 2.0
    lo, hi = 0.0, max(1.0, float(dof))
    while _gamma_p(a, hi) < level:
        lo, hi = hi, 2.0 * hi
    for _ in range(2000):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if _gamma_p(a, mid) < level:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * hi:
            break
    return 2.0 * 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# Confidence ellipsoids
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConfidenceEllipsoid:
    """Region ``(z - center)^T shape (z - center) < 1``."""

    center: np.ndarray
    shape: np.ndarray
    level: float
    J: int

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        object.__setattr__(self, "shape", np.asarray(self.shape, dtype=float))

    @property
    def K(self) -> int:
        return self.center.size

    def quadratic_form(self, z) -> np.ndarray:
        d = np.asarray(z, dtype=float) - self.center
        return np.einsum("...k,kl,...l->...", d, self.shape, d)

    def contains(self, z) -> bool | np.ndarray:
        return self.quadratic_form(z) < 1.0

    def semi_axes(self) -> tuple[np.ndarray, np.ndarray]:
        """Semi-axis lengths (ascending eigenvalue order) and unit directions as columns."""
        lam, vec = np.linalg.eigh(self.shape)
        return 1.0 / np.sqrt(lam), vec

    def log_volume_factor(self) -> float:
        """``-0.5 log det(shape)``; volume is this times the unit-ball volume."""
        sign, logdet = np.linalg.slogdet(self.shape)
        if sign <= 0:
            raise DomainError("shape matrix is not positive definite")
        return -0.5 * logdet

    def to_dict(self) -> dict:
        return {"center": self.center.tolist(), "shape": self.shape.tolist(),
                "level": self.level, "J": self.J}

    @classmethod
    def from_dict(cls, d: dict) -> "ConfidenceEllipsoid":
        return cls(np.array(d["center"], dtype=float), np.array(d["shape"], dtype=float),
                   float(d["level"]), int(d["J"]))


def confidence_ellipsoid(fisher: FisherMatrix, center, J: int, level: float = 0.95):
    if J < 1:
        raise DomainError("J must be at least 1")
    q = chi2_quantile(fisher.K, level)
    return ConfidenceEllipsoid(np.asarray(center, dtype=float), J * fisher.matrix / q, level, int(J))


@dataclass(frozen=True)
class EllipseSlice:
    dims: tuple[int, int]
    center: np.ndarray
    shape: np.ndarray

    @property
    def area(self) -> float:
        return math.pi / math.sqrt(float(np.linalg.det(self.shape)))

    def boundary(self, n: int = 360) -> np.ndarray:
        """Rows ``(angle, z1, z2)`` on the ellipse, angles in degrees."""
        lam, vec = np.linalg.eigh(self.shape)
        ang = np.arange(n) * (360.0 / n)
        th = np.deg2rad(ang)
        unit = np.stack([np.cos(th), np.sin(th)])
        pts = self.center[:, None] + vec @ (unit / np.sqrt(lam)[:, None])
        return np.column_stack([ang, pts.T])

    def to_csv(self, path=None, n: int = 360) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["angle", "z1", "z2"])
        for a, z1, z2 in self.boundary(n):
            w.writerow([format(a, ".17g"), format(z1, ".17g"), format(z2, ".17g")])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


def ellipsoid_slice(e: ConfidenceEllipsoid, dims: tuple[int, int]) -> EllipseSlice:
    """Cross-section through the center with all other coordinates held at the center."""
    k, l = dims
    if k == l:
        raise ValueError("slice needs two distinct dimensions")
    idx = np.array([k, l])
    return EllipseSlice((int(k), int(l)), e.center[idx].copy(), e.shape[np.ix_(idx, idx)].copy())


def all_slices(e: ConfidenceEllipsoid) -> list[EllipseSlice]:
    return [ellipsoid_slice(e, (k, l)) for k in range(e.K) for l in range(k + 1, e.K)]


def dumps(obj: dict) -> str:
    """JSON with shortest round-trip reals (17 significant digits at most)."""
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"
