"""EM algorithm for subpopulation sizes from aggregated counts.

Hidden data are the per-journey counts ``n_k(i, x_j)``.  Given ``nu`` they
are multinomial splits of the observed counts, so the E step is a
proportional allocation and the M step is a ratio of sums.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .attendance import AttendanceTable
from .errors import DegenerateAttendance, InsufficientIterations, ZeroRateWithPositiveCount
from .statmodel import log_likelihood


@dataclass(frozen=True)
class UniformSplit:
    """Split every count evenly across journeys, then take one M step."""


@dataclass(frozen=True)
class RandomSplit:
    """Random positive split of every count, then one M step."""

    seed: int = 0


@dataclass(frozen=True)
class Custom:
    nu: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "nu", tuple(float(v) for v in self.nu))


@dataclass(frozen=True)
class EmConfig:
    rel_tol: float = 1e-10
    max_iters: int = 10_000
    init: UniformSplit | RandomSplit | Custom = field(default_factory=UniformSplit)

    def __post_init__(self):
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")

    def to_dict(self) -> dict:
        init = self.init
        if isinstance(init, RandomSplit):
            d = {"kind": "random_split", "seed": init.seed}
        elif isinstance(init, Custom):
            d = {"kind": "custom", "nu": list(init.nu)}
        else:
            d = {"kind": "uniform_split"}
        return {"rel_tol": self.rel_tol, "max_iters": self.max_iters, "init": d}

    @classmethod
    def from_dict(cls, d: dict | None) -> "EmConfig":
        d = dict(d or {})
        init = d.pop("init", None) or {"kind": "uniform_split"}
        kind = init.get("kind", "uniform_split")
        if kind == "uniform_split":
            init_obj = UniformSplit()
        elif kind == "random_split":
            init_obj = RandomSplit(int(init.get("seed", 0)))
        elif kind == "custom":
            init_obj = Custom(tuple(init["nu"]))
        else:
            raise ValueError(f"unknown EM init kind {kind!r}")
        return cls(float(d.get("rel_tol", 1e-10)), int(d.get("max_iters", 10_000)), init_obj)


@dataclass
class EmState:
    nu: np.ndarray
    responsibilities: np.ndarray
    ll_trace: list[float]
    nu_trace: list[np.ndarray]
    iterations: int
    converged: bool

    def trace_csv(self, path=None) -> str:
        K = self.nu.size
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iter", "ll"] + [f"nu_{k + 1}" for k in range(K)])
        for t, (ll, nu) in enumerate(zip(self.ll_trace, self.nu_trace)):
            w.writerow([t, format(ll, ".17g")] + [format(v, ".17g") for v in nu])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


def _counts(dataset) -> np.ndarray:
    return np.asarray(getattr(dataset, "counts", dataset), dtype=float)


def e_step(nu, table: AttendanceTable, dataset) -> np.ndarray:
    """Conditional expectation of the hidden counts, shape (K, I, J)."""
    nu = np.asarray(nu, dtype=float)
    n = _counts(dataset)
    parts = nu[:, None, None] * table.values
    rate = parts.sum(axis=0)
    if np.any((rate <= 0) & (n > 0)):
        raise ZeroRateWithPositiveCount("positive count at a cell with zero expected rate")
    scale = np.where(n > 0, n / np.where(rate > 0, rate, 1.0), 0.0)
    return parts * scale[None]


def m_step(z, table: AttendanceTable) -> np.ndarray:
    """Maximizer of the hidden-data likelihood: ``sum z_k / sum a_k``."""
    denom = table.values.sum(axis=(1, 2))
    if np.any(denom <= 0):
        bad = [table.journey_labels[k] for k in np.flatnonzero(denom <= 0)]
        raise DegenerateAttendance(f"attendance sums to zero for journeys {bad}")
    return np.asarray(z, dtype=float).sum(axis=(1, 2)) / denom


def hidden_log_likelihood(nu, z, table: AttendanceTable) -> float:
    """Complete-data log-likelihood up to constants."""
    nu = np.asarray(nu, dtype=float)
    z = np.asarray(z, dtype=float)
    lam = nu[:, None, None] * table.values
    with np.errstate(divide="ignore"):
        logs = np.where(z > 0, z * np.log(np.where(lam > 0, lam, 1.0)), 0.0)
    if np.any((lam <= 0) & (z > 0)):
        return -np.inf
    return float(np.sum(logs - lam))


def _initial_nu(config: EmConfig, table: AttendanceTable, n: np.ndarray) -> np.ndarray:
    init = config.init
    K = table.K
    if isinstance(init, Custom):
        nu = np.array(init.nu, dtype=float)
        if nu.shape != (K,) or np.any(nu < 0):
            raise ValueError("custom initial nu needs K nonnegative entries")
        return nu
    if isinstance(init, RandomSplit):
        rng = np.random.default_rng(init.seed)
        w = 0.05 + rng.random((K,) + n.shape)
        z = n[None] * w / w.sum(axis=0)
    else:
        z = np.broadcast_to(n[None] / K, (K,) + n.shape)
    return m_step(z, table)


def _changed(old: np.ndarray, new: np.ndarray, rel_tol: float) -> bool:
    return bool(np.max(np.abs(new - old) / np.maximum(old, 1.0)) >= rel_tol)


def run_em(table: AttendanceTable, dataset, config: EmConfig | None = None) -> EmState:
    config = config or EmConfig()
    n = _counts(dataset)
    if n.shape != (table.I, table.J):
        raise ValueError(f"counts have shape {n.shape}, table expects {(table.I, table.J)}")
    if not np.any(n > 0):
        m_step(np.zeros_like(table.values), table)  # still rejects degenerate tables
        nu = np.zeros(table.K)
        return EmState(nu, np.zeros_like(table.values), [log_likelihood(table, nu, n)],
                       [nu.copy()], 1, True)
    nu = _initial_nu(config, table, n)
    ll_trace = [log_likelihood(table, nu, n)]
    nu_trace = [nu.copy()]
    converged = False
    it = 0
    z = None
    while it < config.max_iters:
        z = e_step(nu, table, n)
        new = m_step(z, table)
        it += 1
        ll_trace.append(log_likelihood(table, new, n))
        nu_trace.append(new.copy())
        moved = _changed(nu, new, config.rel_tol)
        nu = new
        if not moved:
            converged = True
            break
    return EmState(nu, e_step(nu, table, n), ll_trace, nu_trace, it, converged)


@dataclass(frozen=True)
class ConvergenceFit:
    rate: float
    r_squared: float
    n_points: int
    slope: float
    intercept: float


def em_convergence_fit(state: EmState, reference=None, noise_factor: float = 100.0):
    """Least-squares line through ``log ||nu_t - reference||``.

    Only iterates whose error exceeds ``noise_factor`` times the error of the
    penultimate iterate are used, so the round-off floor near convergence does
    not bend the fit.
    """
    if state.iterations < 10:
        raise InsufficientIterations(f"need at least 10 iterations, got {state.iterations}")
    ref = state.nu if reference is None else np.asarray(reference, dtype=float)
    err = np.array([np.linalg.norm(nu - ref) for nu in state.nu_trace])
    floor = err[-2] if err.size >= 2 else 0.0
    keep = (err > 0) & (err >= noise_factor * floor)
    t = np.flatnonzero(keep)
    if t.size < 3:
        raise InsufficientIterations("too few iterates above the round-off floor")
    y = np.log(err[t])
    slope, intercept = np.polyfit(t.astype(float), y, 1)
    resid = y - (slope * t + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return ConvergenceFit(float(np.exp(slope)), r2, int(t.size), float(slope), float(intercept))


def em_convergence_rate(state: EmState, reference=None) -> float:
    """Geometric contraction factor of the EM iterates toward ``reference``."""
    return em_convergence_fit(state, reference).rate
