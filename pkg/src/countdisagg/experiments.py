"""Experiment drivers behind the command-line interface.

Randomness is organised as a tree below the master seed: every draw comes
from ``SeedSequence(master, spawn_key=(stream, replicate, day))`` so adding
replicates or days never changes the earlier ones.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path

import numpy as np

from .attendance import AttendanceTable, attendance_table, flux_left, flux_right, flux_unoriented
from .attendance import pde_residuals
from .config import ExperimentConfig
from .distributions import Density1D
from .em import EmState, run_em
from .errors import ConfigError, NumericalError
from .microsim import (CountDataset, empirical_attendance, read_counts, simulate_day,
                       simulate_poisson_day, write_counts)
from .statmodel import (ConfidenceEllipsoid, FisherMatrix, PoissonModel, all_slices,
                        confidence_ellipsoid, dumps, fisher_information, score)

log = logging.getLogger(__name__)

DENSE_POINTS = 512


class Stream(IntEnum):
    COUNTERS = 0
    TRIPS = 1
    NOISE = 2
    EM_INIT = 3
    DAILY_N = 4
    LEARNING = 5


def seed_sequence(master: int, stream: Stream, replicate: int = 0, day: int = 0):
    return np.random.SeedSequence(int(master), spawn_key=(int(stream), int(replicate), int(day)))


def stream_rng(master: int, stream: Stream, replicate: int = 0, day: int = 0):
    return np.random.Generator(np.random.PCG64(seed_sequence(master, stream, replicate, day)))


# ---------------------------------------------------------------------------
# Counters
# ---------------------------------------------------------------------------


def draw_counters(density: Density1D, J: int, rng: np.random.Generator) -> np.ndarray:
    """``J`` independent draws in draw order (prefixes give nested layouts)."""
    if J < 1:
        raise ValueError("need at least one counter")
    return np.atleast_1d(np.asarray(density.sample(rng, J), dtype=float))


def place_counters(density: Density1D, J: int, rng: np.random.Generator) -> np.ndarray:
    """``J`` independent counter locations drawn from ``density``, sorted."""
    return np.sort(draw_counters(density, J, rng))


def counters_for(cfg: ExperimentConfig, seed: int, replicate: int, J: int | None = None):
    J = cfg.counters.count if J is None else J
    r = replicate if cfg.counters.resample == "per_replicate" else 0
    return draw_counters(cfg.counters.density, J, stream_rng(seed, Stream.COUNTERS, r))


# ---------------------------------------------------------------------------
# Tables and data
# ---------------------------------------------------------------------------


def theoretical_table(cfg: ExperimentConfig, locations) -> AttendanceTable:
    return attendance_table(cfg.journeys, cfg.grid, locations, cfg.quadrature)


def learn_attendance(cfg: ExperimentConfig, locations, seed: int, key: int = 0,
                     days: int | None = None) -> AttendanceTable:
    """Empirical attendance averaged over simulated learning days."""
    days = cfg.learning_days if days is None else days
    data, n = [], []
    for d in range(days):
        n_d = cfg.daily_n.draw(cfg.true_N, stream_rng(seed, Stream.DAILY_N, key, d))
        data.append(simulate_day(cfg.journeys, n_d, locations, cfg.grid,
                                 seed_sequence(seed, Stream.LEARNING, key, d), day_id=d))
        n.append(n_d)
    return empirical_attendance(data, n)


def estimation_table(cfg: ExperimentConfig, locations, seed: int, key: int = 0):
    if cfg.attendance_mode == "empirical":
        return learn_attendance(cfg, locations, seed, key)
    return theoretical_table(cfg, locations)


def generate_counts(cfg: ExperimentConfig, locations, seed: int, replicate: int,
                    table: AttendanceTable | None = None) -> CountDataset:
    """One day of counts from the configured generator."""
    if cfg.generator == "trajectory":
        n = np.rint(cfg.true_N).astype(np.int64)
        return simulate_day(cfg.journeys, n, locations, cfg.grid,
                            seed_sequence(seed, Stream.TRIPS, replicate), day_id=replicate)
    table = theoretical_table(cfg, locations) if table is None else table
    return simulate_poisson_day(table, cfg.true_N, stream_rng(seed, Stream.NOISE, replicate),
                                day_id=replicate)


class FisherCache:
    """Attendance at Fisher quadrature nodes, shared across replicates and strategies."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self._cache: dict = {}

    def model(self, table: AttendanceTable, density: Density1D | None = None) -> PoissonModel:
        return PoissonModel(table, density or self.cfg.counters.density, self.cfg.journeys,
                            self.cfg.quadrature, self._cache)


# ---------------------------------------------------------------------------
# Output bookkeeping
# ---------------------------------------------------------------------------


def config_digest(cfg: ExperimentConfig) -> str:
    blob = json.dumps(cfg.raw, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


class RunOutput:
    """Writes files under ``root`` and records them in ``manifest.json``."""

    def __init__(self, root, command: str, cfg: ExperimentConfig, seed: int):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.command = command
        self.cfg = cfg
        self.seed = seed
        self.files: dict[str, str] = {}

    def write(self, rel: str, text: str) -> Path:
        path = self.root / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        data = text.encode()
        path.write_bytes(data)
        self.files[rel] = hashlib.sha256(data).hexdigest()
        return path

    def finish(self, summary: dict | None = None) -> Path:
        manifest = {
            "command": self.command,
            "config": self.cfg.name,
            "config_sha256": config_digest(self.cfg),
            "seed": self.seed,
            "files": [{"path": p, "sha256": self.files[p]} for p in sorted(self.files)],
        }
        if summary is not None:
            manifest["summary"] = summary
        path = self.root / "manifest.json"
        path.write_text(dumps(manifest))
        return path


def _csv(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([format(v, ".17g") if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def _seed(cfg: ExperimentConfig, seed: int | None) -> int:
    return cfg.seed if seed is None else int(seed)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_attendance(cfg: ExperimentConfig, seed: int | None = None, out=None):
    seed = _seed(cfg, seed)
    locs = np.sort(counters_for(cfg, seed, 0))
    table = theoretical_table(cfg, locs)
    dense = theoretical_table(cfg, np.linspace(cfg.domain[0], cfg.domain[1], DENSE_POINTS))
    if out is not None:
        o = RunOutput(out, "attendance", cfg, seed)
        o.write("counters.csv", _csv(enumerate(locs.tolist()), ["counter_id", "location"]))
        o.write("attendance_counters.csv", table.to_csv())
        o.write("attendance_dense.csv", dense.to_csv())
        o.finish({"K": cfg.K, "I": cfg.grid.n_steps, "J": int(locs.size)})
    return table, dense


def cmd_simulate(cfg: ExperimentConfig, seed: int | None = None, out=None):
    seed = _seed(cfg, seed)
    days = []
    o = RunOutput(out, "simulate", cfg, seed) if out is not None else None
    for r in range(cfg.replicates):
        locs = np.sort(counters_for(cfg, seed, r))
        ds = generate_counts(cfg, locs, seed, r)
        days.append(ds)
        if o is not None:
            o.write(f"counts/day_{r:04d}.csv", write_counts(ds))
            o.write(f"hidden/day_{r:04d}.csv", write_counts(ds, hidden=True))
    if o is not None:
        o.finish({"days": cfg.replicates, "generator": cfg.generator})
    return days


@dataclass
class EstimateReport:
    day_id: int
    state: EmState
    score_inf: float
    total_count: float
    ellipsoid: ConfidenceEllipsoid | None
    fisher: FisherMatrix | None = None

    def to_dict(self, labels) -> dict:
        e = self.ellipsoid
        return {
            "day": self.day_id,
            "journeys": list(labels),
            "nu": self.state.nu.tolist(),
            "iterations": self.state.iterations,
            "converged": self.state.converged,
            "log_likelihood": self.state.ll_trace[-1],
            "score_inf": self.score_inf,
            "score_relative": self.score_inf / self.total_count if self.total_count else 0.0,
            "fisher": None if self.fisher is None else self.fisher.matrix.tolist(),
            "ellipsoid": None if e is None else e.to_dict(),
            "slice_areas": None if e is None else
            {f"{labels[s.dims[0]]}-{labels[s.dims[1]]}": s.area for s in all_slices(e)},
        }


def estimate_day(cfg: ExperimentConfig, table: AttendanceTable, ds: CountDataset,
                 cache: FisherCache | None = None, level: float | None = None) -> EstimateReport:
    state = run_em(table, ds, cfg.em)
    total = float(ds.counts.sum())
    s_inf = float(np.max(np.abs(score(table, state.nu, ds)))) if total > 0 and table.K else 0.0
    ellipsoid = fisher = None
    if total > 0 and table.K:
        cache = cache or FisherCache(cfg)
        fisher = fisher_information(cache.model(table), state.nu)
        ellipsoid = confidence_ellipsoid(fisher, state.nu, table.J, level or cfg.level)
    return EstimateReport(ds.day_id, state, s_inf, total, ellipsoid, fisher)


def _check_alignment(cfg: ExperimentConfig, table: AttendanceTable, ds: CountDataset, path):
    if table.journey_labels != cfg.labels:
        raise ConfigError(f"{path}: table journeys {table.journey_labels} differ from config")
    if not np.array_equal(table.locations, ds.locations):
        raise ConfigError(f"{path}: table locations differ from counter locations")
    if table.grid.n_steps != ds.grid.n_steps:
        raise ConfigError(f"{path}: table and counts use different time grids")


def cmd_estimate(cfg: ExperimentConfig, counts_file, table_file=None, seed: int | None = None,
                 out=None) -> list[EstimateReport]:
    seed = _seed(cfg, seed)
    days = read_counts(counts_file, cfg.grid)
    given = AttendanceTable.from_csv(table_file, cfg.grid) if table_file is not None else None
    cache = FisherCache(cfg)
    o = RunOutput(out, "estimate", cfg, seed) if out is not None else None
    reports = []
    for ds in days:
        if given is not None:
            _check_alignment(cfg, given, ds, table_file)
            table = given
        else:
            table = estimation_table(cfg, ds.locations, seed, ds.day_id)
        rep = estimate_day(cfg, table, ds, cache)
        reports.append(rep)
        if o is not None:
            tag = f"day_{ds.day_id:04d}"
            o.write(f"estimate_{tag}.json", dumps(rep.to_dict(cfg.labels)))
            o.write(f"trace_{tag}.csv", rep.state.trace_csv())
            if rep.ellipsoid is not None:
                for sl in all_slices(rep.ellipsoid):
                    a, b = (cfg.labels[d] for d in sl.dims)
                    o.write(f"slices/{tag}_{a}-{b}.csv", sl.to_csv())
    if o is not None:
        o.finish({"days": len(days)})
    return reports


@dataclass
class ConsistencyResult:
    ladder: tuple[int, ...]
    labels: tuple[str, ...]
    true_N: np.ndarray
    estimates: np.ndarray  # (replicates, rungs, K)

    @property
    def relative_errors(self) -> np.ndarray:
        return np.abs(self.estimates - self.true_N) / self.true_N

    def median_relative_error(self) -> np.ndarray:
        return np.median(self.relative_errors, axis=0)

    def rmse(self) -> np.ndarray:
        return np.sqrt(np.mean((self.estimates - self.true_N) ** 2, axis=0))

    def rmse_fit(self) -> list[tuple[float, float, float]]:
        """Per journey: (intercept, slope, R^2) of RMSE against 1/sqrt(J)."""
        xs = 1.0 / np.sqrt(np.asarray(self.ladder, dtype=float))
        out = []
        for k in range(len(self.labels)):
            y = self.rmse()[:, k]
            slope, icpt = np.polyfit(xs, y, 1)
            resid = y - (slope * xs + icpt)
            ss = float(np.sum((y - y.mean()) ** 2))
            out.append((float(icpt), float(slope), 1.0 - float(np.sum(resid ** 2)) / ss if ss else 1.0))
        return out

    def quantile_rows(self):
        qs = (0.05, 0.25, 0.5, 0.75, 0.95)
        for r, J in enumerate(self.ladder):
            for k, lab in enumerate(self.labels):
                yield [J, lab] + [float(v) for v in np.quantile(self.estimates[:, r, k], qs)]


def run_consistency(cfg: ExperimentConfig, seed: int | None = None,
                    replicates: int | None = None, ladder=None) -> ConsistencyResult:
    """Estimates on nested counter layouts: rung ``J`` uses the first ``J`` counters."""
    seed = _seed(cfg, seed)
    ladder = tuple(ladder or cfg.ladder)
    R = cfg.ladder_replicates if replicates is None else replicates
    est = np.empty((R, len(ladder), cfg.K))
    for r in range(R):
        locs = counters_for(cfg, seed, r, max(ladder))
        table = estimation_table(cfg, locs, seed, r)
        truth = table if cfg.attendance_mode == "theoretical" else None
        ds = generate_counts(cfg, locs, seed, r, truth)
        for q, J in enumerate(ladder):
            cols = np.arange(J)
            est[r, q] = run_em(table.select(cols), ds.select(cols), cfg.em).nu
        log.debug("consistency replicate %d done", r)
    return ConsistencyResult(ladder, cfg.labels, cfg.true_N.copy(), est)


def cmd_consistency(cfg: ExperimentConfig, seed: int | None = None, out=None,
                    replicates: int | None = None) -> ConsistencyResult:
    seed = _seed(cfg, seed)
    res = run_consistency(cfg, seed, replicates)
    if out is not None:
        o = RunOutput(out, "consistency", cfg, seed)
        o.write("consistency.csv", _csv(res.quantile_rows(),
                                        ["J", "journey", "q05", "q25", "q50", "q75", "q95"]))
        med, rmse = res.median_relative_error(), res.rmse()
        o.write("consistency_errors.csv", _csv(
            ([J, lab, float(med[q, k]), float(rmse[q, k])]
             for q, J in enumerate(res.ladder) for k, lab in enumerate(res.labels)),
            ["J", "journey", "median_rel_error", "rmse"]))
        o.write("consistency_estimates.csv", _csv(
            ([r, J] + [float(v) for v in res.estimates[r, q]]
             for r in range(res.estimates.shape[0]) for q, J in enumerate(res.ladder)),
            ["replicate", "J"] + list(res.labels)))
        fits = res.rmse_fit()
        o.finish({"rmse_fit_r2": {lab: f[2] for lab, f in zip(res.labels, fits)}})
    return res


@dataclass
class CoverageResult:
    quadratic_forms: np.ndarray  # NaN where estimation failed
    level: float

    @property
    def covered(self) -> np.ndarray:
        return np.nan_to_num(self.quadratic_forms, nan=np.inf) < 1.0

    @property
    def rate(self) -> float:
        return float(np.mean(self.covered))


def run_coverage(cfg: ExperimentConfig, seed: int | None = None, replicates: int | None = None,
                 J: int | None = None, level: float | None = None) -> CoverageResult:
    """How often the plug-in confidence ellipsoid contains the true sizes."""
    seed = _seed(cfg, seed)
    R = cfg.coverage_replicates if replicates is None else replicates
    level = cfg.level if level is None else level
    cache = FisherCache(cfg)
    q = np.full(R, np.nan)
    for r in range(R):
        locs = np.sort(counters_for(cfg, seed, r, J))
        table = estimation_table(cfg, locs, seed, r)
        truth = table if cfg.attendance_mode == "theoretical" else None
        ds = generate_counts(cfg, locs, seed, r, truth)
        try:
            rep = estimate_day(cfg, table, ds, cache, level)
        except NumericalError as exc:
            log.warning("replicate %d: %s", r, exc)
            continue
        if rep.ellipsoid is not None:
            q[r] = float(rep.ellipsoid.quadratic_form(cfg.true_N))
    return CoverageResult(q, level)


def cmd_coverage(cfg: ExperimentConfig, seed: int | None = None, out=None,
                 replicates: int | None = None) -> CoverageResult:
    seed = _seed(cfg, seed)
    res = run_coverage(cfg, seed, replicates)
    if out is not None:
        o = RunOutput(out, "coverage", cfg, seed)
        o.write("coverage.csv", _csv(
            ([r, float(v), int(c)] for r, (v, c) in enumerate(zip(res.quadratic_forms, res.covered))),
            ["replicate", "quadratic_form", "covered"]))
        o.finish({"coverage": res.rate, "level": res.level})
    return res


@dataclass
class StrategyReport:
    strategy_label: str
    ellipsoid: ConfidenceEllipsoid
    slice_areas: np.ndarray
    determinant: float

    def to_dict(self, labels) -> dict:
        pairs = [f"{labels[k]}-{labels[l]}" for k in range(len(labels))
                 for l in range(k + 1, len(labels))]
        return {"strategy": self.strategy_label, "determinant": self.determinant,
                "slice_areas": dict(zip(pairs, self.slice_areas.tolist())),
                "ellipsoid": self.ellipsoid.to_dict()}


def cmd_strategies(cfg: ExperimentConfig, seed: int | None = None, out=None,
                   strategies: dict | None = None, J: int | None = None):
    """Fisher-based ellipsoids at the true sizes under each placement density.

    Returns the reports and the strategy labels ranked from the smallest
    ellipsoid (largest shape determinant) to the largest.
    """
    seed = _seed(cfg, seed)
    strategies = cfg.strategies if strategies is None else strategies
    J = cfg.strategy_J if J is None else J
    cache = FisherCache(cfg)
    empty = AttendanceTable(cfg.labels, cfg.grid, np.zeros(0), np.zeros((cfg.K, cfg.grid.n_steps, 0)))
    reports = []
    for name, dens in strategies.items():
        fisher = fisher_information(cache.model(empty, dens), cfg.true_N)
        e = confidence_ellipsoid(fisher, cfg.true_N, J, cfg.level)
        areas = np.array([s.area for s in all_slices(e)])
        reports.append(StrategyReport(name, e, areas, float(np.linalg.det(e.shape))))
    ranking = [r.strategy_label for r in sorted(reports, key=lambda r: -r.determinant)]
    if out is not None:
        o = RunOutput(out, "strategies", cfg, seed)
        o.write("strategies.json", dumps({"J": J, "level": cfg.level, "ranking": ranking,
                                          "reports": [r.to_dict(cfg.labels) for r in reports]}))
        for r in reports:
            for sl in all_slices(r.ellipsoid):
                a, b = (cfg.labels[d] for d in sl.dims)
                o.write(f"slices/{r.strategy_label}_{a}-{b}.csv", sl.to_csv())
        o.finish({"ranking": ranking})
    return reports, ranking


def cmd_pde_check(cfg: ExperimentConfig, seed: int | None = None, out=None):
    """Transport-equation residuals for each journey and direction at the configured points."""
    seed = _seed(cfg, seed)
    pts = np.asarray(cfg.pde_points, dtype=float).reshape(-1, 2)
    rows, decomposition = [], 0.0
    t, x = pts[:, 0], pts[:, 1]
    for spec in cfg.journeys:
        if not spec.velocity.is_dirac or pts.size == 0:
            continue
        total = flux_unoriented(spec, t, x, cfg.quadrature)
        parts = flux_right(spec, t, x, cfg.quadrature) + flux_left(spec, t, x, cfg.quadrature)
        decomposition = max(decomposition, float(np.max(np.abs(total - parts))))
        for direction in ("right", "left"):
            res = [np.abs(pde_residuals(spec, direction, t, x, h, cfg.quadrature)) for h in cfg.pde_h]
            for p in range(len(pts)):
                for hi, h in enumerate(cfg.pde_h):
                    ratio = res[hi - 1][p] / res[hi][p] if hi and res[hi][p] > 0 else float("nan")
                    rows.append([spec.label, direction, float(t[p]), float(x[p]), h,
                                 float(res[hi][p]), ratio])
    if out is not None:
        o = RunOutput(out, "pde-check", cfg, seed)
        o.write("pde_check.csv", _csv(rows, ["journey", "direction", "t", "x", "h", "residual",
                                             "ratio"]))
        o.finish({"max_decomposition_error": decomposition})
    return rows, decomposition
