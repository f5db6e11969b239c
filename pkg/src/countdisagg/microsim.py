"""Individual-based trip simulator and passage counting.

Trips move in straight lines at constant speed, so a trip crosses a counter
at most once.  A counter at ``x`` counts a trip when ``x`` lies in the closed
segment between origin and destination; the trip is counted in the bin that
contains its crossing time, and crossings outside the grid are dropped.

Random streams are derived per (journey, block of trips) from a
:class:`numpy.random.SeedSequence`, so results do not depend on how the
blocks are distributed over worker threads.
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .attendance import ARRIVAL, STARTING, AttendanceTable, JourneyTypeSpec, TimeGrid
from .errors import DataFormatError, NegativeRate, ZeroPopulation

BLOCK_SIZE = 1 << 16


@dataclass(frozen=True)
class Trip:
    journey: str
    v: float
    x0: float
    xe: float
    time: float  # starting time or arrival time, per ``variant``
    variant: str = STARTING

    @property
    def eps(self) -> int:
        return 1 if self.xe >= self.x0 else -1

    @property
    def duration(self) -> float:
        return abs(self.xe - self.x0) / self.v

    @property
    def t0(self) -> float:
        return self.time if self.variant == STARTING else self.time - self.duration

    @property
    def te(self) -> float:
        return self.time + self.duration if self.variant == STARTING else self.time

    def position(self, t: float) -> float:
        if self.variant == STARTING:
            return self.x0 + self.eps * (t - self.time) * self.v
        return self.xe - self.eps * (self.time - t) * self.v


@dataclass
class TripBatch:
    """Struct-of-arrays view of many trips of one journey type."""

    journey: str
    variant: str
    v: np.ndarray
    x0: np.ndarray
    xe: np.ndarray
    time: np.ndarray

    def __len__(self):
        return self.v.size

    def trip(self, p: int) -> Trip:
        return Trip(self.journey, float(self.v[p]), float(self.x0[p]), float(self.xe[p]),
                    float(self.time[p]), self.variant)


def draw_trips(spec: JourneyTypeSpec, n: int, rng: np.random.Generator) -> TripBatch:
    v = np.broadcast_to(spec.velocity.sample(rng, n), (n,)).astype(float)
    x0 = np.broadcast_to(spec.origin.sample(rng, n), (n,)).astype(float)
    xe = np.broadcast_to(spec.destination.sample(rng, n), (n,)).astype(float)
    anchor = x0 if spec.schedule_variant == STARTING else xe
    time = np.broadcast_to(spec.schedule.sample(anchor, rng), (n,)).astype(float)
    return TripBatch(spec.label, spec.schedule_variant, v, x0, xe, time)


def draw_trip(spec: JourneyTypeSpec, rng: np.random.Generator) -> Trip:
    return draw_trips(spec, 1, rng).trip(0)


def crossing_time(trip: Trip, x: float) -> float | None:
    """Time at which ``trip`` passes ``x``, or None if it never does."""
    lo, hi = min(trip.x0, trip.xe), max(trip.x0, trip.xe)
    if not lo <= x <= hi:
        return None
    if trip.variant == STARTING:
        return trip.time + abs(x - trip.x0) / trip.v
    return trip.time - abs(trip.xe - x) / trip.v


def crossing_times(batch: TripBatch, xs) -> np.ndarray:
    """Crossing times, shape (n_trips, n_locations); NaN where not crossed."""
    xs = np.asarray(xs, dtype=float)[None, :]
    x0 = batch.x0[:, None]
    xe = batch.xe[:, None]
    v = batch.v[:, None]
    inside = (np.minimum(x0, xe) <= xs) & (xs <= np.maximum(x0, xe))
    if batch.variant == STARTING:
        t = batch.time[:, None] + np.abs(xs - x0) / v
    else:
        t = batch.time[:, None] - np.abs(xe - xs) / v
    return np.where(inside, t, np.nan)


def _count_passages(batch: TripBatch, xs: np.ndarray, grid: TimeGrid) -> np.ndarray:
    counts = np.zeros((grid.n_steps, xs.size), dtype=np.int64)
    if len(batch) == 0 or xs.size == 0:
        return counts
    bins = grid.bin_index(crossing_times(batch, xs))
    cols = np.broadcast_to(np.arange(xs.size)[None, :], bins.shape)
    ok = bins >= 0
    flat = bins[ok] * xs.size + cols[ok]
    counts += np.bincount(flat, minlength=grid.n_steps * xs.size).reshape(counts.shape)
    return counts


def _as_seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(int(seed))


def _child(ss: np.random.SeedSequence, *key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(ss.entropy, spawn_key=tuple(ss.spawn_key) + tuple(key))


@dataclass
class CountDataset:
    """Counts at ``locations`` for one day: ``counts[i, j]`` and optionally
    per-journey ``hidden[k, i, j]``."""

    locations: np.ndarray
    grid: TimeGrid
    counts: np.ndarray
    hidden: np.ndarray | None = None
    journey_labels: tuple[str, ...] = ()
    day_id: int = 0
    seed: int | None = None
    n_trips: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.locations = np.asarray(self.locations, dtype=float)
        self.counts = np.asarray(self.counts)
        if self.counts.shape != (self.grid.n_steps, self.locations.size):
            raise ValueError(f"counts have shape {self.counts.shape}, expected "
                             f"{(self.grid.n_steps, self.locations.size)}")
        if np.any(self.counts < 0):
            raise ValueError("counts must be nonnegative")
        if self.hidden is not None:
            self.hidden = np.asarray(self.hidden)
            if self.hidden.shape[1:] != self.counts.shape:
                raise ValueError("hidden counts do not match the aggregate shape")
            if len(self.journey_labels) != self.hidden.shape[0]:
                raise ValueError("need one journey label per hidden layer")
            if not np.array_equal(self.hidden.sum(axis=0), self.counts):
                raise ValueError("hidden counts do not add up to the aggregate counts")

    @property
    def J(self) -> int:
        return self.locations.size

    def select(self, columns) -> "CountDataset":
        columns = np.asarray(columns)
        hidden = None if self.hidden is None else self.hidden[:, :, columns]
        return CountDataset(self.locations[columns], self.grid, self.counts[:, columns], hidden,
                            self.journey_labels, self.day_id, self.seed, self.n_trips)


def simulate_day(specs: Sequence[JourneyTypeSpec], n_trips, locations, grid: TimeGrid,
                 seed, day_id: int = 0, workers: int = 1) -> CountDataset:
    """Generate ``n_trips[k]`` trips per journey type and count passages.

    ``seed`` is an int or a SeedSequence; trips are drawn in blocks of
    :data:`BLOCK_SIZE`, each block on its own stream keyed by (journey, block).
    """
    n_trips = np.asarray(n_trips, dtype=np.int64)
    if n_trips.shape != (len(specs),) or np.any(n_trips < 0):
        raise ValueError("n_trips needs one nonnegative integer per journey type")
    xs = np.asarray(locations, dtype=float)
    ss = _as_seed_sequence(seed)
    jobs = [(k, b, min(BLOCK_SIZE, int(n_trips[k]) - b * BLOCK_SIZE))
            for k in range(len(specs))
            for b in range(-(-int(n_trips[k]) // BLOCK_SIZE))]

    def run(job):
        k, b, n = job
        rng = np.random.Generator(np.random.PCG64(_child(ss, k, b)))
        return k, _count_passages(draw_trips(specs[k], n, rng), xs, grid)

    hidden = np.zeros((len(specs), grid.n_steps, xs.size), dtype=np.int64)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(job) for job in jobs]
    for k, counts in results:  # integer sums: order-independent
        hidden[k] += counts
    seed_value = int(ss.entropy) if isinstance(ss.entropy, int) else None
    return CountDataset(xs, grid, hidden.sum(axis=0), hidden, tuple(s.label for s in specs),
                        day_id, seed_value, n_trips.copy())


def simulate_poisson_day(table: AttendanceTable, nu, rng: np.random.Generator,
                         day_id: int = 0) -> CountDataset:
    """Independent Poisson counts with means ``nu[k] * a_k(i, x_j)``."""
    nu = np.asarray(nu, dtype=float)
    means = nu[:, None, None] * table.values
    if np.any(means < 0) or np.any(~np.isfinite(means)):
        raise NegativeRate("Poisson means must be finite and nonnegative")
    hidden = rng.poisson(means)
    return CountDataset(table.locations, table.grid, hidden.sum(axis=0), hidden,
                        table.journey_labels, day_id, None, nu.copy())


def empirical_attendance(datasets: CountDataset | Sequence[CountDataset],
                         n_trips=None) -> AttendanceTable:
    """Average over days of ``hidden[k] / n_trips[k]``.

    ``n_trips`` has shape (K,) for a single day or (days, K); when omitted
    each dataset's own ``n_trips`` is used.
    """
    if isinstance(datasets, CountDataset):
        datasets = [datasets]
    if not datasets:
        raise ValueError("need at least one dataset")
    if n_trips is None:
        n_trips = [ds.n_trips for ds in datasets]
    n_trips = np.asarray(n_trips, dtype=float).reshape(len(datasets), -1)
    if np.any(n_trips <= 0):
        raise ZeroPopulation("every journey type needs a positive number of trips on every day")
    first = datasets[0]
    acc = np.zeros(first.hidden.shape)
    for ds, n in zip(datasets, n_trips):
        if ds.hidden is None:
            raise ValueError("empirical attendance needs hidden per-journey counts")
        if not np.array_equal(ds.locations, first.locations):
            raise ValueError("all days must share counter locations")
        acc += ds.hidden / n[:, None, None]
    return AttendanceTable(first.journey_labels, first.grid, first.locations, acc / len(datasets))


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

AGG_HEADER = ["day", "counter_id", "location", "time_step", "count"]
HIDDEN_HEADER = ["day", "counter_id", "location", "time_step", "journey", "count"]


def write_counts(datasets: CountDataset | Sequence[CountDataset], path=None,
                 hidden: bool = False) -> str:
    """Serialize one or more days; ``hidden=True`` writes the per-journey layer."""
    if isinstance(datasets, CountDataset):
        datasets = [datasets]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HIDDEN_HEADER if hidden else AGG_HEADER)
    for ds in sorted(datasets, key=lambda d: d.day_id):
        if hidden and ds.hidden is None:
            raise ValueError(f"day {ds.day_id} has no hidden counts")
        for j in range(ds.J):
            loc = format(ds.locations[j], ".17g")
            for i in range(ds.grid.n_steps):
                if hidden:
                    for k, lab in enumerate(ds.journey_labels):
                        w.writerow([ds.day_id, j, loc, i, lab, int(ds.hidden[k, i, j])])
                else:
                    w.writerow([ds.day_id, j, loc, i, int(ds.counts[i, j])])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def read_counts(path, grid: TimeGrid | None = None) -> list[CountDataset]:
    return parse_counts(Path(path).read_text(), grid, str(path))


def parse_counts(text: str, grid: TimeGrid | None = None, name: str | None = None):
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise DataFormatError("empty counts file", 1, name)
    header = rows[0]
    if header == AGG_HEADER:
        hidden = False
    elif header == HIDDEN_HEADER:
        hidden = True
    else:
        raise DataFormatError(f"unrecognised header {','.join(header)}", 1, name)
    days: dict[int, dict] = {}
    width = len(header)
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != width:
            raise DataFormatError(f"expected {width} fields, got {len(row)}", lineno, name)
        try:
            day, cid, loc, step = int(row[0]), int(row[1]), float(row[2]), int(row[3])
            count = int(row[-1])
        except ValueError as exc:
            raise DataFormatError(str(exc), lineno, name) from None
        if count < 0 or cid < 0 or step < 0:
            raise DataFormatError("negative count, counter id or time step", lineno, name)
        d = days.setdefault(day, {"loc": {}, "cells": {}, "labels": []})
        if d["loc"].setdefault(cid, loc) != loc:
            raise DataFormatError(f"counter {cid} changes location", lineno, name)
        label = row[4] if hidden else ""
        if hidden and label not in d["labels"]:
            d["labels"].append(label)
        if (cid, step, label) in d["cells"]:
            raise DataFormatError("duplicate cell", lineno, name)
        d["cells"][(cid, step, label)] = count
    out = []
    for day in sorted(days):
        d = days[day]
        n_counters = len(d["loc"])
        if sorted(d["loc"]) != list(range(n_counters)):
            raise DataFormatError(f"day {day}: counter ids are not 0..J-1", None, name)
        n_steps = 1 + max(s for (_, s, _) in d["cells"]) if d["cells"] else 0
        g = grid if grid is not None else TimeGrid(0.0, max(n_steps, 1), 1.0)
        if n_steps != g.n_steps:
            raise DataFormatError(f"day {day}: {n_steps} time steps, grid has {g.n_steps}",
                                  None, name)
        locs = np.array([d["loc"][c] for c in range(n_counters)])
        labels = d["labels"] if hidden else [""]
        arr = np.zeros((len(labels), g.n_steps, n_counters), dtype=np.int64)
        for k, lab in enumerate(labels):
            for c in range(n_counters):
                for i in range(g.n_steps):
                    try:
                        arr[k, i, c] = d["cells"][(c, i, lab)]
                    except KeyError:
                        raise DataFormatError(f"day {day}: missing cell counter {c} step {i}",
                                              None, name) from None
        if hidden:
            out.append(CountDataset(locs, g, arr.sum(axis=0), arr, tuple(labels), day))
        else:
            out.append(CountDataset(locs, g, arr[0], None, (), day))
    return out
