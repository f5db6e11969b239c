"""Theoretical attendance functions from activity laws.

A journey type is a bundle of laws (velocity, origin, destination, schedule).
For a counter at ``x`` the passage-time density (the *flux*) is an integral
over the *anchor* location ``u`` (the origin when the schedule gives starting
times, the destination when it gives arrival times) and over the velocity::

    flux(t, x) = E_v  integral  G_x(u) f_sched(t -/+ |u - x| / v | u) f_anchor(u) du

where ``G_x(u)`` is the survival function of the *other* endpoint at ``x``
when ``u < x`` and its CDF when ``u >= x``.  The ``u < x`` part is the
rightward flux for starting-time schedules and the leftward flux for
arrival-time schedules.

Attendance over a time bin is the time integral of the flux.  By default it
is evaluated exactly through the schedule CDF (the time integral is moved
inside the spatial one), so only the spatial and velocity integrals use
quadrature.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .distributions import (
    DEFAULT_QUADRATURE,
    ConditionalSchedule,
    Density1D,
    FixedSchedule,
    QuadratureSpec,
    TruncatedGaussianMixture,
    Uniform,
    density_from_dict,
    schedule_from_dict,
)
from .errors import ConfigError, DataFormatError, NonFiniteIntegrand, NumericalError, SingularRisk

STARTING = "starting_time"
ARRIVAL = "arrival_time"
_VARIANTS = (STARTING, ARRIVAL)
_CHUNK = 96
_NEG_CLAMP = 1e-12
_RISK_FLOOR = 1e-12


@dataclass(frozen=True)
class TimeGrid:
    """``n_steps`` consecutive bins of width ``step`` hours starting at ``t_start``."""

    t_start: float = 0.0
    n_steps: int = 24
    step: float = 1.0

    def __post_init__(self):
        if self.n_steps < 1 or not self.step > 0:
            raise ValueError("time grid needs n_steps >= 1 and step > 0")

    @property
    def edges(self) -> np.ndarray:
        return self.t_start + self.step * np.arange(self.n_steps + 1)

    @property
    def t_end(self) -> float:
        return self.t_start + self.step * self.n_steps

    def bin_index(self, t):
        """Bin of each time (``-1`` outside the horizon); bins are half-open."""
        t = np.asarray(t, dtype=float)
        idx = np.floor((t - self.t_start) / self.step)
        ok = np.isfinite(idx) & (idx >= 0) & (idx < self.n_steps)
        return np.where(ok, idx, -1).astype(np.int64)

    def to_dict(self):
        return {"t_start": self.t_start, "n_steps": self.n_steps, "step": self.step}

    @classmethod
    def from_dict(cls, d: dict | None) -> "TimeGrid":
        if not d:
            return cls()
        try:
            return cls(float(d.get("t_start", 0.0)), int(d.get("n_steps", 24)),
                       float(d.get("step", 1.0)))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad time grid: {exc}") from None


@dataclass(frozen=True)
class JourneyTypeSpec:
    label: str
    schedule_variant: str
    velocity: Density1D
    origin: Density1D
    destination: Density1D
    schedule: ConditionalSchedule

    def __post_init__(self):
        if self.schedule_variant not in _VARIANTS:
            raise ValueError(f"schedule_variant must be one of {_VARIANTS}")
        if isinstance(self.schedule, Density1D):
            object.__setattr__(self, "schedule", FixedSchedule(self.schedule))
        lo, hi = self.velocity.support
        if not lo > 0:
            raise ValueError(f"journey {self.label}: velocity support must lie in (0, inf)")
        for name in ("origin", "destination"):
            a, b = getattr(self, name).support
            if not (np.isfinite(a) and np.isfinite(b)):
                raise ValueError(f"journey {self.label}: {name} needs a bounded support")

    @property
    def anchor(self) -> Density1D:
        """Law of the location the schedule is conditioned on."""
        return self.origin if self.schedule_variant == STARTING else self.destination

    @property
    def other(self) -> Density1D:
        return self.destination if self.schedule_variant == STARTING else self.origin

    @property
    def time_sign(self) -> float:
        # schedule time = t - sign * travel time from/to the anchor
        return 1.0 if self.schedule_variant == STARTING else -1.0

    def side_of(self, direction: str) -> str:
        """Anchor side ("below"/"above" x) feeding a travel direction."""
        if direction not in ("right", "left"):
            raise ValueError("direction must be 'right' or 'left'")
        below_is_right = self.schedule_variant == STARTING
        return "below" if (direction == "right") == below_is_right else "above"

    def within(self, domain: tuple[float, float]) -> bool:
        lo, hi = domain
        return all(lo - 1e-12 <= getattr(self, n).support[0] and
                   getattr(self, n).support[1] <= hi + 1e-12 for n in ("origin", "destination"))

    def mirrored(self, domain: tuple[float, float] = (0.0, 1.0)) -> "JourneyTypeSpec":
        """Same journey in space reflected by ``x -> lo + hi - x``."""
        c = domain[0] + domain[1]
        return JourneyTypeSpec(self.label + "~", self.schedule_variant, self.velocity,
                               _mirror(self.origin, c), _mirror(self.destination, c),
                               self.schedule)

    def to_dict(self):
        return {"label": self.label, "variant": self.schedule_variant,
                "velocity": self.velocity.to_dict(), "origin": self.origin.to_dict(),
                "destination": self.destination.to_dict(), "schedule": self.schedule.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "JourneyTypeSpec":
        try:
            variant = d.get("variant", STARTING)
            variant = {"starting": STARTING, "arrival": ARRIVAL}.get(variant, variant)
            return cls(str(d["label"]), variant, density_from_dict(d["velocity"]),
                       density_from_dict(d["origin"]), density_from_dict(d["destination"]),
                       schedule_from_dict(d["schedule"]))
        except KeyError as exc:
            raise ConfigError(f"journey declaration is missing field {exc}") from None
        except ValueError as exc:
            raise ConfigError(str(exc)) from None


def _mirror(d: Density1D, c: float) -> Density1D:
    from .distributions import Dirac, PiecewiseLinear

    if isinstance(d, TruncatedGaussianMixture):
        lo, hi = d.bounds
        return TruncatedGaussianMixture(d.weights, tuple(c - m for m in d.means), d.sds,
                                        (c - hi, c - lo))
    if isinstance(d, Uniform):
        return Uniform(c - d.hi, c - d.lo)
    if isinstance(d, Dirac):
        return Dirac(c - d.atom)
    if isinstance(d, PiecewiseLinear):
        return PiecewiseLinear(tuple(c - k for k in reversed(d.knots)), tuple(reversed(d.values)))
    raise NotImplementedError(f"cannot mirror a {d.kind} law")


# ---------------------------------------------------------------------------
# Kernel pieces
# ---------------------------------------------------------------------------


def g_x(spec: JourneyTypeSpec, x: float, u):
    """Directional weight: S_other(x) for u < x, F_other(x) for u >= x."""
    u = np.asarray(u, dtype=float)
    out = np.where(u < x, spec.other.sf(x), spec.other.cdf(x))
    return float(out) if out.ndim == 0 else out


def _velocity_rule(spec: JourneyTypeSpec, quad: QuadratureSpec):
    vel = spec.velocity
    if vel.is_dirac:
        return np.array([vel.atom]), np.array([1.0])
    lo, hi = vel.support
    if not np.isfinite(hi):
        raise ValueError(f"journey {spec.label}: velocity law needs a bounded support")
    v, w = quad.nodes(lo, hi)
    return v, w * vel.pdf(v)


def _anchor_rule(spec: JourneyTypeSpec, x: np.ndarray, quad: QuadratureSpec, side: str):
    """Anchor nodes ``u`` (X, Nu) and weights G_x(u) f_anchor(u) du."""
    x = np.asarray(x, dtype=float)
    anchor = spec.anchor
    w_below = spec.other.sf(x)[:, None]
    w_above = spec.other.cdf(x)[:, None]
    if anchor.is_dirac:
        u = np.full((x.size, 1), float(anchor.atom))
        below = u < x[:, None]
        if side == "below":
            w = np.where(below, w_below, 0.0)
        elif side == "above":
            w = np.where(below, 0.0, w_above)
        else:
            w = np.where(below, w_below, w_above)
        return u, w
    lo, hi = anchor.support
    r, rw = quad.unit_rule()
    xc = np.clip(x, lo, hi)[:, None]
    parts_u, parts_w = [], []
    if side in ("below", "both"):
        length = xc - lo
        u = lo + length * r[None, :]
        parts_u.append(u)
        parts_w.append(length * rw[None, :] * anchor.pdf(u) * w_below)
    if side in ("above", "both"):
        length = hi - xc
        u = xc + length * r[None, :]
        parts_u.append(u)
        parts_w.append(length * rw[None, :] * anchor.pdf(u) * w_above)
    return np.concatenate(parts_u, axis=1), np.concatenate(parts_w, axis=1)


def _flux(spec: JourneyTypeSpec, t, x, quad: QuadratureSpec, side: str):
    t, x = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(x, dtype=float))
    shape = t.shape
    t = t.ravel()
    x = x.ravel()
    vs, vw = _velocity_rule(spec, quad)
    out = np.empty(t.size)
    for start in range(0, t.size, _CHUNK):
        sl = slice(start, start + _CHUNK)
        u, w = _anchor_rule(spec, x[sl], quad, side)
        dist = np.abs(u - x[sl, None])
        acc = np.zeros(u.shape[0])
        for v, wv in zip(vs, vw):
            s = t[sl, None] - spec.time_sign * dist / v
            acc += wv * np.einsum("pn,pn->p", w, spec.schedule.pdf(s, u))
        out[sl] = acc
    if not np.all(np.isfinite(out)):
        raise NonFiniteIntegrand(f"flux of journey {spec.label} is not finite")
    out = np.maximum(out, 0.0)
    return float(out[0]) if shape == () else out.reshape(shape)


def flux_right(spec: JourneyTypeSpec, t, x, quad: QuadratureSpec = DEFAULT_QUADRATURE):
    return _flux(spec, t, x, quad, spec.side_of("right"))


def flux_left(spec: JourneyTypeSpec, t, x, quad: QuadratureSpec = DEFAULT_QUADRATURE):
    return _flux(spec, t, x, quad, spec.side_of("left"))


def flux_unoriented(spec: JourneyTypeSpec, t, x, quad: QuadratureSpec = DEFAULT_QUADRATURE):
    """Flux through ``x`` in both directions, integrated in one pass over G_x."""
    return _flux(spec, t, x, quad, "both")


def _finalize_probabilities(a: np.ndarray, label: str) -> np.ndarray:
    if not np.all(np.isfinite(a)):
        raise NonFiniteIntegrand(f"attendance of journey {label} is not finite")
    if np.any(a < -_NEG_CLAMP):
        raise NumericalError(f"attendance of journey {label} is negative ({a.min():.3e})")
    if np.any(a > 1.0 + _NEG_CLAMP):
        raise NumericalError(f"attendance of journey {label} exceeds one ({a.max():.3e})")
    return np.clip(a, 0.0, 1.0)


def attendance_profile(spec: JourneyTypeSpec, grid: TimeGrid, xs,
                       quad: QuadratureSpec = DEFAULT_QUADRATURE,
                       time_integration: str = "exact") -> np.ndarray:
    """Attendance a(i, x) for every bin and every location, shape ``(I, X)``.

    ``time_integration="exact"`` integrates each bin through the schedule CDF;
    ``"quadrature"`` integrates the unoriented flux with ``quad`` on each bin.
    """
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    if time_integration == "quadrature":
        return _attendance_by_time_quadrature(spec, grid, xs, quad)
    if time_integration != "exact":
        raise ValueError("time_integration must be 'exact' or 'quadrature'")
    edges = grid.edges
    vs, vw = _velocity_rule(spec, quad)
    out = np.empty((grid.n_steps, xs.size))
    for start in range(0, xs.size, _CHUNK):
        sl = slice(start, start + _CHUNK)
        u, w = _anchor_rule(spec, xs[sl], quad, "both")
        dist = np.abs(u - xs[sl, None])
        acc = np.zeros((grid.n_steps, u.shape[0]))
        for v, wv in zip(vs, vw):
            s = edges[:, None, None] - spec.time_sign * dist[None] / v
            cdf = spec.schedule.cdf(s, u[None])
            acc += wv * np.einsum("ipn,pn->ip", np.diff(cdf, axis=0), w)
        out[:, sl] = acc
    return _finalize_probabilities(out, spec.label)


def _attendance_by_time_quadrature(spec, grid, xs, quad):
    r, rw = quad.unit_rule()
    out = np.empty((grid.n_steps, xs.size))
    for i, t0 in enumerate(grid.edges[:-1]):
        tn = t0 + grid.step * r
        tt, xx = np.meshgrid(tn, xs, indexing="ij")
        nu = flux_unoriented(spec, tt, xx, quad)
        out[i] = grid.step * (rw @ nu)
    return _finalize_probabilities(out, spec.label)


def attendance(spec: JourneyTypeSpec, grid: TimeGrid, x: float,
               quad: QuadratureSpec = DEFAULT_QUADRATURE, time_integration: str = "exact"):
    """Attendance of one journey type at one location, one value per time bin."""
    return attendance_profile(spec, grid, [x], quad, time_integration)[:, 0]


# ---------------------------------------------------------------------------
# Tables
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AttendanceTable:
    """Attendance values ``values[k, i, j]`` for journey k, bin i, location j."""

    journey_labels: tuple[str, ...]
    grid: TimeGrid
    locations: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        locations = np.asarray(self.locations, dtype=float)
        K = len(self.journey_labels)
        if values.shape != (K, self.grid.n_steps, locations.size):
            raise ValueError(f"attendance values have shape {values.shape}, expected "
                             f"{(K, self.grid.n_steps, locations.size)}")
        object.__setattr__(self, "journey_labels", tuple(self.journey_labels))
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "locations", locations)

    @property
    def K(self) -> int:
        return len(self.journey_labels)

    @property
    def I(self) -> int:
        return self.grid.n_steps

    @property
    def J(self) -> int:
        return self.locations.size

    def rates(self, nu) -> np.ndarray:
        """Expected aggregate counts <nu, a(i, x_j)>, shape (I, J)."""
        return np.tensordot(np.asarray(nu, dtype=float), self.values, axes=(0, 0))

    def select(self, columns) -> "AttendanceTable":
        columns = np.asarray(columns)
        return AttendanceTable(self.journey_labels, self.grid, self.locations[columns],
                               self.values[:, :, columns])

    def gram_matrix(self) -> np.ndarray:
        flat = self.values.reshape(self.K, -1)
        return flat @ flat.T

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["journey", "time_step", "location", "value"])
        for k, label in enumerate(self.journey_labels):
            for i in range(self.I):
                for j in range(self.J):
                    w.writerow([label, i, format(self.locations[j], ".17g"),
                                format(self.values[k, i, j], ".17g")])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, path, grid: TimeGrid | None = None) -> "AttendanceTable":
        text = Path(path).read_text()
        return cls.parse_csv(text, grid, str(path))

    @classmethod
    def parse_csv(cls, text: str, grid: TimeGrid | None = None, name: str | None = None):
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or rows[0] != ["journey", "time_step", "location", "value"]:
            raise DataFormatError("expected header journey,time_step,location,value", 1, name)
        labels: list[str] = []
        cells: dict[tuple[str, int], list[tuple[float, float]]] = {}
        max_step = -1
        for lineno, row in enumerate(rows[1:], start=2):
            if not row:
                continue
            if len(row) != 4:
                raise DataFormatError(f"expected 4 fields, got {len(row)}", lineno, name)
            try:
                step = int(row[1])
                loc = float(row[2])
                val = float(row[3])
            except ValueError as exc:
                raise DataFormatError(str(exc), lineno, name) from None
            if step < 0:
                raise DataFormatError("negative time_step", lineno, name)
            if row[0] not in labels:
                labels.append(row[0])
            cells.setdefault((row[0], step), []).append((loc, val))
            max_step = max(max_step, step)
        n_steps = max_step + 1
        if grid is None:
            grid = TimeGrid(0.0, max(n_steps, 1), 1.0)
        if labels and n_steps != grid.n_steps:
            raise DataFormatError(f"table has {n_steps} time steps, grid has {grid.n_steps}",
                                  None, name)
        if not labels:
            return cls((), grid, np.zeros(0), np.zeros((0, grid.n_steps, 0)))
        first = cells.get((labels[0], 0), [])
        locations = np.array([loc for loc, _ in first])
        values = np.empty((len(labels), grid.n_steps, locations.size))
        for k, lab in enumerate(labels):
            for i in range(grid.n_steps):
                entries = cells.get((lab, i))
                if entries is None or len(entries) != locations.size:
                    raise DataFormatError(f"journey {lab} step {i} has an incomplete row set",
                                          None, name)
                locs = np.array([loc for loc, _ in entries])
                if not np.array_equal(locs, locations):
                    raise DataFormatError(f"journey {lab} step {i} lists other locations",
                                          None, name)
                values[k, i] = [val for _, val in entries]
        return cls(tuple(labels), grid, locations, values)


def attendance_table(specs: Sequence[JourneyTypeSpec], grid: TimeGrid, locations,
                     quad: QuadratureSpec = DEFAULT_QUADRATURE) -> AttendanceTable:
    locations = np.atleast_1d(np.asarray(locations, dtype=float))
    values = np.empty((len(specs), grid.n_steps, locations.size))
    for k, spec in enumerate(specs):
        values[k] = attendance_profile(spec, grid, locations, quad)
    return AttendanceTable(tuple(s.label for s in specs), grid, locations, values)


# ---------------------------------------------------------------------------
# Transport-equation residual
# ---------------------------------------------------------------------------


def pde_residuals(spec: JourneyTypeSpec, direction: str, t, x, h: float = 1e-4,
                  quad: QuadratureSpec = DEFAULT_QUADRATURE) -> np.ndarray:
    """Pointwise strong-form residual of the oriented-flux transport equation.

    With a Dirac velocity ``v`` and ``c = +v`` (rightward) or ``-v`` (leftward)
    the oriented flux satisfies::

        d_t nu + c d_x nu = s * v * (W(x) f_joint(t, x) - nu f_other(x) / W(x))

    where ``W`` is the other endpoint's survival function (anchor below x) or
    CDF (anchor above x), ``f_joint`` the joint schedule/anchor density and
    ``s = +1`` for starting-time schedules, ``-1`` for arrival-time ones.
    Derivatives are central differences with step ``h`` in both variables.
    """
    if not spec.velocity.is_dirac:
        raise ValueError("pde residual needs a Dirac velocity law")
    v = float(spec.velocity.atom)
    c = v if direction == "right" else -v
    side = spec.side_of(direction)
    t, x = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(x, dtype=float))
    weight = spec.other.sf(x) if side == "below" else spec.other.cdf(x)
    if np.any(weight < _RISK_FLOOR):
        raise SingularRisk(f"journey {spec.label}: {'survival' if side == 'below' else 'CDF'} "
                           f"of the other endpoint vanishes at an evaluation point")

    def nu(tt, xx):
        return _flux(spec, tt, xx, quad, side)

    d_t = (nu(t + h, x) - nu(t - h, x)) / (2.0 * h)
    d_x = (nu(t, x + h) - nu(t, x - h)) / (2.0 * h)
    here = nu(t, x)
    joint = spec.schedule.pdf(t, x) * spec.anchor.pdf(x)
    rhs = spec.time_sign * v * (weight * joint - here * spec.other.pdf(x) / weight)
    return d_t + c * d_x - rhs


def pde_residual(spec: JourneyTypeSpec, direction: str, t, x, h: float = 1e-4,
                 quad: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """Max absolute transport-equation residual over the given (t, x) points."""
    return float(np.max(np.abs(pde_residuals(spec, direction, t, x, h, quad))))
