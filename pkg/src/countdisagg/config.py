"""Experiment configuration: one JSON document describing a whole study."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .attendance import JourneyTypeSpec, TimeGrid
from .distributions import QuadratureSpec, Uniform, density_from_dict, Density1D
from .em import EmConfig
from .errors import ConfigError

GENERATORS = ("poisson", "trajectory")
RESAMPLE = ("per_replicate", "fixed")
ATTENDANCE_MODES = ("theoretical", "empirical")


@dataclass(frozen=True)
class DailyNLaw:
    """Day-to-day variability of trip numbers: ``fixed`` or mean-one ``lognormal``."""

    kind: str = "lognormal"
    sigma: float = 0.1

    def __post_init__(self):
        if self.kind not in ("fixed", "lognormal"):
            raise ConfigError(f"unknown daily_n kind {self.kind!r}")
        if self.sigma < 0:
            raise ConfigError("daily_n sigma must be nonnegative")

    def draw(self, base, rng: np.random.Generator) -> np.ndarray:
        base = np.asarray(base, dtype=float)
        if self.kind == "fixed" or self.sigma == 0:
            return np.rint(base).astype(np.int64)
        z = rng.standard_normal(base.size)
        return np.rint(base * np.exp(self.sigma * z - 0.5 * self.sigma ** 2)).astype(np.int64)

    def to_dict(self):
        return {"kind": self.kind, "sigma": self.sigma}


@dataclass(frozen=True)
class CounterConfig:
    count: int = 50
    density: Density1D = field(default_factory=lambda: Uniform(0.0, 1.0))
    resample: str = "per_replicate"


@dataclass(frozen=True)
class ExperimentConfig:
    journeys: tuple[JourneyTypeSpec, ...]
    true_N: np.ndarray
    name: str = "experiment"
    seed: int = 0
    domain: tuple[float, float] = (0.0, 1.0)
    grid: TimeGrid = field(default_factory=TimeGrid)
    counters: CounterConfig = field(default_factory=CounterConfig)
    replicates: int = 1
    generator: str = "poisson"
    attendance_mode: str = "theoretical"
    learning_days: int = 300
    daily_n: DailyNLaw = field(default_factory=DailyNLaw)
    em: EmConfig = field(default_factory=EmConfig)
    quadrature: QuadratureSpec = field(default_factory=QuadratureSpec)
    ladder: tuple[int, ...] = tuple(range(5, 55, 5))
    ladder_replicates: int = 50
    coverage_replicates: int = 200
    level: float = 0.95
    strategies: dict = field(default_factory=dict)
    strategy_J: int = 15
    pde_h: tuple[float, ...] = (2e-3, 1e-3)
    pde_points: tuple[tuple[float, float], ...] = ()
    output_dir: str = "out"
    raw: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def K(self) -> int:
        return len(self.journeys)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(s.label for s in self.journeys)

    def with_overrides(self, **kw) -> "ExperimentConfig":
        from dataclasses import replace

        return replace(self, **kw)


def _require(cond: bool, msg: str):
    if not cond:
        raise ConfigError(msg)


def config_from_dict(d: dict) -> ExperimentConfig:
    try:
        return _parse(d)
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError, AttributeError) as exc:
        raise ConfigError(f"bad config: {exc}") from None


def _parse(d: dict) -> ExperimentConfig:
    if not isinstance(d, dict):
        raise ConfigError("config must be a JSON object")
    journeys = tuple(JourneyTypeSpec.from_dict(j) for j in d.get("journeys", []))
    labels = [j.label for j in journeys]
    _require(len(set(labels)) == len(labels), "journey labels must be unique")
    true_N = np.asarray(d.get("true_N", [0.0] * len(journeys)), dtype=float)
    _require(true_N.shape == (len(journeys),), "true_N needs one entry per journey")
    _require(bool(np.all(true_N >= 0)) and bool(np.all(np.isfinite(true_N))),
             "true_N must be finite and nonnegative")

    domain = tuple(float(v) for v in d.get("domain", (0.0, 1.0)))
    _require(len(domain) == 2 and domain[0] < domain[1], "domain must be [x_l, x_r] with x_l < x_r")
    for j in journeys:
        _require(j.within(domain), f"journey {j.label} has endpoints outside the domain")

    c = d.get("counters", {})
    counters = CounterConfig(int(c.get("count", 50)),
                             density_from_dict(c.get("density", {"kind": "uniform", "lo": domain[0],
                                                                 "hi": domain[1]})),
                             c.get("resample", "per_replicate"))
    _require(counters.count >= 1, "counters.count must be at least 1")
    _require(counters.resample in RESAMPLE, f"counters.resample must be one of {RESAMPLE}")

    generator = d.get("generator", "poisson")
    _require(generator in GENERATORS, f"generator must be one of {GENERATORS}")
    mode = d.get("attendance_mode", "theoretical")
    _require(mode in ATTENDANCE_MODES, f"attendance_mode must be one of {ATTENDANCE_MODES}")
    replicates = int(d.get("replicates", 1))
    _require(replicates >= 1, "replicates must be at least 1")

    learning = d.get("learning", {})
    daily = learning.get("daily_n", {})
    cons = d.get("consistency", {})
    cov = d.get("coverage", {})
    strat = d.get("strategies", {})
    pde = d.get("pde_check", {})
    try:
        em = EmConfig.from_dict(d.get("em"))
    except ValueError as exc:
        raise ConfigError(f"bad em section: {exc}") from None
    try:
        quad = QuadratureSpec.from_dict(d.get("quadrature"))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad quadrature section: {exc}") from None

    ladder = tuple(int(j) for j in cons.get("ladder", range(5, 55, 5)))
    _require(len(ladder) >= 1 and all(j >= 1 for j in ladder), "ladder rungs must be >= 1")
    level = float(cov.get("level", 0.95))
    _require(0.0 < level < 1.0, "coverage level must lie in (0, 1)")
    strategies = {str(k): density_from_dict(v) for k, v in strat.get("densities", {}).items()}
    pde_h = tuple(float(h) for h in pde.get("h", (2e-3, 1e-3)))
    _require(all(h > 0 for h in pde_h), "pde_check.h must be positive")
    points = tuple((float(t), float(x)) for t, x in pde.get("points", ()))

    return ExperimentConfig(
        journeys=journeys, true_N=true_N, name=str(d.get("name", "experiment")),
        seed=int(d.get("seed", 0)), domain=domain, grid=TimeGrid.from_dict(d.get("grid")),
        counters=counters, replicates=replicates, generator=generator, attendance_mode=mode,
        learning_days=int(learning.get("days", 300)),
        daily_n=DailyNLaw(daily.get("kind", "lognormal"), float(daily.get("sigma", 0.1))),
        em=em, quadrature=quad, ladder=ladder,
        ladder_replicates=int(cons.get("replicates", 50)),
        coverage_replicates=int(cov.get("replicates", 200)), level=level,
        strategies=strategies, strategy_J=int(strat.get("J", 15)),
        pde_h=pde_h, pde_points=points, output_dir=str(d.get("output_dir", "out")), raw=d,
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: {exc.msg}") from None
    return config_from_dict(d)


def guiding_example_dict() -> dict:
    text = resources.files("countdisagg").joinpath("data/guiding_example.json").read_text()
    return json.loads(text)


def guiding_example() -> ExperimentConfig:
    """Four journey types (LR, RL, RU, UL) on [0, 1] with 24 hourly steps."""
    return config_from_dict(guiding_example_dict())
