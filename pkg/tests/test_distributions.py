from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from countdisagg.distributions import (CosineSeries, Dirac, FixedSchedule, LinearShiftSchedule,
                                       PiecewiseLinear, QuadratureSpec, TruncatedGaussianMixture,
                                       Uniform, density_from_dict, eval_cdf, eval_density,
                                       eval_survival, integrate, sample, schedule_from_dict)
from countdisagg.errors import ConfigError, DiracDensityError, NonFiniteIntegrand

SHIPPED = [
    Uniform(0.0, 1.0),
    Uniform(-2.0, 3.5),
    TruncatedGaussianMixture((0.7, 0.3), (0.15, 0.35), (0.08, 0.12), (0.0, 1.0)),
    TruncatedGaussianMixture((0.8, 0.2), (7.9, 12.5), (0.6, 1.0), (0.0, 24.0)),
    TruncatedGaussianMixture((1.0,), (0.5,), (10.0,), (0.0, 1.0)),
    PiecewiseLinear((0.0, 1.0), (2.0, 0.0)),
    PiecewiseLinear.normalized((0.0, 0.2, 0.5, 1.0), (0.0, 3.0, 1.0, 1.0)),
    CosineSeries.cos4(),
    CosineSeries.sin4(),
]


def test_uniform_density_values():
    u = Uniform(0.0, 1.0)
    assert eval_density(u, 0.5) == 1.0
    assert eval_density(u, 2.0) == 0.0
    assert eval_cdf(u, 0.5) == 0.5


def test_triangle_density_interpolates():
    tri = PiecewiseLinear((0.0, 1.0), (2.0, 0.0))
    assert eval_density(tri, 0.25) == pytest.approx(1.5, abs=1e-15)
    assert eval_cdf(tri, 0.5) == pytest.approx(0.75, abs=1e-15)


def test_piecewise_linear_rejects_unnormalised():
    with pytest.raises(ValueError):
        PiecewiseLinear((0.0, 1.0), (1.0, 0.0))


def test_dirac_step_cdf_and_no_density():
    d = Dirac(0.3)
    assert eval_cdf(d, 0.2) == 0.0
    assert eval_cdf(d, 0.3) == 1.0
    with pytest.raises(DiracDensityError):
        eval_density(d, 0.3)
    assert sample(Dirac(2.0), np.random.default_rng(0)) == 2.0


def test_wide_truncated_gaussian_is_symmetric():
    d = TruncatedGaussianMixture((1.0,), (0.5,), (10.0,), (0.0, 1.0))
    assert eval_cdf(d, 0.5) == pytest.approx(0.5, abs=1e-15)


@pytest.mark.parametrize("d", SHIPPED, ids=lambda d: d.kind)
def test_density_integrates_to_one(d):
    lo, hi = d.support
    assert abs(integrate(d.pdf, (lo, hi)) - 1.0) < 1e-8


@pytest.mark.parametrize("d", SHIPPED, ids=lambda d: d.kind)
def test_cdf_endpoints_and_monotone(d):
    lo, hi = d.support
    assert eval_cdf(d, lo) == pytest.approx(0.0, abs=1e-14)
    assert eval_cdf(d, hi) == pytest.approx(1.0, abs=1e-14)
    xs = np.linspace(lo - 0.1, hi + 0.1, 2001)
    assert np.all(np.diff(d.cdf(xs)) >= -1e-15)


@pytest.mark.parametrize("d", SHIPPED, ids=lambda d: d.kind)
def test_cdf_matches_integrated_density(d):
    lo, hi = d.support
    kinks = list(getattr(d, "knots", (lo, hi)))
    for x in np.linspace(lo, hi, 7)[1:-1]:
        cuts = [lo] + [k for k in kinks if lo < k < x] + [x]
        exact = math.fsum(integrate(d.pdf, (a, b)) for a, b in zip(cuts[:-1], cuts[1:]))
        assert eval_cdf(d, x) == pytest.approx(exact, abs=1e-10)


@pytest.mark.parametrize("d", SHIPPED, ids=lambda d: d.kind)
def test_sampling_ks(d):
    rng = np.random.default_rng(2024)
    xs = d.sample(rng, 100_000)
    lo, hi = d.support
    assert xs.min() >= lo and xs.max() <= hi
    res = stats.kstest(xs, lambda x: d.cdf(x))
    assert res.statistic < 0.01


def test_mixture_component_frequencies():
    d = TruncatedGaussianMixture((0.7, 0.3), (-5.0, 5.0), (0.5, 0.5), (-10.0, 10.0))
    xs = d.sample(np.random.default_rng(7), 100_000)
    frac = np.mean(xs < 0)
    sigma = math.sqrt(0.7 * 0.3 / xs.size)
    assert abs(frac - 0.7) < 3 * sigma


@settings(max_examples=200, deadline=None)
@given(st.sampled_from(SHIPPED), st.floats(-50, 50, allow_nan=False))
def test_survival_is_exact_complement(d, x):
    assert eval_survival(d, x) + eval_cdf(d, x) == 1.0
    assert 0.0 <= eval_cdf(d, x) <= 1.0


def test_strategy_densities_normalised():
    for d in (CosineSeries.cos4(), CosineSeries.sin4()):
        assert integrate(d.pdf, (0.0, 1.0)) == pytest.approx(1.0, abs=1e-8)
    x = np.linspace(0, 1, 101)
    assert np.allclose(CosineSeries.cos4().pdf(x), 8 * np.cos(np.pi * x) ** 4 / 3, atol=1e-13)
    assert np.allclose(CosineSeries.sin4().pdf(x), 8 * np.sin(np.pi * x) ** 4 / 3, atol=1e-13)


def test_integrate_exactness():
    gl2 = QuadratureSpec(panels=1, order=2)
    assert integrate(lambda x: np.ones_like(x), (0.0, 1.0)) == 1.0
    assert integrate(lambda x: x ** 3, (0.0, 1.0), gl2, max_refinements=0) == pytest.approx(0.25, abs=1e-12)
    assert integrate(lambda x: 8 * np.sin(np.pi * x) ** 4 / 3, (0.0, 1.0)) == pytest.approx(1.0, abs=1e-8)


def test_integrate_trapezoid_scheme():
    spec = QuadratureSpec(scheme="trapezoid", n=1001)
    assert integrate(lambda x: x, (0.0, 2.0), spec) == pytest.approx(2.0, abs=1e-12)
    assert integrate(np.sin, (0.0, math.pi), spec) == pytest.approx(2.0, abs=1e-6)


def test_integrate_rejects_nonfinite():
    with pytest.raises(NonFiniteIntegrand):
        integrate(lambda x: np.where(x > 0.5, np.nan, 1.0), (0.0, 1.0))


def test_quadrature_validation():
    with pytest.raises(ValueError):
        QuadratureSpec(panels=0)
    with pytest.raises(ValueError):
        QuadratureSpec(order=1)
    with pytest.raises(ValueError):
        QuadratureSpec(abs_tol=0.0)
    w = QuadratureSpec().unit_rule()[1]
    assert math.fsum(w) == pytest.approx(1.0, abs=1e-15)


def test_linear_shift_schedule_moves_mean():
    base = TruncatedGaussianMixture((1.0,), (8.0,), (0.5,), (0.0, 24.0))
    sch = LinearShiftSchedule(base, slope=2.0, reference=0.5)
    assert sch.cdf(8.0, 0.5) == pytest.approx(0.5, abs=1e-12)
    assert sch.cdf(9.0, 1.0) == pytest.approx(0.5, abs=1e-12)
    for u in (0.0, 0.3, 1.0):
        assert integrate(lambda t: sch.pdf(t, u), (0.0, 24.0)) == pytest.approx(1.0, abs=1e-8)
    draws = sch.sample(np.full(20_000, 1.0), np.random.default_rng(3))
    assert np.mean(draws) == pytest.approx(9.0, abs=0.02)


def test_fixed_schedule_ignores_location():
    sch = FixedSchedule(Uniform(6.0, 10.0))
    assert sch.pdf(8.0, 0.1) == sch.pdf(8.0, 0.9) == 0.25


def test_declarations_round_trip():
    for d in SHIPPED + [Dirac(2.0)]:
        again = density_from_dict(d.to_dict())
        xs = np.linspace(*d.support, 11) if not d.is_dirac else np.array([1.0, 2.0, 3.0])
        assert np.array_equal(again.cdf(xs), d.cdf(xs))
    sch = LinearShiftSchedule(Uniform(6.0, 10.0), 1.5, 0.2)
    assert schedule_from_dict(sch.to_dict()).cdf(8.0, 0.7) == sch.cdf(8.0, 0.7)


@pytest.mark.parametrize("bad", [{}, {"kind": "nope"}, {"kind": "uniform", "lo": 0.0},
                                 {"kind": "uniform", "lo": 1.0, "hi": 0.0}])
def test_bad_declarations(bad):
    with pytest.raises(ConfigError):
        density_from_dict(bad)
