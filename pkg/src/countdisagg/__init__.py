"""Disaggregating passage counts into journey-type populations.

Modules:

* ``distributions``: densities, schedules and quadrature rules
* ``attendance``: fluxes and attendance functions of journey types
* ``microsim``: trip-level simulator and count datasets
* ``statmodel``: Poisson likelihood, Fisher information, confidence ellipsoids
* ``em``: EM estimation of the population sizes
* ``experiments`` / ``cli``: study drivers and the command-line tool
"""

from __future__ import annotations

from .attendance import (ARRIVAL, STARTING, AttendanceTable, JourneyTypeSpec, TimeGrid,
                         attendance, attendance_profile, attendance_table, flux_left,
                         flux_right, flux_unoriented, pde_residual)
from .distributions import (DEFAULT_QUADRATURE, CosineSeries, Dirac, FixedSchedule,
                            LinearShiftSchedule, PiecewiseLinear, QuadratureSpec,
                            TruncatedGaussianMixture, Uniform, integrate)
from .em import Custom, EmConfig, EmState, RandomSplit, UniformSplit, e_step, m_step, run_em
from .em import em_convergence_rate
from .microsim import (CountDataset, Trip, crossing_time, draw_trip, empirical_attendance,
                       simulate_day, simulate_poisson_day)
from .statmodel import (ConfidenceEllipsoid, FisherMatrix, PoissonModel, chi2_quantile,
                        confidence_ellipsoid, ellipsoid_slice, fisher_information,
                        log_likelihood, score)

__version__ = "0.1.0"

__all__ = [
    "ARRIVAL", "STARTING", "AttendanceTable", "JourneyTypeSpec", "TimeGrid", "attendance",
    "attendance_profile", "attendance_table", "flux_left", "flux_right", "flux_unoriented",
    "pde_residual", "DEFAULT_QUADRATURE", "CosineSeries", "Dirac", "FixedSchedule",
    "LinearShiftSchedule", "PiecewiseLinear", "QuadratureSpec", "TruncatedGaussianMixture",
    "Uniform", "integrate", "Custom", "EmConfig", "EmState", "RandomSplit", "UniformSplit",
    "e_step", "m_step", "run_em", "em_convergence_rate", "CountDataset", "Trip",
    "crossing_time", "draw_trip", "empirical_attendance", "simulate_day",
    "simulate_poisson_day", "ConfidenceEllipsoid", "FisherMatrix", "PoissonModel",
    "chi2_quantile", "confidence_ellipsoid", "ellipsoid_slice", "fisher_information",
    "log_likelihood", "score",
]
