from __future__ import annotations

import copy
import json

import numpy as np
import pytest
from scipy import stats

from countdisagg import experiments as ex
from countdisagg.attendance import AttendanceTable
from countdisagg.cli import main
from countdisagg.config import (DailyNLaw, config_from_dict, guiding_example, guiding_example_dict,
                                load_config)
from countdisagg.distributions import CosineSeries, Dirac, Uniform, integrate
from countdisagg.errors import ConfigError
from countdisagg.microsim import write_counts


def small_dict(**over) -> dict:
    d = guiding_example_dict()
    d["counters"]["count"] = 6
    d["replicates"] = 2
    d["consistency"] = {"ladder": [2, 4, 6], "replicates": 3}
    d["coverage"] = {"replicates": 4, "level": 0.95}
    d["learning"]["days"] = 3
    d["true_N"] = [1500, 1200, 300, 400]
    d.update(over)
    return d


def write_json(path, d):
    path.write_text(json.dumps(d))
    return str(path)


def read_manifest(root):
    return json.loads((root / "manifest.json").read_text())


# -- config -----------------------------------------------------------------


def test_guiding_example_loads():
    cfg = guiding_example()
    assert cfg.labels == ("LR", "RL", "RU", "UL")
    assert cfg.grid.n_steps == 24 and cfg.counters.count == 50
    assert np.array_equal(cfg.true_N, [150000, 120000, 30000, 40000])
    assert set(cfg.strategies) == {"d_u", "d_b", "d_c"}


@pytest.mark.parametrize("mutate", [
    lambda d: d.update(true_N=[1.0]),
    lambda d: d.update(true_N=[-1.0, 0, 0, 0]),
    lambda d: d["counters"].update(count=0),
    lambda d: d.update(replicates=0),
    lambda d: d.update(generator="magic"),
    lambda d: d.update(domain=[1, 0]),
    lambda d: d["journeys"][0].update(variant="sideways"),
    lambda d: d["journeys"][0]["origin"].update(kind="nope"),
    lambda d: d.update(em={"rel_tol": -1}),
    lambda d: d.update(coverage={"level": 1.5}),
    lambda d: d["journeys"].append(copy.deepcopy(d["journeys"][0])),
])
def test_config_errors(mutate):
    d = guiding_example_dict()
    mutate(d)
    with pytest.raises(ConfigError):
        config_from_dict(d)


def test_load_config_json_error_has_line(tmp_path):
    p = tmp_path / "c.json"
    p.write_text('{\n  "seed": 1,\n  oops\n}')
    with pytest.raises(ConfigError, match=r"c\.json:3:"):
        load_config(p)


def test_daily_n_law():
    rng = np.random.default_rng(0)
    assert np.array_equal(DailyNLaw("fixed").draw([10.4, 3.0], rng), [10, 3])
    draws = np.array([DailyNLaw("lognormal", 0.1).draw([1e6], rng)[0] for _ in range(4000)])
    assert abs(draws.mean() / 1e6 - 1) < 4 * 0.1 / np.sqrt(4000)


# -- counters ---------------------------------------------------------------


def test_place_counters_dirac():
    assert ex.place_counters(Dirac(0.5), 3, np.random.default_rng(0)).tolist() == [0.5] * 3


def test_place_counters_uniform_ks():
    xs = ex.place_counters(Uniform(0, 1), 10_000, np.random.default_rng(0))
    assert np.all(np.diff(xs) >= 0)
    assert stats.kstest(xs, "uniform").statistic < 0.02


def test_place_counters_validation_and_determinism():
    with pytest.raises(ValueError):
        ex.place_counters(Uniform(0, 1), 0, np.random.default_rng(0))
    a = ex.place_counters(Uniform(0, 1), 5, ex.stream_rng(7, ex.Stream.COUNTERS))
    b = ex.place_counters(Uniform(0, 1), 5, ex.stream_rng(7, ex.Stream.COUNTERS))
    assert np.array_equal(a, b)


def test_strategy_densities_normalised():
    xs = np.linspace(0, 1, 101)
    for d, f in ((CosineSeries.cos4(), np.cos), (CosineSeries.sin4(), np.sin)):
        assert np.allclose(d.pdf(xs), 8 * f(np.pi * xs) ** 4 / 3, atol=1e-13)
        assert abs(integrate(d.pdf, (0.0, 1.0)) - 1.0) < 1e-8


def test_replicate_streams_are_nested():
    cfg = config_from_dict(small_dict())
    first = ex.counters_for(cfg, 5, 1)
    assert np.array_equal(ex.counters_for(cfg, 5, 1, 3), first[:3])
    assert not np.array_equal(ex.counters_for(cfg, 5, 2), first)


# -- commands ---------------------------------------------------------------


def test_attendance_command_shapes(tmp_path):
    table, dense = ex.cmd_attendance(guiding_example(), out=tmp_path)
    assert table.values.shape == (4, 24, 50) and dense.values.shape == (4, 24, 512)
    names = {f["path"] for f in read_manifest(tmp_path)["files"]}
    assert names == {"counters.csv", "attendance_counters.csv", "attendance_dense.csv"}


def test_attendance_empty_journeys(tmp_path):
    cfg = write_json(tmp_path / "c.json", {"journeys": [], "true_N": []})
    assert main(["attendance", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    back = AttendanceTable.from_csv(tmp_path / "o" / "attendance_counters.csv",
                                    config_from_dict({}).grid)
    assert back.K == 0


def test_simulate_zero_population(tmp_path):
    d = small_dict(true_N=[0, 0, 0, 0], replicates=1)
    days = ex.cmd_simulate(config_from_dict(d), out=tmp_path)
    assert days[0].counts.sum() == 0


def test_simulate_writes_one_file_per_day(tmp_path):
    d = small_dict(replicates=30)
    ex.cmd_simulate(config_from_dict(d), out=tmp_path)
    assert len(list((tmp_path / "counts").glob("day_*.csv"))) == 30
    files = read_manifest(tmp_path)["files"]
    assert len(files) == 60


def test_trajectory_and_poisson_generators_agree():
    d = small_dict(true_N=[300, 200, 100, 100])
    d["counters"]["resample"] = "fixed"
    cfg = config_from_dict(d)
    locs = np.sort(ex.counters_for(cfg, 1, 0))
    table = ex.theoretical_table(cfg, locs)
    R = 200
    traj = np.mean([ex.generate_counts(cfg.with_overrides(generator="trajectory"), locs, 1, r).counts
                    for r in range(R)], axis=0)
    pois = np.mean([ex.generate_counts(cfg, locs, 1, r, table).counts for r in range(R)], axis=0)
    mean = table.rates(cfg.true_N)
    sd = np.sqrt(2 * mean / R)
    live = mean > 0.05
    assert np.all(np.abs(traj - pois)[live] <= 4 * sd[live] + 1e-12)


def test_estimate_k1_closed_form(tmp_path):
    d = small_dict(journeys=[guiding_example_dict()["journeys"][0]], true_N=[2000])
    cfg = config_from_dict(d)
    ds = ex.cmd_simulate(cfg, out=tmp_path / "sim")[0]
    [rep] = ex.cmd_estimate(cfg, tmp_path / "sim" / "counts" / "day_0000.csv", out=tmp_path / "e")
    table = ex.theoretical_table(cfg, ds.locations)
    assert rep.state.nu[0] == pytest.approx(ds.counts.sum() / table.values.sum(), rel=1e-12)


def test_estimate_cli_round_trip(tmp_path):
    cfgp = write_json(tmp_path / "c.json", small_dict(replicates=1))
    assert main(["simulate", "--config", cfgp, "--out", str(tmp_path / "sim")]) == 0
    assert main(["attendance", "--config", cfgp, "--out", str(tmp_path / "att")]) == 0
    counts = str(tmp_path / "sim" / "counts" / "day_0000.csv")
    assert main(["estimate", "--config", cfgp, "--counts", counts,
                 "--table", str(tmp_path / "att" / "attendance_counters.csv"),
                 "--out", str(tmp_path / "est")]) == 0
    rep = json.loads((tmp_path / "est" / "estimate_day_0000.json").read_text())
    assert rep["converged"] and len(rep["slice_areas"]) == 6
    assert rep["score_relative"] < 1e-6
    assert (tmp_path / "est" / "slices" / "day_0000_LR-RL.csv").exists()


def test_malformed_counts_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("day,counter_id,location,time_step,count\n0,0,0.5,0,1\n0,0,0.5,zz,1\n")
    assert main(["estimate", "--counts", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert "bad.csv:3:" in capsys.readouterr().err


def test_bad_config_exit_2(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("{")
    assert main(["attendance", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
    with pytest.raises(SystemExit) as err:
        main(["no-such-command"])
    assert err.value.code == 2


def test_numerical_failure_exit_3(tmp_path):
    # counts at a counter the only journey type can never reach
    u = lambda lo, hi: {"kind": "uniform", "lo": lo, "hi": hi}
    short = {"label": "A", "velocity": {"kind": "dirac", "atom": 2.0}, "origin": u(0.0, 0.2),
             "destination": u(0.1, 0.3), "schedule": u(0.0, 2.0)}
    d = {"journeys": [short], "true_N": [10],
         "grid": {"t_start": 0, "n_steps": 2, "step": 1}}
    cfgp = write_json(tmp_path / "c.json", d)
    counts = tmp_path / "n.csv"
    counts.write_text("day,counter_id,location,time_step,count\n0,0,0.5,0,3\n0,0,0.5,1,0\n")
    assert main(["estimate", "--config", cfgp, "--counts", str(counts),
                 "--out", str(tmp_path / "o")]) == 3


def test_consistency_outputs(tmp_path):
    res = ex.cmd_consistency(config_from_dict(small_dict()), out=tmp_path)
    assert res.estimates.shape == (3, 3, 4)
    lines = (tmp_path / "consistency.csv").read_text().splitlines()
    assert lines[0] == "J,journey,q05,q25,q50,q75,q95" and len(lines) == 1 + 3 * 4


def test_single_rung_ladder_repeats_estimate():
    cfg = config_from_dict(small_dict())
    res = ex.run_consistency(cfg, replicates=2, ladder=[6])
    for r in range(2):
        locs = ex.counters_for(cfg, cfg.seed, r)
        table = ex.theoretical_table(cfg, locs)
        ds = ex.generate_counts(cfg, locs, cfg.seed, r, table)
        assert np.allclose(res.estimates[r, 0], ex.estimate_day(cfg, table, ds).state.nu)


def test_identical_strategies_identical_reports():
    cfg = guiding_example()
    reps, _ = ex.cmd_strategies(cfg, strategies={"a": Uniform(0, 1), "b": Uniform(0, 1)})
    assert reps[0].determinant == reps[1].determinant
    assert np.array_equal(reps[0].slice_areas, reps[1].slice_areas)


def test_doubling_J_halves_slice_areas():
    cfg = guiding_example()
    s = {"d_u": cfg.strategies["d_u"]}
    a, _ = ex.cmd_strategies(cfg, strategies=s, J=15)
    b, _ = ex.cmd_strategies(cfg, strategies=s, J=30)
    assert np.allclose(b[0].slice_areas, a[0].slice_areas / 2, rtol=1e-12)
    assert np.all(a[0].slice_areas > 0) and a[0].determinant > 0


def test_manifest_lists_hashes_and_reruns_identical(tmp_path):
    cfg = config_from_dict(small_dict())
    for run in ("a", "b"):
        ex.cmd_simulate(cfg, out=tmp_path / run)
        ex.cmd_consistency(cfg, out=tmp_path / run / "cons")
    for sub in ("", "cons"):
        ma, mb = (read_manifest(tmp_path / r / sub) for r in ("a", "b"))
        assert ma == mb
        import hashlib
        for f in ma["files"]:
            data = (tmp_path / "a" / sub / f["path"]).read_bytes()
            assert hashlib.sha256(data).hexdigest() == f["sha256"]
    assert ex.cmd_simulate(cfg, seed=cfg.seed + 1)[0].counts.tolist() != \
        ex.cmd_simulate(cfg)[0].counts.tolist()


def test_empirical_mode_runs():
    cfg = config_from_dict(small_dict(attendance_mode="empirical"))
    locs = np.sort(ex.counters_for(cfg, 3, 0))
    tab = ex.estimation_table(cfg, locs, 3)
    theo = ex.theoretical_table(cfg, locs)
    assert tab.values.shape == theo.values.shape
    assert np.max(np.abs(tab.values - theo.values)) < 0.05


def test_pde_check_command(tmp_path):
    rows, dec = ex.cmd_pde_check(guiding_example(), out=tmp_path)
    assert dec < 1e-10
    ratios = [r[-1] for r in rows if not np.isnan(r[-1])]
    assert len(ratios) == 4 * 2 * 3
    assert all(3.5 <= q <= 4.5 for q in ratios)


def test_counts_file_written_by_simulate_parses(tmp_path):
    cfg = config_from_dict(small_dict(replicates=1))
    ds = ex.cmd_simulate(cfg)[0]
    assert write_counts(ds).startswith("day,counter_id")
