"""Monte-Carlo coverage harness: pass logic, planted sources, small runs."""
import csv

import numpy as np
import pytest

from mdiqkd import coverage


def test_result_accepts_rate_below_stated():
    r = coverage.CoverageResult("x", 0.01, 10_000, 80, 0.01)
    assert r.rate == pytest.approx(0.008)
    assert r.passed


def test_result_rejects_clear_excess():
    # twice the stated rate over 1e4 trials is far outside binomial noise
    r = coverage.CoverageResult("x", 0.01, 10_000, 200, 0.01)
    assert r.p_value < 1e-6
    assert not r.passed


def test_result_zero_trials():
    r = coverage.CoverageResult("x", 0.1, 0, 0, 0.1)
    assert r.rate == 0.0 and r.p_value == 1.0 and r.passed


def test_harness_detects_undersized_interval():
    # a 1-sigma interval misses about 32% of the time; stated 1% must fail
    rng = np.random.default_rng(1)
    n, p, trials = 10_000, 0.1, 5_000
    x = rng.binomial(n, p, size=trials)
    half = np.sqrt(n * p * (1 - p))
    bad = int((np.abs(x - n * p) > half).sum())
    assert not coverage.CoverageResult("naive", 0.01, trials, bad, 0.01).passed


def test_elementary_checks_pass_small():
    rng = np.random.default_rng(2)
    for r in (coverage.chernoff_coverage([0.3, 0.01], [500, 5000], 0.1, 2000, rng),
              coverage.photon_interval_coverage(0.01, 10**5, 0.1, 2000, rng),
              coverage.serfling_coverage(10**4, 3000, 1000, 0.1, 2000, rng),
              coverage.upsilon_coverage(2000, 1000, 150, 0.1, 2000, rng),
              coverage.chi_coverage(5000, 500, 100, 0.1, 2000, rng)):
        assert r.trials == 2000
        assert r.passed, r.row()


def test_planted_source_sample_shapes_and_conservation():
    src = coverage.default_source()
    run = src.sample(np.random.default_rng(3), 4)
    for key in ("z", "x", "xe"):
        assert run[key].shape == (4, 3, 3)
    # grid counts redistribute detections without loss
    np.testing.assert_array_equal(run["z"].sum(axis=(1, 2)), run["det_z"].sum(axis=1))
    np.testing.assert_array_equal(run["x"].sum(axis=(1, 2)), run["det_x"].sum(axis=1))
    np.testing.assert_array_equal(run["xe"].sum(axis=(1, 2)), run["err_x"].sum(axis=1))
    assert np.all(run["xe"] <= run["x"])
    assert np.all(run["det_z"] <= run["sent_z"])
    assert np.all(run["s11_key"] <= run["s11_ss"])
    assert np.all(run["phase_key"] <= run["s11_key"])
    assert np.all(run["vac_key"] + run["s11_key"] <= run["n_k"])


def test_planted_source_block_roundtrip():
    src = coverage.default_source()
    run = src.sample(np.random.default_rng(4), 1)
    blk = src.block(run)
    assert blk.n_z_pulses == src.sent["Z"]
    assert blk.n_x_pulses == src.sent["X"]


def test_planted_source_rejects_bad_yields():
    src = coverage.default_source()
    bad = src.yields_z.copy()
    bad[1, 1] = 1.5
    with pytest.raises(ValueError):
        coverage.PlantedSource(src.config, src.n_pulses, bad, src.yields_x, src.errors_x)


def test_estimator_coverage_small():
    rng = np.random.default_rng(5)
    res = coverage.estimator_coverage(coverage.default_source(), 0.1, 1000, rng)
    assert res
    assert all(r.passed for r in res), [r.row() for r in res if not r.passed]


def test_run_suite_and_csv(tmp_path):
    res = coverage.run_suite(levels=(0.1,), trials=500, seed=6)
    assert all(r.level == 0.1 for r in res)
    assert all(r.passed for r in res), [r.row() for r in res if not r.passed]
    path = tmp_path / "c.csv"
    coverage.write_csv(res, path)
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == len(res)
    assert set(rows[0]) == {"check", "level", "trials", "violations", "rate", "stated", "p_value", "passed"}


def test_run_suite_deterministic():
    a = coverage.run_suite(levels=(0.1,), trials=200, seed=9)
    b = coverage.run_suite(levels=(0.1,), trials=200, seed=9)
    assert [r.violations for r in a] == [r.violations for r in b]


def test_planted_soundness_small():
    rep = coverage.planted_soundness(5, seed=11)
    assert rep.instances == 5
    assert rep.analytic_checked > 0
    assert rep.passed
