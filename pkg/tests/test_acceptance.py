"""Acceptance checks, one test per criterion.

Each test records a PASS/FAIL line that is printed in the terminal summary
(and immediately, when run with ``-s``).
"""
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
import yaml

import conftest
from mdiqkd import cli, coverage, optimizer
from mdiqkd.optimizer import Settings
from mdiqkd.simplex import solve_lp

from test_formulas import CASES, REL
from test_simplex import random_lp
from vertex_oracle import vertex_optimum

pytestmark = pytest.mark.slow
ROOT = Path(__file__).resolve().parents[1]


def report(num, ok, text):
    line = f"criterion {num}: {'PASS' if ok else 'FAIL'}  {text}"
    conftest.ACCEPTANCE[num] = line
    print(line)
    return ok


def test_c1_rate_at_75km():
    t0 = time.perf_counter()
    pt = optimizer.optimize(1e13, 75.0, replace(Settings(), estimator="lp"))
    elapsed = time.perf_counter() - t0
    target = 1e-7 / 3.0
    ok = pt.rate >= target and elapsed <= 600
    assert report(1, ok, f"l/N at 75 km, N=1e13 = {pt.rate:.3e} (need >= {target:.3e}), {elapsed:.0f} s")


def test_c2_positive_rate_horizons():
    finite = {est: optimizer.optimize(1e14, 150.0, replace(Settings(), estimator=est)).rate
              for est in ("analytic", "lp")}
    asym_150 = optimizer.asymptotic(160.0)[0]
    asym_250 = optimizer.asymptotic(250.0)[0]
    ok = max(finite.values()) > 0 and asym_150 > 0 and asym_250 == 0
    text = (f"N=1e14 at 150 km: analytic {finite['analytic']:.3e}, lp {finite['lp']:.3e}; "
            f"asymptote 160 km {asym_150:.3e}, 250 km {asym_250:.3e}")
    assert report(2, ok, text)


def test_c3_rate_versus_block_size():
    grid = [1e11, 1e12, 1e13, 1e14, 1e15, 1e16, 1e17, 1e18]
    rates = [p.rate for p in optimizer.sweep("N", grid, distance=0.0)]
    asym = optimizer.asymptotic(0.0)[0]
    positive = rates[0] > 0
    monotone = all(b >= a for a, b in zip(rates, rates[1:]))
    close = abs(rates[-1] - asym) <= 0.05 * asym
    text = (f"1e11 rate {rates[0]:.3e}, monotone {monotone}, "
            f"1e18 rate {rates[-1]:.3e} vs asymptote {asym:.3e} (ratio {rates[-1] / asym:.3f})")
    assert report(3, positive and monotone and close, text)


def test_c4_bound_coverage():
    t0 = time.perf_counter()
    results = coverage.run_suite((0.1, 0.01), trials=100_000, lp_trials=20, seed=0)
    elapsed = time.perf_counter() - t0
    failed = [r.name for r in results if not r.passed]
    elementary = [r for r in results if not r.name.startswith("lp.")]
    ok = not failed and elapsed <= 300 and all(r.trials >= 100_000 for r in elementary)
    assert report(4, ok, f"{len(results)} checks, failed {failed or 'none'}, {elapsed:.0f} s")


def test_c5_planted_soundness():
    rep = coverage.planted_soundness(1000, seed=0)
    text = (f"{rep.instances} instances, analytic {rep.analytic_violations}/{rep.analytic_checked}, "
            f"lp {rep.lp_violations}/{rep.lp_checked} violations")
    assert report(5, rep.instances >= 1000 and rep.passed and rep.analytic_checked > 0 and rep.lp_checked > 0,
                  text)


def test_c6_simplex_vs_vertex_enumeration():
    rng = np.random.default_rng(6)
    worst, mismatched = 0.0, 0
    for _ in range(500):
        lp = random_lp(rng)
        ref = vertex_optimum(lp)
        sol = solve_lp(lp)
        if ref is None:
            mismatched += sol.status != "infeasible"
            continue
        if sol.status != "optimal":
            mismatched += 1
            continue
        err = abs(sol.objective - ref) / max(1.0, abs(ref))
        worst = max(worst, err)
        mismatched += err > 1e-6
    assert report(6, mismatched == 0, f"500 LPs, {mismatched} mismatches, worst error {worst:.1e}")


def test_c7_sweep_determinism(tmp_path):
    raw = yaml.safe_load((ROOT / "configs" / "example.yaml").read_text())
    raw["estimate"]["counts"] = str(ROOT / "configs" / raw["estimate"]["counts"])
    cfg = tmp_path / "run.yaml"
    cfg.write_text(yaml.safe_dump(raw))
    outs = []
    for run in ("first", "second"):
        assert cli.main(["sweep", "--config", str(cfg), "--out-dir", str(tmp_path / run)]) == 0
        outs.append(sorted((tmp_path / run).glob("*.csv")))
    same = [a.name for a in outs[0]] == [b.name for b in outs[1]] and all(
        a.read_bytes() == b.read_bytes() for a, b in zip(*outs))
    assert report(7, bool(outs[0]) and same, f"{len(outs[0])} sweep CSV files byte-identical: {same}")


def test_c8_formula_oracle(frozen):
    bad = [k for k, f in CASES.items() if float(f()) != pytest.approx(frozen[k], rel=REL, abs=0.0)]
    ok = not bad and set(CASES) == set(frozen)
    assert report(8, ok, f"{len(frozen)} oracle values at rel {REL:g}, mismatched {bad or 'none'}")
