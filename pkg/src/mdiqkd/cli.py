"""Command-line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure,
3 valid analysis whose outcome is that the protocol aborts (zero key).
"""
from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import yaml

from . import analytic, coverage, lp_estimation, optimizer
from .config import ConfigError, RunConfig, load
from .protocol import read_blocks_csv

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_ABORT = 0, 1, 2, 3
OUT_DIR_ENV = "MDIQKD_OUT_DIR"

log = logging.getLogger("mdiqkd")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mdiqkd", description="Finite-key key rates for measurement-device-independent QKD.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, text in (("keyrate", "key rate of one configuration (optimised if no point is given)"),
                       ("estimate", "certified yields from a counts file, with both estimators"),
                       ("sweep", "optimised rates along the configured grids"),
                       ("coverage", "Monte-Carlo coverage of the bounds")):
        s = sub.add_parser(name, help=text, description=text)
        s.add_argument("--config", required=True, help="YAML run configuration")
        s.add_argument("--out-dir", help=f"output directory (overrides ${OUT_DIR_ENV} and the config)")
        s.add_argument("--seed", type=int, help="top-level seed (overrides the config)")
        s.add_argument("--estimator", choices=("analytic", "lp"), help="decoy estimator (overrides the config)")
        if name == "estimate":
            s.add_argument("--counts", help="counts CSV (overrides the config)")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def _out_dir(args, cfg: RunConfig) -> Path:
    path = Path(args.out_dir or os.environ.get(OUT_DIR_ENV) or cfg.out_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_manifest(out: Path, cfg: RunConfig, command: str) -> None:
    """Record the seed and the effective settings next to the outputs."""
    s = cfg.settings
    doc = {"command": command, "config": cfg.source, "seed": cfg.seed, "estimator": s.estimator,
           "N": cfg.N, "distance_km": cfg.distance, "eps_total": s.eps_total, "eps_cor": s.eps_cor,
           "zeta": s.zeta, "e_tol": s.e_tol, "phase_tol": s.phase_tol, "m_cut": s.m_cut,
           "channel": {k: getattr(s.channel, k) for k in s.channel.__dataclass_fields__ if k != "distance_km"}}
    (out / f"{command}_manifest.yaml").write_text(yaml.safe_dump(doc, sort_keys=True))


def cmd_keyrate(cfg: RunConfig, out: Path) -> int:
    if cfg.point is not None:
        pt = optimizer.evaluate_rate(cfg.point, cfg.N, cfg.distance, cfg.settings, cfg.space)
    else:
        pt = optimizer.optimize(cfg.N, cfg.distance, cfg.settings, cfg.space, cfg.budget)
    optimizer.write_sweep_csv([pt], out / "keyrate.csv")
    print(f"distance {pt.distance:g} km, N {pt.N:.3g}, estimator {pt.estimator}")
    print(f"rate l/N = {pt.rate:.6g}  (l = {pt.rate * pt.N:.6g} bits)")
    for k in optimizer.PARAM_NAMES:
        print(f"  {k:13s} {pt.params[k]:.6g}")
    for k, reason in pt.reasons.items():
        print(f"  {k}: {reason}")
    if cfg.point is None and not pt.converged:
        print("warning: the search stopped before converging", file=sys.stderr)
    return EXIT_OK if pt.rate > 0 else EXIT_ABORT


_EST_FIELDS = ("m_k0", "n_k0", "m_k1", "n_k1", "nbar_k1", "ebar_k1", "e_k1_count", "e_k1", "unestimable")


def cmd_estimate(cfg: RunConfig, out: Path) -> int:
    if cfg.counts is None:
        raise ConfigError("estimate needs a counts file (estimate.counts or --counts)")
    if cfg.point is None:
        raise ConfigError("estimate needs protocol.point for the intensities and probabilities")
    proto = cfg.space.config(cfg.point, cfg.settings.e_tol, cfg.settings.phase_tol)
    try:
        blocks = read_blocks_csv(cfg.counts, proto, cfg.N)
    except OSError as exc:
        raise ConfigError(f"cannot read counts file {cfg.counts}: {exc.strerror}") from None
    except ValueError as exc:
        raise ConfigError(f"bad counts file: {exc}") from None
    if not blocks:
        raise ConfigError(f"{cfg.counts}: no counts")
    budget = cfg.settings.budget
    rows = []
    for blk in blocks:
        st = budget.states[blk.bell_state]
        results = {"analytic": analytic.estimate(blk, analytic.AnalyticEps.from_totals(st.eps_k0, st.eps_k1, st.eps_ke),
                                                 cfg.settings.convention)}
        results["lp"] = lp_estimation.estimate(blk, st.eps_k0, st.eps_k1, st.eps_ke,
                                               lp_estimation.PhotonCutSet(cfg.settings.m_cut))
        for name, est in results.items():
            rows.append({"k": blk.bell_state, "estimator": name,
                         **{f: (repr(float(getattr(est, f))) if f == "e_k1" else int(getattr(est, f)))
                            for f in _EST_FIELDS}})
    with open(out / "estimates.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["k", "estimator", *_EST_FIELDS], lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    print(f"{'k':10s} {'estimator':9s} " + " ".join(f"{f:>12s}" for f in _EST_FIELDS))
    for r in rows:
        print(f"{r['k']:10s} {r['estimator']:9s} " + " ".join(f"{str(r[f]):>12.12s}" for f in _EST_FIELDS))
    return EXIT_OK


def cmd_sweep(cfg: RunConfig, out: Path) -> int:
    if not cfg.sweeps:
        raise ConfigError("no sweeps configured")
    for sw in cfg.sweeps:
        points = optimizer.sweep(sw.axis, sw.grid, sw.N, sw.distance, cfg.settings, cfg.space, cfg.budget,
                                 workers=cfg.workers)
        path = out / f"{sw.name}.csv"
        optimizer.write_sweep_csv(points, path)
        failed = sum(1 for p in points if "failure" in p.reasons)
        print(f"{sw.name}: {len(points)} points -> {path}" + (f" ({failed} failed)" if failed else ""))
    return EXIT_OK


def cmd_coverage(cfg: RunConfig, out: Path) -> int:
    cov = cfg.coverage
    results = coverage.run_suite(cov.levels, cov.trials, cov.lp_trials, cfg.seed)
    coverage.write_csv(results, out / "coverage.csv")
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name} level={r.level:g} "
              f"violations={r.violations}/{r.trials} stated={r.stated:.3g} p={r.p_value:.3g}")
    ok = all(r.passed for r in results)
    if cov.soundness_instances:
        rep = coverage.planted_soundness(cov.soundness_instances, cfg.seed)
        print(f"{'PASS' if rep.passed else 'FAIL'} planted soundness: {rep.instances} instances, "
              f"analytic {rep.analytic_violations}/{rep.analytic_checked}, lp {rep.lp_violations}/{rep.lp_checked}")
        ok = ok and rep.passed
    return EXIT_OK if ok else EXIT_RUNTIME


COMMANDS = {"keyrate": cmd_keyrate, "estimate": cmd_estimate, "sweep": cmd_sweep, "coverage": cmd_coverage}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.estimator is not None:
            cfg.settings = replace(cfg.settings, estimator=args.estimator)
        if getattr(args, "counts", None):
            cfg.counts = args.counts
        out = _out_dir(args, cfg)
        np.random.seed(cfg.seed)  # nothing should draw from it; pinned for safety
        code = COMMANDS[args.command](cfg, out)
        _write_manifest(out, cfg, args.command)
        return code
    except ConfigError as exc:
        print(f"mdiqkd: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001  report, do not trace back
        log.debug("runtime failure", exc_info=True)
        print(f"mdiqkd: runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
