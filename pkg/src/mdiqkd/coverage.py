"""Monte-Carlo coverage and planted-truth soundness checks.

A planted source fixes photon-number yields, so every simulated run comes
with the quantities the estimators are meant to bound: the number of
detections with each photon-number pair, how they split over intensity
pairs and how many of them end up in the key sample.

Coverage counts how often a bound fails and compares the frequency with
the failure probability it claims, using a one-sided binomial test.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.stats import binomtest

from . import analytic, bounds, lp_estimation
from .bounds import TailBudget
from .channel import _HYPER_LIMIT, ChannelParams, hypergeometric, photon_yields
from .protocol import BELL_STATES, DecoyIntensities, ProtocolConfig, SelectionProbs, block_from_counts

# a coverage check fails when H0 "rate <= stated" is rejected at this level
SIGNIFICANCE = 0.01


@dataclass
class CoverageResult:
    name: str
    level: float
    trials: int
    violations: int
    stated: float

    @property
    def rate(self) -> float:
        return self.violations / self.trials if self.trials else 0.0

    @property
    def p_value(self) -> float:
        if self.trials == 0:
            return 1.0
        return float(binomtest(self.violations, self.trials, min(self.stated, 1.0),
                               alternative="greater").pvalue)

    @property
    def passed(self) -> bool:
        return self.p_value >= SIGNIFICANCE

    def row(self) -> dict:
        return {"check": self.name, "level": repr(self.level), "trials": self.trials,
                "violations": self.violations, "rate": repr(self.rate), "stated": repr(self.stated),
                "p_value": repr(self.p_value), "passed": int(self.passed)}


# --- elementary bounds -----------------------------------------------------

def chernoff_coverage(p_groups, n_groups, gamma: float, trials: int, rng) -> CoverageResult:
    """Sum of independent Bernoullis with per-group success probabilities."""
    p_groups = np.asarray(p_groups, float)
    n_groups = np.asarray(n_groups, np.int64)
    n = float(n_groups.sum())
    mu = float((p_groups * n_groups).sum())
    x = rng.binomial(n_groups, p_groups, size=(trials, len(p_groups))).sum(axis=1).astype(float)
    lo, hi, gam, _, _ = bounds.chernoff_deviations(x, np.full_like(x, n), TailBudget.uniform(gamma))
    bad = (x - mu > hi) | (mu - x > lo)
    return CoverageResult(f"chernoff_interval(n={int(n)},mu={mu:g})", gamma, trials, int(bad.sum()),
                          float(gam.max()))


def photon_interval_coverage(p: float, N: int, gamma: float, trials: int, rng) -> CoverageResult:
    """Fraction of ``N`` pulses carrying a given photon pair."""
    lo, hi = lp_estimation.photon_interval(p, N, gamma / 2.0, gamma / 2.0)
    d = rng.binomial(N, p, size=trials) / N - p
    bad = (d < -lo) | (d > hi)
    return CoverageResult(f"photon_interval(N={N},p={p:g})", gamma, trials, int(bad.sum()), gamma)


def serfling_coverage(population: int, marked: int, sample: int, gamma: float, trials: int,
                      rng) -> CoverageResult:
    """Marked items in a sample drawn without replacement (``serfling_scale``)."""
    bound = analytic.serfling_scale(marked, population, sample, gamma)
    h = rng.hypergeometric(marked, population - marked, sample, size=trials)
    return CoverageResult(f"serfling_scale(pop={population},marked={marked},n={sample})", gamma, trials,
                          int((h < bound).sum()), gamma)


def upsilon_coverage(n_key: int, n_test: int, errors: int, gamma: float, trials: int,
                     rng) -> CoverageResult:
    """Errors left in the key part after a random test/key split (phase errors)."""
    h = rng.hypergeometric(errors, n_key + n_test - errors, n_test, size=trials)
    bound = analytic.phase_error_count(np.full(trials, n_key), np.full(trials, n_test), h, gamma)
    return CoverageResult(f"serfling_upsilon(key={n_key},test={n_test},err={errors})", gamma, trials,
                          int(((errors - h) > bound).sum()), gamma)


def chi_coverage(n_key: int, n_test: int, errors: int, gamma: float, trials: int, rng) -> CoverageResult:
    """Key-string error rate against the inflated test-sample QBER."""
    h = rng.hypergeometric(errors, n_key + n_test - errors, n_test, size=trials)
    bound = h / n_test + bounds.qber_inflation_chi(n_key, n_test, gamma)
    return CoverageResult(f"qber_inflation_chi(key={n_key},test={n_test},err={errors})", gamma, trials,
                          int(((errors - h) / n_key > bound).sum()), gamma)


# --- planted sources -------------------------------------------------------

@dataclass
class PlantedSource:
    """Poissonian sources with prescribed photon-number yields.

    Yields vanish for ``n + m > m_max``, so no detection falls outside the
    photon-number cut of the LP.  ``errors_x`` holds the X-basis error
    yields.
    """

    config: ProtocolConfig
    n_pulses: float
    yields_z: np.ndarray
    yields_x: np.ndarray
    errors_x: np.ndarray
    bell_state: str = "psi_minus"
    m_max: int = 8

    def __post_init__(self):
        self.cut = lp_estimation.PhotonCutSet(self.m_max)
        idx = np.array(self.cut.members)
        self._n, self._m = idx[:, 0], idx[:, 1]
        self.models = {b: lp_estimation.SourceModel.poisson(self.config.alice.values, self.config.bob.values,
                                                            self.config.joint(b)) for b in ("Z", "X")}
        self.p_nm = {b: np.array([self.models[b].p_nm(n, m) for n, m in self.cut.members]) for b in ("Z", "X")}
        self.post = {b: np.array([self.models[b].posterior(n, m).ravel() for n, m in self.cut.members])
                     for b in ("Z", "X")}
        self.sent = {b: int(round(self.n_pulses * self.config.joint(b).sum())) for b in ("Z", "X")}
        self.yz = self.yields_z[self._n, self._m]
        self.yx = self.yields_x[self._n, self._m]
        self.ex = np.minimum(self.errors_x[self._n, self._m], self.yx)
        self.i11 = self.cut.index(1, 1)
        self.vac = self._n == 0
        if np.any((self.yz < 0) | (self.yz > 1) | (self.yx < 0) | (self.yx > 1) | (self.ex < 0)):
            raise ValueError("yields must lie in [0, 1]")

    @property
    def e11_x(self) -> float:
        return float(self.ex[self.i11] / self.yx[self.i11]) if self.yx[self.i11] > 0 else 0.0

    def _basis(self, rng, basis, trials):
        p = np.append(self.p_nm[basis], max(1.0 - self.p_nm[basis].sum(), 0.0))
        sent = rng.multinomial(self.sent[basis], p / p.sum(), size=trials)[:, :-1]
        if basis == "Z":
            det = rng.binomial(sent, self.yz)
            grid = rng.multinomial(det, self.post["Z"])
            return sent, det, grid, None, None
        det = rng.binomial(sent, self.yx)
        frac = np.divide(self.ex, self.yx, out=np.zeros_like(self.ex), where=self.yx > 0)
        err = rng.binomial(det, frac)
        grid_err = rng.multinomial(err, self.post["X"])
        grid = grid_err + rng.multinomial(det - err, self.post["X"])
        return sent, det, grid, err, grid_err

    def sample(self, rng, trials: int) -> dict:
        """Simulate ``trials`` runs.  Grids have shape ``(trials, 3, 3)``."""
        sz, dz, gz, _, _ = self._basis(rng, "Z", trials)
        sx, dx, gx, ex, gxe = self._basis(rng, "X", trials)
        z = gz.sum(axis=1).reshape(trials, 3, 3)
        pop = z[:, 0, 0]
        vac_ss = gz[:, self.vac, 0].sum(axis=1)
        s11_ss = gz[:, self.i11, 0]
        phase = rng.binomial(s11_ss, self.e11_x)
        n_k = np.floor(self.config.n_k_fraction * pop).astype(np.int64)
        vac_key = _hypergeom(rng, vac_ss, pop - vac_ss, n_k)
        s11_key = _hypergeom(rng, s11_ss, pop - vac_ss - s11_ss, n_k - vac_key)
        phase_key = _hypergeom(rng, phase, s11_ss - phase, s11_key)
        return {
            "z": z, "x": gx.sum(axis=1).reshape(trials, 3, 3), "xe": gxe.sum(axis=1).reshape(trials, 3, 3),
            "n_k": n_k, "sent_z": sz, "det_z": dz, "sent_x": sx, "det_x": dx, "err_x": ex,
            "mean_z": dz @ self.post["Z"], "mean_x": dx @ self.post["X"], "mean_xe": ex @ self.post["X"],
            "mu0": dz[:, self.vac] @ self.post["Z"][self.vac, 0],
            "vac_ss": vac_ss, "s11_ss": s11_ss, "vac_key": vac_key, "s11_key": s11_key,
            "phase_key": phase_key, "s11_x": dx[:, self.i11], "e11_x": ex[:, self.i11],
        }

    def block(self, run: dict, t: int = 0, qber: float = 0.01):
        """Observation block of trial ``t``."""
        return block_from_counts(self.bell_state, self.config, run["z"][t], run["x"][t], run["xe"][t], qber,
                                 n_z_pulses=self.sent["Z"], n_x_pulses=self.sent["X"])


def _hypergeom(rng, good, bad, draws):
    good, bad, draws = (np.asarray(v, np.int64) for v in (good, bad, draws))
    g, b, d = np.broadcast_arrays(good, bad, draws)
    out = np.zeros(g.shape, np.int64)
    ok = (g > 0) & (d > 0)
    small = ok & (g < _HYPER_LIMIT) & (b < _HYPER_LIMIT)
    if np.any(small):
        out[small] = rng.hypergeometric(g[small], b[small], d[small])
    for idx in zip(*np.nonzero(ok & ~small)):
        out[idx] = hypergeometric(rng, g[idx], b[idx], d[idx])
    return out


def channel_source(config: ProtocolConfig, n_pulses: float, channel: ChannelParams = ChannelParams(),
                   bell_state: str = "psi_minus", m_max: int = 8) -> PlantedSource:
    """Planted source whose yields come from the channel model (truncated at ``m_max``)."""
    y = photon_yields(m_max, channel)
    yz, _ = y[(bell_state, "Z")]
    yx, ex = y[(bell_state, "X")]
    n, m = np.indices(yz.shape)
    keep = (n + m) <= m_max
    return PlantedSource(config, n_pulses, yz * keep, yx * keep, ex * keep, bell_state, m_max)


def random_source(rng, m_max: int = 8) -> PlantedSource:
    """Random intensities, selection probabilities, yields and block size."""
    def side():
        s = rng.uniform(0.1, 0.8)
        d1 = s * rng.uniform(0.05, 0.5)
        d2 = d1 * rng.uniform(0.0, 0.3)
        return DecoyIntensities(s, d1, d2)

    q = rng.dirichlet([4.0, 2.0, 2.0])
    q = np.maximum(q, 0.02)
    q /= q.sum()
    probs = SelectionProbs.from_fractions(q[0], q[1], rng.uniform(0.5, 0.95), rng.uniform(0.2, 0.8))
    config = ProtocolConfig(side(), side(), probs, probs, n_k_fraction=rng.uniform(0.8, 0.99))
    eta_a, eta_b = 10.0 ** rng.uniform(-2.5, -0.5, size=2)
    dark = 10.0 ** rng.uniform(-7, -4)
    n, m = np.indices((m_max + 1, m_max + 1))
    base = dark + (1 - dark) * (1 - (1 - eta_a) ** n) * (1 - (1 - eta_b) ** m)
    keep = (n + m) <= m_max
    yz = base * rng.uniform(0.5, 1.0, size=base.shape) * keep
    yx = base * rng.uniform(0.5, 1.0, size=base.shape) * keep
    ex = yx * rng.uniform(0.0, 0.5, size=base.shape)
    ex[1, 1] = yx[1, 1] * rng.uniform(0.0, 0.1)
    n_pulses = 10.0 ** rng.uniform(9, 12)
    return PlantedSource(config, n_pulses, yz, yx, ex, m_max=m_max)


# --- estimator checks ------------------------------------------------------

def _inside(x, mean, gamma):
    """Whether every cell's mean lies inside the certified interval of its count."""
    lo, hi, _ = analytic.count_deviations(x, gamma)
    return np.all((mean >= x - hi - 1e-9 * (1 + x)) & (mean <= x + lo + 1e-9 * (1 + x)), axis=(-2, -1))


def analytic_gates(src: PlantedSource, run: dict, eps: analytic.AnalyticEps) -> dict:
    """Per-trial flags saying whether every fluctuation behind a bound is in range."""
    pop = run["z"][:, 0, 0].astype(float)
    n_k = run["n_k"].astype(float)
    okz = _inside(run["z"], run["mean_z"].reshape(-1, 3, 3), eps.gamma_z)
    okx = _inside(run["x"], run["mean_x"].reshape(-1, 3, 3), eps.gamma_x)
    oke = _inside(run["xe"], run["mean_xe"].reshape(-1, 3, 3), eps.gamma_e)
    mu1 = run["det_z"][:, src.i11] * src.post["Z"][src.i11, 0]
    tail0 = run["vac_ss"] >= run["mu0"] - bounds.g_dev(run["mu0"], eps.eps0)
    tail1 = run["s11_ss"] >= mu1 - bounds.g_dev(mu1, eps.eps1)
    return {"z": okz, "x": okx, "xe": oke, "m0": okz & tail0, "m1": okz & tail1,
            "n0": okz & tail0 & _serfling_ok(run["vac_key"], run["vac_ss"], pop, n_k, eps.eps0_serf),
            "n1": okz & tail1 & _serfling_ok(run["s11_key"], run["s11_ss"], pop, n_k, eps.eps1_serf)}


def _serfling_ok(drawn, marked, pop, n_k, eps):
    ok = (pop >= 1) & (n_k >= 1)
    p = np.where(ok, pop, 1.0)
    n = np.where(ok, n_k, 1.0)
    lam = bounds.serfling_lambda(p, n, eps)
    return ~ok | (drawn >= n * marked / p - n * lam)


def _phase_truth(run):
    return np.where(run["s11_key"] > 0, run["phase_key"] / np.maximum(run["s11_key"], 1), 0.0)


def analytic_violations(src: PlantedSource, run: dict, eps: analytic.AnalyticEps) -> dict:
    """Boolean violation arrays of every analytic output."""
    r = analytic.estimate_arrays(run["z"], run["x"], run["xe"], run["n_k"], src.config.alice.values,
                                 src.config.bob.values, src.config.joint("Z"), src.config.joint("X"), eps)
    return {
        "m_k0": r["m_k0"] > run["vac_ss"],
        "n_k0": r["n_k0"] > run["vac_key"],
        "m_k1": r["m_k1"] > run["s11_ss"],
        "n_k1": r["n_k1"] > run["s11_key"],
        "nbar_k1": r["nbar_k1"] > run["s11_x"],
        "ebar_k1": r["ebar_raw"] < run["e11_x"],
        "e_k1": (r["e_k1_count"] >= 0) & (r["n_k1"] > 0) & (r["e_k1"] < _phase_truth(run)),
    }


def analytic_stated(eps: analytic.AnalyticEps) -> dict:
    return {
        "m_k0": eps.eps0 + 3 * eps.gamma_z, "n_k0": eps.eps_k0,
        "m_k1": eps.eps1 + 9 * eps.gamma_z, "n_k1": eps.eps_k1,
        "nbar_k1": 9 * eps.gamma_x, "ebar_k1": 9 * eps.gamma_e, "e_k1": eps.eps_ke + eps.eps_k1,
    }


def estimator_coverage(src: PlantedSource, gamma: float, trials: int, rng, chunk: int = 10_000) -> list:
    """Coverage of the analytic outputs with every budget set to ``gamma``."""
    eps = analytic.AnalyticEps.from_totals(gamma, gamma, gamma)
    counts: dict = {}
    done = 0
    while done < trials:
        size = min(chunk, trials - done)
        for k, v in analytic_violations(src, src.sample(rng, size), eps).items():
            counts[k] = counts.get(k, 0) + int(v.sum())
        done += size
    stated = analytic_stated(eps)
    return [CoverageResult(f"analytic.{k}", gamma, trials, counts[k], stated[k]) for k in stated]


def lp_coverage(src: PlantedSource, gamma: float, trials: int, rng) -> list:
    """Coverage of the LP outputs (one estimation per trial, hence slow)."""
    run = src.sample(rng, trials)
    keys = ("m_k0", "n_k0", "m_k1", "n_k1", "nbar_k1", "ebar_k1", "e_k1")
    counts = dict.fromkeys(keys, 0)
    cut = lp_estimation.PhotonCutSet(src.m_max)
    for t in range(trials):
        blk = src.block(run, t)
        est = lp_estimation.estimate(blk, gamma, gamma, gamma, cut)
        bad = _lp_violations(est, run, t)
        for k in keys:
            counts[k] += int(bad[k])
    stated = {"m_k0": 0.8 * gamma, "n_k0": gamma, "m_k1": 0.8 * gamma, "n_k1": gamma,
              "nbar_k1": gamma / 3.0, "ebar_k1": gamma / 3.0, "e_k1": 2.0 * gamma}
    return [CoverageResult(f"lp.{k}", gamma, trials, counts[k], stated[k]) for k in keys]


def _lp_violations(est, run, t) -> dict:
    d = est.diagnostics
    truth_rate = run["phase_key"][t] / run["s11_key"][t] if run["s11_key"][t] > 0 else 0.0
    return {
        "m_k0": est.m_k0 > run["vac_ss"][t], "n_k0": est.n_k0 > run["vac_key"][t],
        "m_k1": est.m_k1 > run["s11_ss"][t], "n_k1": est.n_k1 > run["s11_key"][t],
        "nbar_k1": est.nbar_k1 > run["s11_x"][t], "ebar_k1": d["n_sol_e11"] < run["e11_x"][t],
        "e_k1": (not est.unestimable) and est.n_k1 > 0 and est.e_k1 < truth_rate,
    }


# --- planted soundness -----------------------------------------------------

def _lp_planted_point(src: PlantedSource, run, t, basis, errors=False):
    """Planted variable vector of one estimation LP, in the LP's scaling."""
    grid = (run["z"] if basis == "Z" else (run["xe"] if errors else run["x"]))[t].ravel().astype(float)
    det = run["det_z"][t] if basis == "Z" else (run["err_x"][t] if errors else run["det_x"][t])
    sent = run["sent_z"][t] if basis == "Z" else run["sent_x"][t]
    scale = max(1.0, grid.sum())
    n_sent = src.sent[basis]
    delta = grid - det @ src.post[basis]
    d = sent - n_sent * src.p_nm[basis]
    return np.concatenate([det, d, delta]) / scale


@dataclass
class SoundnessReport:
    instances: int = 0
    analytic_checked: int = 0
    analytic_violations: int = 0
    lp_checked: int = 0
    lp_violations: int = 0

    @property
    def passed(self) -> bool:
        return self.analytic_violations == 0 and self.lp_violations == 0


def planted_soundness(instances: int, seed: int = 0, gamma: float = 1e-3, lp: bool = True) -> SoundnessReport:
    """Check every bound against planted truth whenever its fluctuations are in range.

    Each instance draws a random source and one run.  A bound counts as
    checked only when every interval it relies on contains the realised
    value; a checked bound that fails is a violation.
    """
    rng = np.random.default_rng(seed)
    rep = SoundnessReport()
    eps = analytic.AnalyticEps.from_totals(gamma, gamma, gamma)
    for _ in range(instances):
        src = random_source(rng)
        run = src.sample(rng, 1)
        rep.instances += 1
        gates = analytic_gates(src, run, eps)
        bad = analytic_violations(src, run, eps)
        ups_ok = _upsilon_gate(run, eps.eps_e_serf)
        need = {"m_k0": gates["m0"], "n_k0": gates["n0"], "m_k1": gates["m1"], "n_k1": gates["n1"],
                "nbar_k1": gates["x"], "ebar_k1": gates["xe"],
                "e_k1": gates["n1"] & gates["x"] & gates["xe"] & ups_ok}
        for k, ok in need.items():
            if ok[0]:
                rep.analytic_checked += 1
                rep.analytic_violations += int(bad[k][0])
        if lp:
            c, v = _lp_soundness(src, run, gamma)
            rep.lp_checked += c
            rep.lp_violations += v
    return rep


def _upsilon_gate(run, eps):
    x = run["s11_key"].astype(float)
    y = run["s11_x"].astype(float)
    ok = (x > 0) & (y >= 1)
    ups = bounds.serfling_upsilon(np.where(ok, x, 0.0), np.where(ok, y, 1.0), eps)
    return ok & (run["phase_key"] <= x * run["e11_x"] / np.maximum(y, 1) + (x + y) * ups)


def _lp_soundness(src: PlantedSource, run, gamma: float) -> tuple[int, int]:
    """LP checks of one run: (checked, violated)."""
    blk = src.block(run, 0)
    if blk.n_k < 1:
        return 0, 0
    cut = src.cut
    est = lp_estimation.estimate(blk, gamma, gamma, gamma, cut)
    nc = cut.size
    part0, part1, third = gamma / 5.0, gamma / 5.0, gamma / 3.0
    lp0 = lp_estimation.LpEps(part0, part0 / 9.0, part0 / nc)
    lp1 = lp_estimation.LpEps(part1, part1 / 9.0, part1 / nc)
    lpe = lp_estimation.LpEps(third / 3.0, third / 27.0, third / 3.0 / nc)
    feas = {}
    for name, (builder, point) in {
        "vac": (lambda: lp_estimation.build_yield_lp(blk, cut, lp0, "vacuum_row"), ("Z", False)),
        "s11": (lambda: lp_estimation.build_yield_lp(blk, cut, lp1, "S11"), ("Z", False)),
        "s11x": (lambda: lp_estimation.build_yield_lp(blk, cut, lpe, "S11", basis="X"), ("X", False)),
        "e11": (lambda: lp_estimation.build_error_lp(blk, cut, lpe), ("X", True)),
    }.items():
        lp, _ = builder()
        x = _lp_planted_point(src, run, 0, *point)
        feas[name] = lp.residual(x) <= 1e-9 * (1.0 + np.abs(x).max())
    pop, n_k = float(blk.z_signal), float(blk.n_k)
    mu1 = run["det_z"][0, src.i11] * src.post["Z"][src.i11, 0]
    tail0 = run["vac_ss"][0] >= run["mu0"][0] - bounds.g_dev(run["mu0"][0], part0)
    tail1 = run["s11_ss"][0] >= mu1 - bounds.g_dev(mu1, part1)
    serf0 = bool(_serfling_ok(run["vac_key"], run["vac_ss"], pop, n_k, part0)[0])
    serf1 = bool(_serfling_ok(run["s11_key"], run["s11_ss"], pop, n_k, part1)[0])
    d = est.diagnostics
    truth_rate = _phase_truth(run)[0]
    checks = [
        (feas["vac"], d["n_sol_vacuum"] > run["mu0"][0] * (1 + 1e-9) + 1e-6),
        (feas["vac"] and tail0, est.m_k0 > run["vac_ss"][0]),
        (feas["vac"] and tail0 and serf0, est.n_k0 > run["vac_key"][0]),
        (feas["s11"], d["n_sol_s11"] > run["det_z"][0, src.i11] * (1 + 1e-9) + 1e-6),
        (feas["s11"] and tail1 and serf1, est.n_k1 > run["s11_key"][0]),
        (feas["s11x"], est.nbar_k1 > run["s11_x"][0]),
        (feas["e11"], d["n_sol_e11"] < run["e11_x"][0] * (1 - 1e-9) - 1e-6),
        (feas["s11"] and tail1 and serf1 and feas["s11x"] and feas["e11"]
         and bool(_upsilon_gate(run, third)[0]) and est.n_k1 > 0 and not est.unestimable,
         est.e_k1 < truth_rate),
    ]
    checked = sum(1 for ok, _ in checks if ok)
    violated = sum(1 for ok, bad in checks if ok and bad)
    return checked, violated


# --- suite -----------------------------------------------------------------

def default_source(n_pulses: float = 1e11) -> PlantedSource:
    """Channel-model source at zero distance with typical intensities."""
    alice = DecoyIntensities(0.35, 0.05, 5e-4)
    bob = DecoyIntensities(0.45, 0.06, 5e-4)
    probs = SelectionProbs.from_fractions(0.6, 0.25, 0.9, 0.3)
    return channel_source(ProtocolConfig(alice, bob, probs, probs, n_k_fraction=0.95), n_pulses)


def run_suite(levels=(0.1, 0.01), trials: int = 100_000, lp_trials: int = 0, seed: int = 0) -> list:
    """All coverage checks at every level.  Returns :class:`CoverageResult` rows."""
    rng = np.random.default_rng(seed)
    src = default_source()
    out = []
    for g in levels:
        out.append(chernoff_coverage([0.3, 0.05, 0.001], [200, 2000, 20000], g, trials, rng))
        out.append(chernoff_coverage([1e-3], [10**6], g, trials, rng))
        out.append(photon_interval_coverage(1e-3, 10**6, g, trials, rng))
        out.append(photon_interval_coverage(0.3, 10**4, g, trials, rng))
        out.append(serfling_coverage(10**5, 3 * 10**4, 10**4, g, trials, rng))
        out.append(upsilon_coverage(5000, 2000, 300, g, trials, rng))
        out.append(chi_coverage(10**4, 10**3, 300, g, trials, rng))
        out.extend(estimator_coverage(src, g, trials, rng))
        if lp_trials:
            out.extend(lp_coverage(src, g, lp_trials, rng))
    return out


def write_csv(results, path) -> None:
    rows = [r.row() for r in results]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]) if rows else ["check"], lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
