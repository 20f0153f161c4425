"""Rate evaluation, parameter optimisation and sweeps.

Rates are forecasts: the expected counts of the channel model stand in for
the observations.  The search runs in a transformed space where every free
parameter lives on the real line: intensities through a log-scaled box and
probabilities through a logistic box.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from . import analytic, keyrate, lp_estimation
from .channel import ChannelParams, expected_block, gains, photon_yields
from .protocol import BELL_STATES, DecoyIntensities, ProtocolConfig, SelectionProbs

PARAM_NAMES = ("a_s", "a_d1", "b_s", "b_d1", "q_signal", "q_decoy1", "pz_signal", "pz_decoy", "n_k_fraction")
LOG_PARAMS = frozenset(PARAM_NAMES[:4])
SWEEP_COLUMNS = ("distance_km", "N", "rate", "a_s", "a_d1", "b_s", "b_d1", "n_k_fraction",
                 "estimator", "aborted_k")
INFEASIBLE = -1e300


@dataclass(frozen=True)
class SearchSpace:
    """Box bounds of the free parameters.

    Alice and Bob share one set of selection probabilities.  A parameter
    whose bounds coincide is held fixed.  The sifting thresholds follow from
    ``N`` and the probabilities, so they are not searched.
    """

    a_s: tuple = (0.02, 1.0)
    a_d1: tuple = (0.002, 0.5)
    b_s: tuple = (0.02, 1.0)
    b_d1: tuple = (0.002, 0.5)
    q_signal: tuple = (0.01, 0.98)
    q_decoy1: tuple = (0.01, 0.98)
    pz_signal: tuple = (0.5, 0.9999)
    pz_decoy: tuple = (0.0001, 0.9999)
    n_k_fraction: tuple = (0.5, 0.999)
    a_d2: float = 5e-4
    b_d2: float = 5e-4

    def __post_init__(self):
        for name in PARAM_NAMES:
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ValueError(f"empty range for {name}")
            if name in LOG_PARAMS and lo <= 0:
                raise ValueError(f"{name} must be positive")

    @classmethod
    def fixed(cls, point: dict, **kw) -> "SearchSpace":
        """Zero-width space around ``point``."""
        return cls(**{n: (point[n], point[n]) for n in PARAM_NAMES}, **kw)

    def free(self) -> list:
        return [n for n in PARAM_NAMES if getattr(self, n)[0] < getattr(self, n)[1]]

    def decode(self, u) -> dict:
        """Map unconstrained coordinates of the free parameters to a point."""
        point = {}
        it = iter(np.asarray(u, float))
        for name in PARAM_NAMES:
            lo, hi = getattr(self, name)
            if lo == hi:
                point[name] = lo
                continue
            s = 1.0 / (1.0 + math.exp(-float(np.clip(next(it), -40.0, 40.0))))
            if name in LOG_PARAMS:
                point[name] = math.exp(math.log(lo) + s * (math.log(hi) - math.log(lo)))
            else:
                point[name] = lo + s * (hi - lo)
        return point

    def encode(self, point: dict) -> np.ndarray:
        out = []
        for name in self.free():
            lo, hi = getattr(self, name)
            x = min(max(point[name], lo), hi)
            if name in LOG_PARAMS:
                s = (math.log(x) - math.log(lo)) / (math.log(hi) - math.log(lo))
            else:
                s = (x - lo) / (hi - lo)
            s = min(max(s, 1e-9), 1.0 - 1e-9)
            out.append(math.log(s / (1.0 - s)))
        return np.array(out)

    def config(self, point: dict, e_tol: float = 0.11, phase_tol: float = 0.3) -> ProtocolConfig | None:
        """Protocol settings for ``point``, or None if the point is inadmissible."""
        try:
            alice = DecoyIntensities(point["a_s"], point["a_d1"], self.a_d2)
            bob = DecoyIntensities(point["b_s"], point["b_d1"], self.b_d2)
            probs = SelectionProbs.from_fractions(point["q_signal"], point["q_decoy1"],
                                                  point["pz_signal"], point["pz_decoy"])
            return ProtocolConfig(alice, bob, probs, probs, point["n_k_fraction"], e_tol, phase_tol)
        except ValueError:
            return None


@dataclass(frozen=True)
class Settings:
    """Everything a rate evaluation needs besides the point, ``N`` and distance."""

    channel: ChannelParams = ChannelParams()
    eps_total: float = 1e-10
    eps_cor: float = 1e-15
    zeta: float = 1.16
    e_tol: float = 0.11
    phase_tol: float = 0.3
    estimator: str = "analytic"
    convention: str = "sound"
    m_cut: int = 8

    def __post_init__(self):
        if self.estimator not in ("analytic", "lp"):
            raise ValueError(f"unknown estimator {self.estimator!r}")

    @property
    def budget(self) -> keyrate.SecurityBudget:
        return keyrate.SecurityBudget.uniform(self.eps_total, self.eps_cor)


@dataclass
class RatePoint:
    distance: float
    N: float
    rate: float
    params: dict
    estimator: str
    aborted: list = field(default_factory=list)
    reasons: dict = field(default_factory=dict)
    raw: float = INFEASIBLE
    converged: bool = True
    evaluations: int = 1

    def __post_init__(self):
        if self.rate < 0:
            raise ValueError("rate must be nonnegative")

    def csv_row(self) -> dict:
        return {
            "distance_km": _fmt(self.distance), "N": _fmt(self.N), "rate": _fmt(self.rate),
            **{k: _fmt(self.params[k]) for k in ("a_s", "a_d1", "b_s", "b_d1", "n_k_fraction")},
            "estimator": self.estimator, "aborted_k": ";".join(self.aborted),
        }


def _fmt(x: float) -> str:
    return repr(float(x))


def _estimate(block, st: keyrate.StateBudget, settings: Settings):
    if settings.estimator == "analytic":
        eps = analytic.AnalyticEps.from_totals(st.eps_k0, st.eps_k1, st.eps_ke)
        return analytic.estimate(block, eps, settings.convention)
    cut = lp_estimation.PhotonCutSet(settings.m_cut)
    return lp_estimation.estimate(block, st.eps_k0, st.eps_k1, st.eps_ke, cut)


def evaluate_rate(point: dict, N: float, distance: float, settings: Settings = Settings(),
                  space: SearchSpace = SearchSpace()) -> RatePoint:
    """Key rate ``l / N`` of one parameter point under expected observations."""
    config = space.config(point, settings.e_tol, settings.phase_tol)
    if config is None:
        return RatePoint(distance, N, 0.0, dict(point), settings.estimator, list(BELL_STATES),
                         {k: "inadmissible" for k in BELL_STATES})
    channel = replace(settings.channel, distance_km=distance)
    budget = settings.budget
    _, blocks = expected_block(N, config, channel)
    estimates = []
    for blk in blocks:
        try:
            estimates.append(_estimate(blk, budget.states[blk.bell_state], settings))
        except (RuntimeError, ValueError, ArithmeticError):
            return RatePoint(distance, N, 0.0, dict(point), settings.estimator, list(BELL_STATES),
                             {k: "estimator_failure" for k in BELL_STATES})
    result = keyrate.assemble(blocks, estimates, budget, settings.e_tol, settings.phase_tol, settings.zeta)
    parts = [_score(s, blk, settings, N) for s, blk in zip(result.states, blocks)]
    positive = [x for x in parts if x > 0]
    # once some state yields key, the score is its rate; otherwise the guidance terms
    score = sum(positive) if positive else sum(parts)
    return RatePoint(distance, N, result.length / N, dict(point), settings.estimator,
                     result.aborted_states, {s.bell_state: s.reason for s in result.states if s.reason},
                     score)


def _score(state: keyrate.StateResult, block, settings: Settings, N: float) -> float:
    """Search objective of one Bell state.

    A positive unclamped length scores as its rate.  A nonpositive one
    scores as half its length per key bit, clipped to [-1/2, 0], so the
    search is not rewarded for shrinking the key set.  Gated states score
    below -1, by their distance to the gate.
    """
    if state.reason in ("", "nonpositive_length"):
        if state.raw_length > 0:
            return state.raw_length / N
        return 0.5 * max(state.raw_length / max(block.n_k, 1), -1.0)
    est = state.estimates
    if state.reason == "E_tol":
        excess = 3.0 + block.qber - settings.e_tol
    elif state.reason == "e_tol":
        excess = 1.0 + est.e_k1 - settings.phase_tol
    else:
        excess = 2.0
    return -excess


# deterministic starting points (physical values, clipped into the space)
_STARTS = (
    (0.30, 0.05, 0.30, 0.05, 0.60, 0.20, 0.95, 0.20, 0.990),
    (0.20, 0.03, 0.20, 0.03, 0.50, 0.30, 0.90, 0.30, 0.990),
    (0.40, 0.08, 0.40, 0.08, 0.70, 0.15, 0.97, 0.10, 0.995),
    (0.15, 0.02, 0.15, 0.02, 0.40, 0.35, 0.85, 0.40, 0.980),
    (0.30, 0.10, 0.30, 0.10, 0.50, 0.25, 0.90, 0.50, 0.990),
    (0.25, 0.04, 0.25, 0.04, 0.80, 0.10, 0.98, 0.15, 0.995),
    (0.45, 0.12, 0.45, 0.12, 0.60, 0.20, 0.95, 0.25, 0.990),
    (0.10, 0.01, 0.10, 0.01, 0.30, 0.40, 0.80, 0.50, 0.950),
)


@dataclass(frozen=True)
class SearchBudget:
    """Evaluation limits of one optimisation.

    Every start gets ``screen_evals`` of coordinate descent; the best one
    continues for ``compass_evals`` more and is then polished by
    Nelder-Mead for ``nm_evals``.
    """

    starts: int = 8
    screen_evals: int = 40
    compass_evals: int = 250
    compass_step: float = 1.0
    compass_min_step: float = 0.02
    nm_evals: int = 200
    rel_improvement: float = 1e-3


def _compass(f, u0, step, min_step, max_evals):
    """Coordinate descent with halving steps.

    Returns ``(u, value, step, converged)``; ``step`` is where it stopped.
    """
    u = np.array(u0, float)
    best = f(u)
    evals = 1
    while step >= min_step:
        improved = False
        for i in range(u.size):
            for sign in (1.0, -1.0):
                if evals >= max_evals:
                    return u, best, step, False
                trial = u.copy()
                trial[i] += sign * step
                val = f(trial)
                evals += 1
                if val > best:
                    u, best, improved = trial, val, True
                    break
        if not improved:
            step *= 0.5
    return u, best, step, True


def optimize(N: float, distance: float, settings: Settings = Settings(),
             space: SearchSpace = SearchSpace(), budget: SearchBudget = SearchBudget()) -> RatePoint:
    """Maximise the key length over ``space``.

    The objective is the unclamped rate where some state yields key and a
    per-key-bit deficit elsewhere, with gated states pushed below every
    passing point.  Coordinate descent screens each fixed start, the
    best continues, and Nelder-Mead polishes the result.  The run is
    deterministic.
    """
    free = space.free()
    if not free:
        return evaluate_rate(space.decode([]), N, distance, settings, space)
    cache: dict = {}

    def objective(u):
        key = tuple(np.round(u, 12))
        if key not in cache:
            cache[key] = evaluate_rate(space.decode(u), N, distance, settings, space)
        return cache[key].raw

    screened = []
    for start in _STARTS[:budget.starts]:
        u0 = space.encode(dict(zip(PARAM_NAMES, start)))
        screened.append(_compass(objective, u0, budget.compass_step, budget.compass_min_step,
                                 budget.screen_evals))
    u_best, val, step, converged = max(screened, key=lambda r: r[1])
    if not converged:
        u_best, val, step, converged = _compass(objective, u_best, step, budget.compass_min_step,
                                                budget.compass_evals)
    if budget.nm_evals > 0:
        simplex = u_best + np.vstack([np.zeros(len(free)), 0.25 * np.eye(len(free))])
        res = minimize(lambda u: -objective(u), u_best, method="Nelder-Mead",
                       options={"maxfev": budget.nm_evals, "xatol": 1e-4, "fatol": 0.0,
                                "initial_simplex": simplex})
        if -res.fun > val:
            gain = (-res.fun - val) / max(abs(val), 1e-300)
            u_best, val = res.x, -res.fun
            converged = converged and (res.success or gain < budget.rel_improvement)
    best = cache[tuple(np.round(u_best, 12))]
    # with every raw value negative the clamped rate may peak elsewhere
    top = max(cache.values(), key=lambda r: (r.rate, r.raw))
    best = top if top.rate > best.rate else best
    return replace(best, converged=converged, evaluations=len(cache))


def _optimize_task(args):
    return optimize(*args)


def sweep(axis: str, grid, N: float = 1e13, distance: float = 0.0, settings: Settings = Settings(),
          space: SearchSpace = SearchSpace(), budget: SearchBudget = SearchBudget(),
          workers: int = 1) -> list:
    """Optimised rates along ``distance`` or ``N``.

    A failing grid point is recorded as a zero-rate point with reason
    ``"failure"`` and the sweep continues.
    """
    if axis not in ("distance", "N"):
        raise ValueError("axis must be 'distance' or 'N'")
    tasks = [((N, float(g)) if axis == "distance" else (float(g), distance)) + (settings, space, budget)
             for g in grid]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            futures = [pool.submit(_optimize_task, t) for t in tasks]
            return [_collect(f.result, t) for f, t in zip(futures, tasks)]
    return [_collect(lambda t=t: _optimize_task(t), t) for t in tasks]


def _collect(get, task):
    try:
        return get()
    except Exception as exc:  # noqa: BLE001  keep the sweep going
        N, dist, settings = task[0], task[1], task[2]
        return RatePoint(dist, N, 0.0, {n: math.nan for n in PARAM_NAMES}, settings.estimator,
                         list(BELL_STATES), {"failure": repr(exc)}, converged=False)


def write_sweep_csv(points, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for p in points:
            writer.writerow(p.csv_row())


def asymptotic_at(a_s: float, b_s: float, channel: ChannelParams, zeta: float = 1.16) -> float:
    """Asymptotic rate per pulse at fixed signal intensities."""
    vac, y11, e11, gss, q = {}, {}, {}, {}, {}
    t_vac = gains(0.0, b_s, channel)
    t_ss = gains(a_s, b_s, channel)
    yields = photon_yields(1, channel)
    for k in BELL_STATES:
        vac[k] = float(t_vac[(k, "Z")][0])
        gss[k] = float(t_ss[(k, "Z")][0])
        q[k] = float(t_ss[(k, "Z")][1]) / gss[k] if gss[k] > 0 else 0.0
        yx, ex = yields[(k, "X")]
        y11[k] = float(yx[1, 1])
        e11[k] = float(ex[1, 1] / yx[1, 1]) if yx[1, 1] > 0 else 0.5
    return keyrate.asymptotic_rate(a_s, b_s, vac, y11, e11, gss, q, zeta)


def asymptotic(distance: float, channel: ChannelParams = ChannelParams(), zeta: float = 1.16,
               bounds=(1e-3, 2.0)) -> tuple[float, float]:
    """Asymptotic rate optimised over a common signal intensity.

    Returns ``(rate, intensity)``.
    """
    ch = replace(channel, distance_km=distance)
    lo, hi = math.log(bounds[0]), math.log(bounds[1])
    grid = np.linspace(lo, hi, 41)
    vals = [asymptotic_at(math.exp(x), math.exp(x), ch, zeta) for x in grid]
    i = int(np.argmax(vals))
    if vals[i] <= 0:
        return 0.0, float(math.exp(grid[i]))
    res = minimize_scalar(lambda x: -asymptotic_at(math.exp(x), math.exp(x), ch, zeta),
                          bounds=(grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]),
                          method="bounded", options={"xatol": 1e-6})
    best = max((-res.fun, res.x), (vals[i], grid[i]))
    return float(best[0]), float(math.exp(best[1]))
