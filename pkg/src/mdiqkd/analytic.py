"""Closed-form two-decoy estimation for Poissonian sources.

Counts are rescaled by ``exp(a+b)/p_{a,b}`` so that each becomes a power
series in the intensities with the rescaled photon-number yields as
coefficients.  Linear combinations over intensity pairs then cancel the
unwanted terms and leave certified bounds on the vacuum and single-photon
contributions.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import bounds
from .bounds import TailBudget
from .protocol import ObservationBlock, YieldEstimates

log = logging.getLogger(__name__)

# highest order n+m at which admissible vector pairs are checked for c_nm <= 0
SIGN_CHECK_ORDER = 24


@dataclass(frozen=True)
class AnalyticEps:
    """Failure-probability split for one Bell state.

    Built from the three estimation budgets ``eps_k0``, ``eps_k1`` and
    ``eps_ke`` by :meth:`from_totals`.
    """

    gamma_z: float      # per intensity pair, Z counts
    eps0: float         # m_k0 tail
    eps0_serf: float    # n_k0 sampling
    eps1: float         # m_k1 tail
    eps1_serf: float    # n_k1 sampling
    gamma_x: float      # per intensity pair, X counts
    gamma_e: float      # per intensity pair, X error counts
    eps_e_serf: float   # phase-error sampling

    @classmethod
    def from_totals(cls, eps_k0: float, eps_k1: float, eps_ke: float) -> "AnalyticEps":
        gamma_z = eps_k1 / 27.0
        rest0 = eps_k0 - 3.0 * gamma_z
        if rest0 <= 0:
            raise ValueError("eps_k0 too small to cover the shared Z-count intervals")
        return cls(
            gamma_z=gamma_z, eps0=rest0 / 2.0, eps0_serf=rest0 / 2.0,
            eps1=eps_k1 / 3.0, eps1_serf=eps_k1 / 3.0,
            gamma_x=eps_ke / 27.0, gamma_e=eps_ke / 27.0, eps_e_serf=eps_ke / 3.0,
        )

    @property
    def eps_k0(self) -> float:
        return self.eps0 + 3.0 * self.gamma_z + self.eps0_serf

    @property
    def eps_k1(self) -> float:
        return self.eps1 + 9.0 * self.gamma_z + self.eps1_serf

    @property
    def eps_ke(self) -> float:
        return 9.0 * self.gamma_x + 9.0 * self.gamma_e + self.eps_e_serf


def tau_nm(n: int, m: int, a_vals, b_vals, probs) -> float:
    """``(1/n!m!) sum_{a,b} exp(-(a+b)) a^n b^m p_{a,b}``."""
    a_vals = np.asarray(a_vals, float)
    b_vals = np.asarray(b_vals, float)
    probs = np.asarray(probs, float)
    if n < 0 or m < 0:
        raise ValueError("photon numbers must be nonnegative")
    if n + m <= 20:
        w = np.exp(-(a_vals[:, None] + b_vals[None, :])) * np.outer(a_vals**n, b_vals**m)
        return float((w * probs).sum() / (math.factorial(n) * math.factorial(m)))
    total = 0.0
    for i, a in enumerate(a_vals):
        for j, b in enumerate(b_vals):
            if probs[i, j] == 0 or (n and a == 0) or (m and b == 0):
                continue
            la = n * math.log(a) if n else 0.0
            lb = m * math.log(b) if m else 0.0
            total += probs[i, j] * math.exp(-(a + b) + la + lb - math.lgamma(n + 1) - math.lgamma(m + 1))
    return total


def rescale(values, a_vals, b_vals, probs) -> np.ndarray:
    """``exp(a+b) * values / p_{a,b}`` elementwise over the 3x3 grid."""
    probs = np.asarray(probs, float)
    if np.any(probs <= 0):
        raise ValueError("every intensity pair needs a positive selection probability")
    a_vals = np.asarray(a_vals, float)
    b_vals = np.asarray(b_vals, float)
    return np.exp(a_vals[:, None] + b_vals[None, :]) * np.asarray(values, float) / probs


def rescale_counts(block: ObservationBlock) -> dict:
    """Rescaled Z, X and X-error counts of a block."""
    a, b = block.alice.values, block.bob.values
    return {
        "Z": rescale(block.z_counts, a, b, block.p_z),
        "X": rescale(block.x_counts, a, b, block.p_x),
        "X_err": rescale(block.x_errors, a, b, block.p_x),
    }


def count_deviations(counts, gamma: float):
    """Chernoff deviations of 3x3 count grids (leading batch axes allowed).

    The trial count behind each entry is the total over its grid.  Returns
    ``(lower, upper, branch)``; all-zero grids give zero deviations.
    """
    counts = np.asarray(counts, float)
    total = counts.sum(axis=(-2, -1), keepdims=True)
    empty = np.broadcast_to(total < 1, counts.shape)
    lo, hi, _, br, _ = bounds.chernoff_deviations(counts, np.broadcast_to(np.maximum(total, 1.0), counts.shape),
                                                  TailBudget.uniform(gamma))
    return np.where(empty, 0.0, lo), np.where(empty, 0.0, hi), np.where(empty, 6, br)


def _out(v):
    v = np.asarray(v)
    return v.item() if v.ndim == 0 else v


def _floor_tail(mu, eps: float):
    """``mu - g(mu, eps)`` where increasing in ``mu``, else 0."""
    mu = np.asarray(mu, float)
    ok = (mu > 0) & (mu >= -math.log(eps) / 2.0)
    safe = np.where(ok, mu, 0.0)
    return _out(np.where(ok, np.maximum(safe - bounds.g_dev(safe, eps), 0.0), 0.0))


def serfling_scale(m, population, n_k, eps: float):
    """Scale a bound on a population subset to the ``n_k`` key sample."""
    m, population, n_k = (np.asarray(v, float) for v in (m, population, n_k))
    if np.any(n_k > population):
        raise ValueError(f"sample n_k={n_k} exceeds population {population}")
    ok = (n_k > 0) & (population > 0) & (m > 0)
    pop = np.where(ok, population, 1.0)
    n = np.where(ok, n_k, 1.0)
    lam = bounds.serfling_lambda(pop, n, eps)
    val = np.maximum(np.floor(n * np.where(ok, m, 0.0) / pop - n * lam), 0.0)
    return _out(np.where(ok, val, 0.0).astype(np.int64))


def t0_lower(ztil, gam, gam_hat, a_vals):
    """Lower bound on the rescaled Alice-vacuum term at Bob's signal intensity."""
    best = 0.0
    for i0, i1 in itertools.combinations(range(3), 2):
        a0, a1 = a_vals[i0], a_vals[i1]
        L = a0 * ztil[..., i1, 0] - a1 * ztil[..., i0, 0]
        val = (L - a0 * gam_hat[..., i1, 0] - a1 * gam[..., i0, 0]) / (a0 - a1)
        best = np.maximum(best, val)
    return _out(best)


def vacuum_lower(z_counts, a_vals, b_vals, p_z, gamma: float):
    """Lower bound on the mean number of signal-pair Z events with Alice in vacuum."""
    a_vals = np.asarray(a_vals, float)
    b_vals = np.asarray(b_vals, float)
    ztil = rescale(z_counts, a_vals, b_vals, p_z)
    lo, hi, _ = count_deviations(z_counts, gamma)
    scale = rescale(np.ones((3, 3)), a_vals, b_vals, p_z)
    t_low = np.asarray(t0_lower(ztil, lo * scale, hi * scale, a_vals))
    return _out(p_z[0, 0] * math.exp(-(a_vals[0] + b_vals[0])) * t_low)


def estimate_m_k0(block: ObservationBlock, eps: AnalyticEps) -> tuple[int, float]:
    """Lower bound on signal-pair Z events in which Alice sent vacuum."""
    mu_low = vacuum_lower(block.z_counts, block.alice.values, block.bob.values, block.p_z, eps.gamma_z)
    return int(_floor_tail(mu_low, eps.eps0)), eps.eps0 + 3.0 * eps.gamma_z


# --- single-photon bound -------------------------------------------------

_VECTORS = [(i0, i1, j0, j1) for i0, i1 in itertools.combinations(range(3), 2)
            for j0, j1 in itertools.combinations(range(3), 2)]


def _matches(x0, x1, y0, y1) -> bool:
    """Exists i, j with x_i == y_j and x_{i+1} > y_{j+1} (indices mod 2)."""
    x, y = (x0, x1), (y0, y1)
    return any(x[i] == y[j] and x[1 - i] > y[1 - j] for i in (0, 1) for j in (0, 1))


def _corner_signs(v) -> dict:
    i0, i1, j0, j1 = v
    return {(i0, j0): 1.0, (i1, j1): 1.0, (i0, j1): -1.0, (i1, j0): -1.0}


@dataclass(frozen=True)
class VectorPair:
    v: tuple
    vp: tuple
    case: int
    c_v: float        # multiplies G_v' (positive)
    c_vp: float       # multiplies G_v (positive)
    c11: float
    signs_ok: bool


def _cnm(pair_case, av, bv, avp, bvp, n, m):
    a0, a1 = av
    b0, b1 = bv
    p0, p1 = avp
    q0, q1 = bvp
    if pair_case == 1:
        return ((b0**2 - b1**2) * (a0 - a1) * (p0**n - p1**n) * (q0**m - q1**m)
                - (q0**2 - q1**2) * (p0 - p1) * (a0**n - a1**n) * (b0**m - b1**m))
    return ((a0**2 - a1**2) * (b0 - b1) * (p0**n - p1**n) * (q0**m - q1**m)
            - (p0**2 - p1**2) * (q0 - q1) * (a0**n - a1**n) * (b0**m - b1**m))


def c_coefficient(pair: VectorPair, a_vals, b_vals, n: int, m: int) -> float:
    i0, i1, j0, j1 = pair.v
    k0, k1, l0, l1 = pair.vp
    return _cnm(pair.case, (a_vals[i0], a_vals[i1]), (b_vals[j0], b_vals[j1]),
                (a_vals[k0], a_vals[k1]), (b_vals[l0], b_vals[l1]), n, m)


def admissible_pairs(a_vals, b_vals) -> list[VectorPair]:
    """All ordered vector pairs meeting the matching constraints."""
    return list(_admissible_pairs(tuple(map(float, a_vals)), tuple(map(float, b_vals))))


@lru_cache(maxsize=256)
def _admissible_pairs(a_vals, b_vals):
    out = []
    for v, vp in itertools.permutations(_VECTORS, 2):
        i0, i1, j0, j1 = v
        k0, k1, l0, l1 = vp
        A = (a_vals[i0], a_vals[i1])
        B = (b_vals[j0], b_vals[j1])
        Ap = (a_vals[k0], a_vals[k1])
        Bp = (b_vals[l0], b_vals[l1])
        if not (_matches(*A, *Ap) and _matches(*B, *Bp)):
            continue
        case = 1 if (A[0] + A[1]) / (Ap[0] + Ap[1]) > (B[0] + B[1]) / (Bp[0] + Bp[1]) else 2
        if case == 1:
            c_v = (B[0]**2 - B[1]**2) * (A[0] - A[1])
            c_vp = (Bp[0]**2 - Bp[1]**2) * (Ap[0] - Ap[1])
        else:
            c_v = (A[0]**2 - A[1]**2) * (B[0] - B[1])
            c_vp = (Ap[0]**2 - Ap[1]**2) * (Bp[0] - Bp[1])
        c11 = _cnm(case, A, B, Ap, Bp, 1, 1)
        scale = c_v * max(Ap[0], Bp[0], 1e-300) ** 2 + c_vp * max(A[0], B[0]) ** 2
        signs_ok = all(
            _cnm(case, A, B, Ap, Bp, n, m) <= 1e-12 * scale
            for n in range(1, SIGN_CHECK_ORDER) for m in range(1, SIGN_CHECK_ORDER - n + 1)
            if n + m >= 3
        )
        out.append(VectorPair(v, vp, case, c_v, c_vp, c11, signs_ok))
    return tuple(out)


def fluctuation_budget(pair: VectorPair, gam, gam_hat, convention: str = "sound") -> float:
    """Upper bound on the combined fluctuation term of a vector pair.

    ``convention="sound"`` bounds each intensity pair by the sign of its net
    weight (positive weights take the upper deviation, negative weights the
    lower one).  ``convention="printed"`` charges upper deviations on every
    corner of ``v'`` and lower deviations on every corner of ``v``, which
    can undercount when the lower deviation exceeds the upper one.
    """
    if convention == "printed":
        tot = sum(pair.c_v * gam_hat[..., i, j] for i, j in _corner_signs(pair.vp))
        tot += sum(pair.c_vp * gam[..., i, j] for i, j in _corner_signs(pair.v))
        return _out(tot)
    if convention != "sound":
        raise ValueError(f"unknown convention {convention!r}")
    weight: dict = {}
    for c, s in _corner_signs(pair.vp).items():
        weight[c] = weight.get(c, 0.0) + pair.c_v * s
    for c, s in _corner_signs(pair.v).items():
        weight[c] = weight.get(c, 0.0) - pair.c_vp * s
    return _out(sum(w * gam_hat[..., i, j] if w > 0 else -w * gam[..., i, j] for (i, j), w in weight.items()))


def _g_value(til, v):
    i0, i1, j0, j1 = v
    return til[..., i0, j0] + til[..., i1, j1] - til[..., i0, j1] - til[..., i1, j0]


def _pair_weights(pair: VectorPair, convention: str):
    """3x3 weights of ``J`` and of the upper/lower deviations in the budget."""
    w = np.zeros((3, 3))
    for (i, j), sgn in _corner_signs(pair.vp).items():
        w[i, j] += pair.c_v * sgn
    for (i, j), sgn in _corner_signs(pair.v).items():
        w[i, j] -= pair.c_vp * sgn
    if convention == "sound":
        return w, np.maximum(w, 0.0), np.maximum(-w, 0.0)
    if convention != "printed":
        raise ValueError(f"unknown convention {convention!r}")
    up, low = np.zeros((3, 3)), np.zeros((3, 3))
    for i, j in _corner_signs(pair.vp):
        up[i, j] += pair.c_v
    for i, j in _corner_signs(pair.v):
        low[i, j] += pair.c_vp
    return w, up, low


@lru_cache(maxsize=256)
def _stacked_weights(a_vals: tuple, b_vals: tuple, convention: str):
    pairs = [p for p in _admissible_pairs(a_vals, b_vals) if p.c11 > 0 and p.signs_ok]
    skipped = len(_admissible_pairs(a_vals, b_vals)) - len(pairs)
    if skipped:
        log.debug("skipping %d vector pairs with c11 <= 0 or wrong coefficient signs", skipped)
    if not pairs:
        return None
    ws = [_pair_weights(p, convention) for p in pairs]
    inv_c11 = np.array([1.0 / p.c11 for p in pairs])
    return tuple(np.stack([w[k] for w in ws]) for k in range(3)) + (inv_c11,)


def s11_lower(counts, a_vals, b_vals, probs, gamma: float, convention: str = "sound") -> tuple:
    """Lower bound on single-photon-pair events in one basis.

    Returns the bound and its failure probability ``9 * gamma``.  Vector
    pairs with ``c11 <= 0`` or a wrong higher-order sign are skipped.
    """
    a_vals = np.asarray(a_vals, float)
    b_vals = np.asarray(b_vals, float)
    til = rescale(counts, a_vals, b_vals, probs)
    lo, hi, _ = count_deviations(counts, gamma)
    scale = rescale(np.ones((3, 3)), a_vals, b_vals, probs)
    weights = _stacked_weights(tuple(map(float, a_vals)), tuple(map(float, b_vals)), convention)
    if weights is None:
        return _out(np.zeros(til.shape[:-2])), 9.0 * gamma
    w, up, low, inv_c11 = weights
    t11 = tau_nm(1, 1, a_vals, b_vals, probs)
    J = np.einsum("...ij,pij->...p", til, w)
    budget = np.einsum("...ij,pij->...p", hi * scale, up) + np.einsum("...ij,pij->...p", lo * scale, low)
    best = np.maximum((t11 * inv_c11 * (J - budget)).max(axis=-1), 0.0)
    return _out(best), 9.0 * gamma


def ebar_upper(errors, a_vals, b_vals, probs, gamma: float) -> tuple[float, float]:
    """Upper bound on X-basis errors among single-photon pairs."""
    a_vals = np.asarray(a_vals, float)
    b_vals = np.asarray(b_vals, float)
    til = rescale(errors, a_vals, b_vals, probs)
    lo, hi, _ = count_deviations(errors, gamma)
    scale = rescale(np.ones((3, 3)), a_vals, b_vals, probs)
    gam, gam_hat = lo * scale, hi * scale
    t11 = tau_nm(1, 1, a_vals, b_vals, probs)
    best = math.inf
    for v in _VECTORS:
        i0, i1, j0, j1 = v
        F = _g_value(til, v)
        gam_v = -gam[..., i0, j0] - gam[..., i1, j1] - gam_hat[..., i0, j1] - gam_hat[..., i1, j0]
        val = (F - gam_v) * t11 / ((a_vals[i0] - a_vals[i1]) * (b_vals[j0] - b_vals[j1]))
        best = np.minimum(best, val)
    return _out(best), 9.0 * gamma


def p_signal_given_11(block: ObservationBlock, basis: str = "Z") -> float:
    a, b = block.alice.values, block.bob.values
    p = block.p_z if basis == "Z" else block.p_x
    return math.exp(-(a[0] + b[0])) * a[0] * b[0] * p[0, 0] / tau_nm(1, 1, a, b, p)


def phase_error_count(n_k1, nbar_k1, ebar_k1, eps: float):
    """Serfling extrapolation of X-basis single-photon errors to the key sample."""
    n_k1, nbar_k1, ebar_k1 = (np.asarray(v, float) for v in (n_k1, nbar_k1, ebar_k1))
    if np.any(nbar_k1 < 1):
        raise ValueError("nbar_k1 must be >= 1")
    ups = bounds.serfling_upsilon(np.maximum(n_k1, 0.0), nbar_k1, eps)
    val = np.ceil(n_k1 * ebar_k1 / nbar_k1 + (n_k1 + nbar_k1) * ups)
    val = np.where(n_k1 > 0, np.clip(val, 0.0, np.maximum(n_k1, 0.0)), 0.0)
    return _out(val.astype(np.int64))


def estimate_e_k1(n_k1: int, nbar_k1: int, ebar_k1: float, eps: float):
    """Phase-error count and rate; ``(None, 0.5)`` when ``nbar_k1`` is zero."""
    if nbar_k1 < 1:
        return None, 0.5
    count = phase_error_count(n_k1, nbar_k1, ebar_k1, eps)
    return count, (count / n_k1 if n_k1 > 0 else 0.5)


def estimate_arrays(z, x, xe, n_k, a_vals, b_vals, p_z, p_x, eps: AnalyticEps,
                    convention: str = "sound") -> dict:
    """Analytic estimates for a batch of count grids.

    ``z``, ``x`` and ``xe`` have shape ``(..., 3, 3)`` and ``n_k`` the batch
    shape.  Returns a dict of arrays; ``e_k1_count`` is -1 and ``e_k1``
    1/2 where ``nbar_k1`` is zero.
    """
    z, x, xe = (np.asarray(v, float) for v in (z, x, xe))
    a_vals = np.asarray(a_vals, float)
    b_vals = np.asarray(b_vals, float)
    pop = z[..., 0, 0]
    n_k = np.asarray(n_k, float)

    mu0 = np.asarray(vacuum_lower(z, a_vals, b_vals, p_z, eps.gamma_z))
    m_k0 = np.floor(np.asarray(_floor_tail(mu0, eps.eps0))).astype(np.int64)
    n_k0 = np.asarray(serfling_scale(m_k0, pop, n_k, eps.eps0_serf))

    s11 = np.asarray(s11_lower(z, a_vals, b_vals, p_z, eps.gamma_z, convention)[0])
    t11 = tau_nm(1, 1, a_vals, b_vals, p_z)
    mu1 = math.exp(-(a_vals[0] + b_vals[0])) * a_vals[0] * b_vals[0] * p_z[0, 0] / t11 * s11
    m_k1 = np.floor(np.asarray(_floor_tail(mu1, eps.eps1))).astype(np.int64)
    n_k1 = np.asarray(serfling_scale(m_k1, pop, n_k, eps.eps1_serf))
    n_k1 = np.minimum(n_k1, np.maximum(n_k - n_k0, 0)).astype(np.int64)

    s11x = np.asarray(s11_lower(x, a_vals, b_vals, p_x, eps.gamma_x, convention)[0])
    nbar = np.floor(s11x).astype(np.int64)
    ebar_raw = np.asarray(ebar_upper(xe, a_vals, b_vals, p_x, eps.gamma_e)[0])
    ebar = np.ceil(np.maximum(ebar_raw, 0.0)).astype(np.int64)
    ebar = np.where(nbar > 0, np.minimum(ebar, nbar), ebar)
    ok = nbar >= 1
    count = np.asarray(phase_error_count(n_k1, np.where(ok, nbar, 1), ebar, eps.eps_e_serf))
    count = np.where(ok, count, -1)
    rate = np.where(ok & (n_k1 > 0), count / np.maximum(n_k1, 1), 0.5)
    return {"mu0": mu0, "m_k0": m_k0, "n_k0": n_k0, "s11_z": s11, "mu1": mu1, "m_k1": m_k1,
            "n_k1": n_k1, "s11_x": s11x, "nbar_k1": nbar, "ebar_raw": ebar_raw, "ebar_k1": ebar,
            "e_k1_count": count, "e_k1": rate}


def estimate(block: ObservationBlock, eps: AnalyticEps, convention: str = "sound") -> YieldEstimates:
    """Run the full analytic estimation for one Bell state."""
    r = estimate_arrays(block.z_counts, block.x_counts, block.x_errors, block.n_k,
                        block.alice.values, block.bob.values, block.p_z, block.p_x, eps, convention)
    count = int(r["e_k1_count"])
    n_k1 = int(r["n_k1"])
    return YieldEstimates(
        bell_state=block.bell_state, m_k0=int(r["m_k0"]), n_k0=int(r["n_k0"]), m_k1=int(r["m_k1"]),
        n_k1=n_k1, nbar_k1=int(r["nbar_k1"]), ebar_k1=int(r["ebar_k1"]),
        e_k1_count=count if count >= 0 else n_k1, e_k1=float(r["e_k1"]),
        eps_k0=eps.eps_k0, eps_k1=eps.eps_k1, eps_ke=eps.eps_ke,
        eps={
            "eps_prime_k0": eps.eps0 + 3.0 * eps.gamma_z, "eps_dprime_k0": eps.eps0_serf,
            "eps_prime_k1": eps.eps1 + 9.0 * eps.gamma_z, "eps_dprime_k1": eps.eps1_serf,
            "eps_prime_ke": 9.0 * eps.gamma_x, "eps_dprime_ke": 9.0 * eps.gamma_e,
            "eps_tprime_ke": eps.eps_e_serf,
        },
        unestimable=count < 0,
        diagnostics={k: float(r[k]) for k in ("s11_z", "s11_x", "ebar_raw", "mu1")},
    )
