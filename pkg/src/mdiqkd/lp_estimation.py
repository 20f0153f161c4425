"""Decoy estimation by linear programming for arbitrary photon statistics.

The unknowns are the photon-number-resolved event counts inside a finite
cut ``n + m <= M_cut``, the relative deviations of the sent photon-number
counts and the count fluctuations of every intensity pair.  Events outside
the cut are absorbed by a tail term bounded by the largest posterior
``p_{a,b|kl}`` beyond the cut.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import gammaln

from . import bounds
from .analytic import count_deviations, estimate_e_k1, serfling_scale
from .protocol import ObservationBlock, YieldEstimates
from .simplex import LinearProgram, solve_lp

TAIL_SCAN = 64


def _lse(x, axis=None, keepdims=False):
    """Plain ``log(sum(exp(x)))``; much cheaper than scipy's for tiny arrays."""
    x = np.asarray(x, float)
    m = np.max(x, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True)) + m
    return out if keepdims else (np.squeeze(out, axis=axis) if axis is not None else out.reshape(()))


def _poisson_log_pmf(vals, k):
    """``log(exp(-v) v^k / k!)`` for every intensity ``v`` and count ``k``."""
    vals = np.asarray(vals, float)[:, None]
    k = np.asarray(k, float)[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        lv = np.where(vals > 0, np.log(np.where(vals > 0, vals, 1.0)), -np.inf)
        out = -vals + k * lv - gammaln(k + 1.0)
    return np.where(k == 0, -vals + 0.0 * k, out)


@dataclass(frozen=True)
class PhotonCutSet:
    """All ``(n, m)`` with ``n + m <= m_cut``."""

    m_cut: int = 8

    def __post_init__(self):
        if self.m_cut < 2:
            raise ValueError("m_cut must be at least 2")

    @property
    def members(self) -> list:
        return [(n, t - n) for t in range(self.m_cut + 1) for n in range(t + 1)]

    @property
    def size(self) -> int:
        return (self.m_cut + 1) * (self.m_cut + 2) // 2

    def index(self, n: int, m: int) -> int:
        return self.members.index((n, m))


@dataclass
class SourceModel:
    """Photon-number statistics of both parties for one basis.

    ``pa[i, n]`` is the probability that Alice's intensity ``i`` emits ``n``
    photons (``pb`` likewise); ``joint`` holds ``p_{a,b,basis}``.  The
    distributions are truncated at ``n_max`` and the lost mass recorded.
    Poisson models also keep their intensities, which enables an analytic
    bound on the posterior tail.
    """

    pa: np.ndarray
    pb: np.ndarray
    joint: np.ndarray
    tail_mass: float = 0.0
    a_vals: np.ndarray | None = None
    b_vals: np.ndarray | None = None

    def __post_init__(self):
        for name in ("pa", "pb"):
            arr = getattr(self, name)
            if np.any(arr < 0) or np.any(arr.sum(axis=1) > 1.0 + 1e-12):
                raise ValueError(f"{name} rows must be sub-distributions")

    @classmethod
    def poisson(cls, a_vals, b_vals, joint, n_max: int = 96) -> "SourceModel":
        a_vals = np.asarray(a_vals, float)
        b_vals = np.asarray(b_vals, float)
        n = np.arange(n_max + 1)
        pa, pb = np.exp(_poisson_log_pmf(a_vals, n)), np.exp(_poisson_log_pmf(b_vals, n))
        tail = float(max(1.0 - pa.sum(axis=1).min(), 1.0 - pb.sum(axis=1).min(), 0.0))
        return cls(pa, pb, np.asarray(joint, float), tail, a_vals, b_vals)

    def p_nm(self, n, m):
        """``p_{nm|basis}``: photon-pair probability given the basis."""
        w = self.joint / self.joint.sum()
        return float(np.einsum("ij,i,j->", w, self.pa[:, n], self.pb[:, m]))

    def posterior(self, n, m) -> np.ndarray:
        """``p_{a,b|nm,basis}`` over the 3x3 intensity grid."""
        w = self.joint * np.outer(self.pa[:, n], self.pb[:, m])
        s = w.sum()
        return w / s if s > 0 else np.zeros_like(w)

    def tail_max(self, m_cut: int) -> np.ndarray:
        """Upper bound on ``max_{k+l > m_cut} p_{a,b|kl}`` for every pair."""
        if self.a_vals is None:
            # no structure to exploit beyond the cut
            return np.ones(self.joint.shape)
        key = (tuple(self.a_vals), tuple(self.b_vals), tuple(self.joint.ravel()), m_cut)
        return _poisson_tail_max(*key).reshape(3, 3).copy()


@lru_cache(maxsize=4096)
def _poisson_tail_max(a_vals, b_vals, joint, m_cut):
    a_vals, b_vals = np.array(a_vals), np.array(b_vals)
    joint = np.array(joint).reshape(3, 3)
    with np.errstate(divide="ignore"):
        logj = np.log(joint)
    out = np.zeros(9)
    for t in range(m_cut + 1, m_cut + TAIL_SCAN + 1):
        k = np.arange(t + 1)
        la = _poisson_log_pmf(a_vals, k)  # (3, t+1)
        lb = _poisson_log_pmf(b_vals, t - k)
        lw = logj[None] + la.T[:, :, None] + lb.T[:, None, :]
        lw = lw.reshape(t + 1, 9)
        norm = _lse(lw, axis=1, keepdims=True)
        ok = np.isfinite(norm[:, 0])
        if ok.any():
            out = np.maximum(out, np.exp(lw[ok] - norm[ok]).max(axis=0))
    far = _far_tail_bound(a_vals, b_vals, joint, m_cut + TAIL_SCAN + 1).ravel()
    return np.minimum(np.maximum(out, far), 1.0)


def _far_tail_bound(a_vals, b_vals, joint, K: int) -> np.ndarray:
    """Posterior bound on ``{k + l >= K}`` for Poisson sources.

    Dropping denominator terms can only raise a posterior, so
    ``p_{a,b|kl} <= min(U_row(l), U_col(k))`` where ``U_row`` keeps only
    Alice's intensity ``a`` and ``U_col`` only Bob's ``b``.  Each of these
    is one over a convex sum of exponentials, so its supremum over a
    half-line is found exactly by a one-dimensional search.
    """
    out = np.ones(joint.shape)
    if np.any(a_vals <= 0) or np.any(b_vals <= 0):
        return out
    with np.errstate(divide="ignore"):
        logw = np.log(joint) - a_vals[:, None] - b_vals[None, :]
    la, lb = np.log(a_vals), np.log(b_vals)
    l_grid = np.arange(K + 1)
    for i in range(3):
        for j in range(3):
            if joint[i, j] <= 0:
                out[i, j] = 0.0
                continue
            row = _HalfLineSup(logw[i, :] - logw[i, j], lb - lb[j])
            col = _HalfLineSup(logw[:, j] - logw[i, j], la - la[i])
            # l > K leaves k free; l <= K forces k >= K - l
            best = min(row(K + 1), col(0))
            u_row = row.values(l_grid)
            u_col = np.array([col(K - l) for l in l_grid])
            out[i, j] = max(best, float(np.minimum(u_row, u_col).max()))
    return out


class _HalfLineSup:
    """``start -> sup_{l >= start, integer} 1 / sum_t exp(log_r[t] + slope[t] * l)``.

    The sum is convex in ``l``, so over integers it has a single minimiser
    ``l_min`` and the supremum from ``start`` is attained at
    ``max(start, l_min)``, or in the limit when the sum never rises.
    """

    def __init__(self, log_r, slope):
        keep = np.isfinite(log_r)
        self.log_r, self.slope = log_r[keep], slope[keep]
        pos, neg = self.slope > 0, self.slope < 0
        self.limit = None
        self.l_min = 0
        if not pos.any():
            flat = self.slope == 0
            self.limit = math.exp(-float(_lse(self.log_r[flat]))) if flat.any() else 1.0
            return

        def rising(l):
            up = _lse(self.log_r[pos] + np.log(self.slope[pos]) + self.slope[pos] * l)
            if not neg.any():
                return True
            down = _lse(self.log_r[neg] + np.log(-self.slope[neg]) + self.slope[neg] * l)
            return up >= down

        if rising(0.0):
            return
        lo, hi = 0.0, 1.0
        while not rising(hi):
            lo, hi = hi, 2.0 * hi
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if rising(mid):
                hi = mid
            else:
                lo = mid
            if hi - lo < 1e-9:
                break
        cands = [math.floor(lo), math.ceil(hi)]
        self.l_min = min(cands, key=self._log_d)

    def _log_d(self, l):
        return float(_lse(self.log_r + self.slope * l))

    def values(self, ls) -> np.ndarray:
        ls = np.asarray(ls, float)
        return np.exp(-_lse(self.log_r[None, :] + self.slope[None, :] * ls[:, None], axis=1))

    def __call__(self, start: int) -> float:
        if self.limit is not None:
            return self.limit
        return math.exp(-self._log_d(max(start, self.l_min)))


def photon_interval(p: float, N: float, eps: float, eps_hat: float):
    """Relative deviations ``(Delta, Delta_hat)`` of a sent photon-pair fraction."""
    if N < 1:
        raise bounds.DomainError("N must be >= 1")
    if p <= 0:
        return 0.0, min(bounds.hoeffding_rel(N, 1e-300, eps_hat), 1.0)
    lo = min(bounds.g_dev(p / N, eps), p)
    hi = min(bounds.hoeffding_rel(N, min(p, 1.0), eps_hat), 1.0 - p)
    return lo, hi


@dataclass(frozen=True)
class LpEps:
    """Interval failure probabilities of one LP.

    ``gamma_group`` covers the summed photon deviation, ``gamma_pair`` each
    intensity-pair count and ``gamma_photon`` each photon pair in the cut.
    """

    gamma_group: float
    gamma_pair: float
    gamma_photon: float

    def total(self, n_cut: int) -> float:
        return self.gamma_group + 9.0 * self.gamma_pair + n_cut * self.gamma_photon


def group_interval(p_cut: float, N: float, eps: float, eps_hat: float, form: str = "complement"):
    """Box ``(lo, hi)`` on the summed relative deviation inside the cut.

    ``"direct"`` applies :func:`photon_interval` to ``p_cut``.  Since
    ``p_cut`` is close to one that box is of order ``sqrt(N)`` pulses.
    ``"complement"`` bounds the same random variable through the number of
    pulses outside the cut, whose mean ``N (1 - p_cut)`` is small.
    """
    if form == "direct":
        return photon_interval(p_cut, N, eps, eps_hat)
    if form != "complement":
        raise ValueError(f"unknown group form {form!r}")
    # in-cut excess = -(out-of-cut excess)
    out_lo, out_hi = photon_interval(max(1.0 - p_cut, 0.0), N, eps_hat, eps)
    return out_hi, out_lo


def build_lp(counts, model: SourceModel, cut: PhotonCutSet, n_sent: float, eps: LpEps,
             objective: str, sense: str = "min", group: str = "complement") -> tuple[LinearProgram, float]:
    """Assemble the estimation LP.

    Parameters
    ----------
    counts : (3, 3) array
        Observed counts (Z, X or X-error grid).
    objective : {"vacuum_row", "S11"}
        Minimise the signal-pair vacuum contribution or ``S_11``.

    Returns
    -------
    lp, scale
        Variables are counts divided by ``scale``.
    """
    if (1, 1) not in cut.members:
        raise ValueError("the cut must contain (1, 1)")
    counts = np.asarray(counts, float)
    if n_sent < 1:
        raise ValueError("the number of sent pulses in this basis must be >= 1")
    members = cut.members
    nc = len(members)
    scale = max(1.0, counts.sum())
    post = np.array([model.posterior(n, m).ravel() for n, m in members])  # (nc, 9)
    p_nm = np.array([model.p_nm(n, m) for n, m in members])
    p_cut = float(p_nm.sum())
    t_ab = model.tail_max(cut.m_cut).ravel()

    lo_ab, hi_ab, _ = count_deviations(counts, eps.gamma_pair)
    lo_ab, hi_ab = lo_ab.ravel(), hi_ab.ravel()
    intervals = [photon_interval(p, n_sent, eps.gamma_photon / 2.0, eps.gamma_photon / 2.0) for p in p_nm]
    d_lo = np.array([iv[0] for iv in intervals])
    d_hi = np.array([iv[1] for iv in intervals])
    g_lo, g_hi = group_interval(p_cut, n_sent, eps.gamma_group / 2.0, eps.gamma_group / 2.0, group)

    nv = 2 * nc + 9
    iS, iD, iA = 0, nc, 2 * nc
    rows, rlo, rhi, names = [], [], [], []
    z = counts.ravel() / scale
    tail_const = n_sent * max(1.0 - p_cut, 0.0) / scale
    for q in range(9):
        # Z >= sum p S + delta
        r = np.zeros(nv)
        r[iS:iS + nc] = post[:, q]
        r[iA + q] = 1.0
        rows.append(r); rlo.append(-np.inf); rhi.append(z[q]); names.append(f"lower_{q}")
        # Z <= sum p S + t N (1 - sum(p + delta)) + delta
        r = r.copy()
        r[iD:iD + nc] = -t_ab[q]
        rows.append(r); rlo.append(z[q] - t_ab[q] * tail_const); rhi.append(np.inf); names.append(f"upper_{q}")
    r = np.zeros(nv)
    r[iA:iA + 9] = 1.0
    rows.append(r); rlo.append(0.0); rhi.append(0.0); names.append("pair_sum")
    for t, (n, m) in enumerate(members):
        r = np.zeros(nv)
        r[iS + t] = 1.0
        r[iD + t] = -1.0
        rows.append(r); rlo.append(-np.inf); rhi.append(n_sent * p_nm[t] / scale); names.append(f"cap_{n}_{m}")
    r = np.zeros(nv)
    r[iD:iD + nc] = 1.0
    rows.append(r); rlo.append(-n_sent * g_lo / scale); rhi.append(n_sent * g_hi / scale); names.append("group")

    lo = np.concatenate([np.zeros(nc), -n_sent * d_lo / scale, -lo_ab / scale])
    hi = np.concatenate([np.full(nc, np.inf), n_sent * d_hi / scale, hi_ab / scale])

    c = np.zeros(nv)
    if objective == "vacuum_row":
        ss = np.array([post[t, 0] if n == 0 else 0.0 for t, (n, m) in enumerate(members)])
        c[iS:iS + nc] = ss
    elif objective == "S11":
        c[iS + cut.index(1, 1)] = 1.0
    else:
        raise ValueError(f"unknown objective {objective!r}")
    var_names = ([f"S_{n}_{m}" for n, m in members] + [f"d_{n}_{m}" for n, m in members]
                 + [f"delta_{q // 3}{q % 3}" for q in range(9)])
    lp = LinearProgram(c, np.array(rows), rlo, rhi, lo, hi, sense=sense,
                       var_names=var_names, row_names=names)
    return lp, scale


def build_yield_lp(block: ObservationBlock, cut: PhotonCutSet, eps: LpEps, objective: str, basis: str = "Z",
                   group: str = "complement"):
    counts = block.z_counts if basis == "Z" else block.x_counts
    joint = block.p_z if basis == "Z" else block.p_x
    n_sent = block.n_z_pulses if basis == "Z" else block.n_x_pulses
    model = SourceModel.poisson(block.alice.values, block.bob.values, joint)
    return build_lp(counts, model, cut, n_sent, eps, objective, "min", group)


def build_error_lp(block: ObservationBlock, cut: PhotonCutSet, eps: LpEps, group: str = "complement"):
    model = SourceModel.poisson(block.alice.values, block.bob.values, block.p_x)
    return build_lp(block.x_errors, model, cut, block.n_x_pulses, eps, "S11", "max", group)


def _solve_value(lp, scale) -> float:
    sol = solve_lp(lp)
    if sol.status not in ("optimal", "inaccurate"):
        raise RuntimeError(f"estimation LP is {sol.status}")
    return sol.objective * scale


def lp_m_k0(n_sol: float, eps0: float) -> int:
    if n_sol <= 0:
        return 0
    return max(math.floor(n_sol - bounds.g_dev(n_sol, eps0)), 0)


def lp_m_k1(n_sol: float, p_ss_11: float, eps1: float) -> int:
    mu = p_ss_11 * n_sol
    if mu <= 0:
        return 0
    return max(math.floor(mu - bounds.g_dev(mu, eps1)), 0)


def lp_nbar_k1(n_sol: float) -> int:
    return max(math.floor(n_sol), 0)


def lp_ebar_k1(n_sol: float, nbar: int) -> int:
    return min(math.ceil(max(n_sol, 0.0)), nbar)


def estimate(block: ObservationBlock, eps_k0: float, eps_k1: float, eps_ke: float,
             cut: PhotonCutSet | None = None, group: str = "complement") -> YieldEstimates:
    """LP estimation of one Bell state's certified quantities."""
    cut = cut or PhotonCutSet()
    nc = cut.size
    pop = block.z_signal
    if block.n_z_pulses < 1 or block.n_x_pulses < 1:
        raise ValueError("the LP route needs the numbers of sent Z and X pulses")

    # eps_k0 = serfling + eps0 + group + pairs + photons, five equal parts
    part0 = eps_k0 / 5.0
    lp0 = LpEps(part0, part0 / 9.0, part0 / nc)
    n_sol0 = _solve_value(*build_yield_lp(block, cut, lp0, "vacuum_row", group=group))
    m_k0 = lp_m_k0(n_sol0, part0)
    n_k0 = serfling_scale(m_k0, pop, block.n_k, part0) if m_k0 else 0

    part1 = eps_k1 / 5.0
    lp1 = LpEps(part1, part1 / 9.0, part1 / nc)
    n_sol1 = _solve_value(*build_yield_lp(block, cut, lp1, "S11", group=group))
    model_z = SourceModel.poisson(block.alice.values, block.bob.values, block.p_z)
    p_ss_11 = float(model_z.posterior(1, 1)[0, 0])
    m_k1 = lp_m_k1(n_sol1, p_ss_11, part1)
    n_k1 = serfling_scale(m_k1, pop, block.n_k, part1) if m_k1 else 0
    n_k1 = min(n_k1, max(block.n_k - n_k0, 0))

    third = eps_ke / 3.0
    lpe = LpEps(third / 3.0, third / 27.0, third / 3.0 / nc)
    n_sol_x = _solve_value(*build_yield_lp(block, cut, lpe, "S11", basis="X", group=group))
    nbar = lp_nbar_k1(n_sol_x)
    n_sol_e = _solve_value(*build_error_lp(block, cut, lpe, group))
    ebar = lp_ebar_k1(n_sol_e, nbar)
    count, rate = estimate_e_k1(n_k1, nbar, ebar, third)

    return YieldEstimates(
        bell_state=block.bell_state, m_k0=m_k0, n_k0=n_k0, m_k1=m_k1, n_k1=n_k1,
        nbar_k1=nbar, ebar_k1=ebar, e_k1_count=count if count is not None else n_k1,
        e_k1=rate, eps_k0=eps_k0, eps_k1=eps_k1, eps_ke=eps_ke,
        eps={"eps_prime_k0": 4 * part0, "eps_dprime_k0": part0,
             "eps_prime_k1": 4 * part1, "eps_dprime_k1": part1,
             "eps_prime_ke": third, "eps_dprime_ke": third, "eps_tprime_ke": third},
        unestimable=count is None,
        diagnostics={"n_sol_vacuum": n_sol0, "n_sol_s11": n_sol1, "n_sol_s11_x": n_sol_x,
                     "n_sol_e11": n_sol_e},
    )

