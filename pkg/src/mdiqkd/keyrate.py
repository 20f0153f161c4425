"""Secret-key length and composition of failure probabilities."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import bounds
from .protocol import BELL_STATES, YieldEstimates


def binary_entropy(x) -> float:
    """Binary Shannon entropy in bits, ``h(0) = h(1) = 0``."""
    x = float(x)
    if not 0.0 <= x <= 1.0:
        raise bounds.DomainError(f"entropy argument must lie in [0, 1], got {x!r}")
    if x in (0.0, 1.0):
        return 0.0
    return -x * math.log2(x) - (1.0 - x) * math.log2(1.0 - x)


def leak_ec(n_k: float, qber: float, zeta: float = 1.16) -> float:
    """Error-correction leakage ``n_k * zeta * h(qber)``."""
    if n_k < 0 or not 0.0 <= qber <= 0.5:
        raise bounds.DomainError("need n_k >= 0 and qber in [0, 1/2]")
    return n_k * zeta * binary_entropy(qber)


@dataclass(frozen=True)
class StateBudget:
    """Failure probabilities attached to one Bell state."""

    eps_prime: float
    eps_hat: float
    eps_pa: float
    eps_bar: float
    eps_k0: float
    eps_k1: float
    eps_ke: float

    def __post_init__(self):
        for name, val in self.__dict__.items():
            if not 0.0 < val < 1.0:
                raise bounds.DomainError(f"{name} must lie in (0, 1), got {val!r}")

    @property
    def eps_b(self) -> float:
        # Pr[pass] <= 1
        return self.eps_bar

    @property
    def eps_sec(self) -> float:
        return (2.0 * (self.eps_prime + 2.0 * self.eps_ke + self.eps_hat)
                + self.eps_b + self.eps_k0 + self.eps_k1 + self.eps_pa)


@dataclass(frozen=True)
class SecurityBudget:
    """Correctness budget plus one :class:`StateBudget` per Bell state."""

    eps_cor: float
    states: dict

    @classmethod
    def uniform(cls, eps_total: float = 1e-10, eps_cor: float = 1e-15) -> "SecurityBudget":
        """Split ``eps_total - eps_cor`` evenly over states and weighted terms.

        Every term of a state's secrecy sum gets the same share ``w``; the
        weights in that sum add up to 12.
        """
        if not 0 < eps_cor < eps_total < 1:
            raise bounds.DomainError("need 0 < eps_cor < eps_total < 1")
        w = (eps_total - eps_cor) / len(BELL_STATES) / 12.0
        st = StateBudget(w, w, w, w, w, w, w)
        return cls(eps_cor, {k: st for k in BELL_STATES})


def compose_secrecy(budget: SecurityBudget, target: float | None = None) -> float:
    """Total secrecy failure ``sum_k eps_k_sec``.

    Raises if ``eps_sec + eps_cor`` exceeds ``target`` (relative slack 1e-12).
    """
    eps_sec = sum(st.eps_sec for st in budget.states.values())
    if target is not None and eps_sec + budget.eps_cor > target * (1.0 + 1e-12):
        raise bounds.DomainError(
            f"composed epsilon {eps_sec + budget.eps_cor:.3e} exceeds target {target:.3e}")
    return eps_sec


def penalty_bits(eps_cor: float, st: StateBudget) -> float:
    return (math.log2(8.0 / eps_cor) + 2.0 * math.log2(2.0 / (st.eps_prime * st.eps_hat))
            + 2.0 * math.log2(1.0 / (2.0 * st.eps_pa)))


def raw_length(n_k0, n_k1, e_k1, leak, eps_cor, st: StateBudget) -> float:
    """Key length before flooring and clamping (may be negative)."""
    return n_k0 + n_k1 * (1.0 - binary_entropy(min(e_k1, 1.0))) - leak - penalty_bits(eps_cor, st)


def key_length(n_k0, n_k1, e_k1, leak, eps_cor, st: StateBudget) -> int:
    return max(math.floor(raw_length(n_k0, n_k1, e_k1, leak, eps_cor, st)), 0)


@dataclass
class StateResult:
    bell_state: str
    length: int
    raw_length: float
    leak: float
    aborted: bool
    reason: str = ""
    xi: float = float("nan")
    estimates: YieldEstimates | None = None


@dataclass
class KeyLengthResult:
    states: list
    eps_sec: float
    eps_cor: float
    length: int = field(init=False)

    def __post_init__(self):
        self.length = sum(s.length for s in self.states if not s.aborted)

    @property
    def aborted(self) -> bool:
        return all(s.aborted for s in self.states)

    @property
    def aborted_states(self) -> list:
        return [s.bell_state for s in self.states if s.aborted]

    @property
    def raw_total(self) -> float:
        """Sum of unclamped lengths of non-gated states (for optimisation)."""
        return sum(s.raw_length for s in self.states if s.reason not in ("E_tol", "e_tol", "unestimable"))


def sifting_gate(qber: float, e_k1: float | None, E_tol: float, e_tol: float) -> str:
    """Abort reason for one Bell state, or ``""`` when it passes."""
    if qber > E_tol:
        return "E_tol"
    if e_k1 is None:
        return "unestimable"
    if e_k1 > e_tol:
        return "e_tol"
    return ""


def assemble(blocks, estimates, budget: SecurityBudget, E_tol: float, e_tol: float,
             zeta: float = 1.16) -> KeyLengthResult:
    """Gate every Bell state and compute its key length."""
    results = []
    for blk, est in zip(blocks, estimates):
        st = budget.states[blk.bell_state]
        leak = leak_ec(blk.n_k, min(blk.qber, 0.5), zeta)
        reason = sifting_gate(blk.qber, None if est.unestimable else est.e_k1, E_tol, e_tol)
        raw = raw_length(est.n_k0, est.n_k1, est.e_k1, leak, budget.eps_cor, st)
        xi = np.nan
        if blk.n_k >= 1 and blk.r_k >= 1:
            xi = blk.qber + bounds.qber_inflation_chi(blk.n_k, blk.r_k, st.eps_bar)
        length = 0 if reason else max(math.floor(raw), 0)
        if not reason and length == 0:
            reason = "nonpositive_length"
        results.append(StateResult(blk.bell_state, length, raw, leak, bool(reason), reason, xi, est))
    return KeyLengthResult(results, compose_secrecy(budget), budget.eps_cor)


def asymptotic_rate(a_s: float, b_s: float, vac_gain: dict, y11: dict, e11_x: dict,
                    gain_ss: dict, qber: dict, zeta: float = 1.16) -> float:
    """Infinite-decoy, infinite-N key rate per pulse with ``p_ss,Z -> 1``.

    All dict arguments are keyed by Bell state: ``vac_gain`` is the gain
    when Alice sends vacuum and Bob ``b_s``, ``y11`` and ``e11_x`` the
    single-photon yield and X-basis error rate.
    """
    total = 0.0
    p11 = a_s * b_s * math.exp(-(a_s + b_s))
    for k in vac_gain:
        val = (math.exp(-a_s) * vac_gain[k] + p11 * y11[k] * (1.0 - binary_entropy(min(e11_x[k], 0.5)))
               - zeta * gain_ss[k] * binary_entropy(min(qber[k], 0.5)))
        total += max(val, 0.0)
    return total

