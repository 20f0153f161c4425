"""Concentration inequalities used throughout parameter estimation.

Multiplicative Chernoff bounds with an unknown mean (and their Hoeffding
fallbacks), Serfling-type sampling-without-replacement corrections and the
QBER inflation term for the sifted key.  All functions are pure.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# ln-space thresholds of the three exponential tests
TEST1_LIMIT = (3.0 / (4.0 * math.sqrt(2.0))) ** 2
TEST2_LIMIT = 1.0 / 3.0
TEST3_LIMIT = ((2.0 * math.e - 1.0) / 2.0) ** 2


class DomainError(ValueError):
    """Argument outside the domain of a bound."""


def _check_prob(name, value, *, allow_one=False):
    upper_ok = value <= 1.0 if allow_one else value < 1.0
    if not (value > 0.0 and upper_ok):
        interval = "(0, 1]" if allow_one else "(0, 1)"
        raise DomainError(f"{name} must lie in {interval}, got {value!r}")


@dataclass(frozen=True)
class TailBudget:
    """Failure probabilities spent on one unknown-mean Chernoff interval.

    ``eps_mean`` pays for the Hoeffding lower bound on the mean,
    ``eps_lower`` for ``x < mu - lower_dev`` and ``eps_upper`` for
    ``x > mu + upper_dev``.
    """

    eps_mean: float
    eps_lower: float
    eps_upper: float

    def __post_init__(self):
        for name in ("eps_mean", "eps_lower", "eps_upper"):
            _check_prob(name, getattr(self, name))
        if self.total >= 1.0:
            raise DomainError(f"tail budget total {self.total} must be < 1")

    @property
    def total(self) -> float:
        return self.eps_mean + self.eps_lower + self.eps_upper

    @classmethod
    def uniform(cls, gamma: float) -> "TailBudget":
        """Split a total failure probability evenly over the three tails."""
        return cls(gamma / 3.0, gamma / 3.0, gamma / 3.0)


@dataclass(frozen=True)
class FluctuationInterval:
    """``x - mu`` lies in ``[-lower_dev, upper_dev]`` except with ``failure_prob``."""

    lower_dev: float
    upper_dev: float
    failure_prob: float
    branch: int
    mu_lower: float = float("nan")


def _result(v):
    """Plain float for scalar input, array otherwise."""
    v = np.asarray(v, dtype=float)
    return float(v) if v.ndim == 0 else v


def g_dev(x, y: float):
    """Return ``sqrt(2 x ln(1/y))``.  ``x`` may be an array."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise DomainError(f"x must be nonnegative, got {x!r}")
    _check_prob("y", y, allow_one=True)
    return _result(np.sqrt(2.0 * x * -math.log(y)))


def hoeffding_rel(x, y, z: float):
    """Relative upper deviation ``ln(z^-2)(1 + sqrt(1 + 4xy/ln(z^-2)))/(2x)``.

    ``x`` is the number of trials and ``y`` the per-trial probability.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if not np.all(x > 0):
        raise DomainError(f"x must be positive, got {x!r}")
    if not np.all((y > 0) & (y <= 1)):
        raise DomainError(f"y must lie in (0, 1], got {y!r}")
    _check_prob("z", z)
    L = -2.0 * math.log(z)
    return _result(L * (1.0 + np.sqrt(1.0 + 4.0 * x * y / L)) / (2.0 * x))


def mu_lower(x: float, n: float, eps: float) -> float:
    """Hoeffding lower confidence bound ``x - sqrt(n/2 ln(1/eps))`` on a mean.

    May be negative; callers decide what that means.
    """
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n!r}")
    _check_prob("eps", eps)
    return x - math.sqrt(n / 2.0 * -math.log(eps))


def chernoff_deviations(x, n, budget: TailBudget):
    """Vectorised unknown-mean Chernoff interval.

    Parameters
    ----------
    x : array_like
        Observed counts.
    n : array_like
        Number of Bernoulli trials behind each count.
    budget : TailBudget
        Shared by every element.

    Returns
    -------
    lower, upper, gamma, branch, mu_l : ndarray
        Deviations, failure probability, branch number (1..6) and the
        Hoeffding lower bound on the mean.
    """
    x = np.asarray(x, dtype=float)
    n = np.asarray(n, dtype=float)
    if np.any(x < 0) or np.any(x > n):
        raise DomainError("counts must satisfy 0 <= x <= n")
    if np.any(n < 1):
        raise DomainError("trial count n must be >= 1")
    eps_m, eps, eps_hat = budget.eps_mean, budget.eps_lower, budget.eps_upper
    ln_m = -math.log(eps_m)
    ln_lo = -math.log(eps)
    ln_hi = -math.log(eps_hat)

    mu_l = x - np.sqrt(n / 2.0 * ln_m)
    positive = mu_l > 0
    safe_mu = np.where(positive, mu_l, 1.0)
    # log-space form of (c/eps)^(1/mu_L) <= exp(limit); fails when mu_L <= 0
    t1 = positive & (math.log(2.0 / eps) / safe_mu <= TEST1_LIMIT)
    t2 = positive & (ln_hi / safe_mu < TEST2_LIMIT)
    t3 = positive & (ln_hi / safe_mu < TEST3_LIMIT)

    hoeff_lo = np.sqrt(n / 2.0 * ln_lo)
    # ln(16/eps^4) == ln 16 + 4 ln(1/eps), kept in this form to avoid underflow
    cher_lo = np.sqrt(2.0 * x * (math.log(16.0) + 4.0 * ln_lo))
    cher_hi_32 = np.sqrt(2.0 * x * 1.5 * ln_hi)
    cher_hi_2 = np.sqrt(2.0 * x * 2.0 * ln_hi)

    branch = np.select(
        [t1 & t2, t1 & t3, t1, t2, t3],
        [1, 2, 3, 4, 5],
        default=6,
    )
    lower = np.where(t1, cher_lo, hoeff_lo)
    # branches 3 and 6 fall back to Hoeffding with eps (not eps_hat), as printed
    upper = np.select(
        [t2, t3],
        [cher_hi_32, cher_hi_2],
        default=hoeff_lo,
    )
    gamma = np.where(branch == 6, eps + eps_hat, budget.total)
    return lower, upper, gamma, branch, mu_l


def chernoff_interval(x: float, n: float, budget: TailBudget) -> FluctuationInterval:
    """Interval for ``delta = x - mu`` of a sum of ``n`` independent Bernoullis.

    The observation ``x`` satisfies ``mu - lower_dev <= x <= mu + upper_dev``
    except with probability ``failure_prob``.  The branch records which of
    the six generalised cases applied.
    """
    if x > n:
        raise DomainError(f"observed count {x} exceeds trial count {n}")
    lo, hi, gam, br, mul = chernoff_deviations(x, n, budget)
    return FluctuationInterval(float(lo), float(hi), float(gam), int(br), float(mul))


def serfling_lambda(x, y, z: float):
    """Sampling correction ``sqrt((x-y+1) ln(1/z) / (2xy))``.

    ``x`` is the population size and ``y`` the sample drawn without
    replacement.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if not np.all((y >= 1) & (x >= y)):
        raise DomainError(f"need x >= y >= 1, got x={x!r}, y={y!r}")
    _check_prob("z", z)
    return _result(np.sqrt((x - y + 1.0) * -math.log(z) / (2.0 * x * y)))


def serfling_upsilon(x, y, z: float):
    """Phase-error sampling correction ``sqrt((x+1) ln(1/z) / (2y(x+y)))``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(x < 0) or np.any(y < 1):
        raise DomainError(f"need x >= 0 and y >= 1, got x={x!r}, y={y!r}")
    _check_prob("z", z)
    return _result(np.sqrt((x + 1.0) * -math.log(z) / (2.0 * y * (x + y))))


def qber_inflation_chi(x, y, z: float):
    """Inflation of the test-sample QBER into a bound on the key-string error.

    ``x`` is the key sample size ``n_k`` and ``y`` the test sample ``R_k``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(x < 1) or np.any(y < 1):
        raise DomainError(f"need x, y >= 1, got x={x!r}, y={y!r}")
    _check_prob("z", z)
    return _result(np.sqrt((y + x) * (y + 1.0) / (x * y * y) * -math.log(z)))
