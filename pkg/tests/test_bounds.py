import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mdiqkd import bounds
from mdiqkd.bounds import DomainError, TailBudget

probs = st.floats(1e-15, 0.5)
counts = st.floats(1.0, 1e12)


def test_hoeffding_small_argument_limit():
    L = 2 * math.log(1e10)
    assert bounds.hoeffding_rel(1e12, 1e-15, 1e-10) == pytest.approx(L / 1e12, rel=1e-6)


def test_mu_lower_rejects_eps_one():
    with pytest.raises(DomainError):
        bounds.mu_lower(5, 10, 1.0)
    assert bounds.mu_lower(5, 10, 1 - 1e-12) == pytest.approx(5, abs=1e-5)


def test_serfling_trivial_examples():
    assert bounds.serfling_lambda(1000, 1000, math.exp(-2)) == pytest.approx(1e-3)
    assert bounds.serfling_lambda(500, 500, 1e-5) == pytest.approx(math.sqrt(math.log(1e5) / (2 * 500**2)))
    assert bounds.serfling_upsilon(0, 1000, math.exp(-2)) == pytest.approx(1e-3)
    assert bounds.serfling_upsilon(10, 10, 1 - 1e-15) == pytest.approx(0, abs=1e-7)
    assert bounds.qber_inflation_chi(10, 10, 1 - 1e-15) == pytest.approx(0, abs=1e-6)


def test_chi_large_test_sample_limit():
    x, z = 1e4, 1e-10
    assert bounds.qber_inflation_chi(x, 1e8, z) == pytest.approx(math.sqrt(math.log(1 / z) / x), rel=0.01)


@pytest.mark.parametrize("call", [
    lambda: bounds.g_dev(-1, 0.1),
    lambda: bounds.g_dev(1, 0.0),
    lambda: bounds.hoeffding_rel(0, 0.1, 0.1),
    lambda: bounds.hoeffding_rel(1, 1.5, 0.1),
    lambda: bounds.hoeffding_rel(1, 0.1, 1.0),
    lambda: bounds.serfling_lambda(5, 10, 0.1),
    lambda: bounds.serfling_upsilon(-1, 10, 0.1),
    lambda: bounds.qber_inflation_chi(0, 10, 0.1),
    lambda: bounds.chernoff_interval(11, 10, TailBudget.uniform(0.1)),
    lambda: TailBudget(0.5, 0.3, 0.3),
])
def test_domain_errors(call):
    with pytest.raises(DomainError):
        call()


def test_all_successes_small_n_falls_back():
    n = 10
    iv = bounds.chernoff_interval(n, n, TailBudget(1e-10, 1e-10, 1e-10))
    hoeff = math.sqrt(n / 2 * math.log(1e10))
    assert iv.branch == 6
    assert iv.lower_dev == pytest.approx(hoeff)
    assert iv.upper_dev == pytest.approx(hoeff)
    assert iv.failure_prob == pytest.approx(2e-10)


@settings(max_examples=200, deadline=None)
@given(x=counts, a=probs, b=probs)
def test_monotone_in_probability(x, a, b):
    lo, hi = sorted((a, b))
    if hi / lo < 1 + 1e-9:
        return
    y = max(1.0, x / 3)
    assert bounds.g_dev(x, lo) > bounds.g_dev(x, hi)
    assert bounds.serfling_lambda(x, y, lo) > bounds.serfling_lambda(x, y, hi)
    assert bounds.serfling_upsilon(x, y, lo) > bounds.serfling_upsilon(x, y, hi)
    assert bounds.qber_inflation_chi(x, y, lo) > bounds.qber_inflation_chi(x, y, hi)


def test_relative_shrinkage():
    budget = TailBudget.uniform(1e-10)
    rel = []
    for e in range(2, 9):
        x = 10.0**e
        iv = bounds.chernoff_interval(x, 2 * x, budget)
        rel.append((iv.lower_dev / x, iv.upper_dev / x))
    rel = np.array(rel)
    assert np.all(np.diff(rel, axis=0) < 0)
    assert rel[-1].max() < 2e-3


@settings(max_examples=500, deadline=None)
@given(n=st.floats(1.0, 1e10), frac=st.floats(0.0, 1.0),
       e1=st.floats(1e-12, 0.3), e2=st.floats(1e-12, 0.3), e3=st.floats(1e-12, 0.3))
def test_branch_matches_tests(n, frac, e1, e2, e3):
    """The reported branch is exactly the one the three tests select."""
    x = math.floor(n * frac)
    budget = TailBudget(e1, e2, e3)
    iv = bounds.chernoff_interval(x, n, budget)
    mu = x - math.sqrt(n / 2 * math.log(1 / e1))
    if mu > 0:
        t1 = math.log(2 / e2) / mu <= (3 / (4 * math.sqrt(2))) ** 2
        t2 = math.log(1 / e3) / mu < 1 / 3
        t3 = math.log(1 / e3) / mu < ((2 * math.e - 1) / 2) ** 2
    else:
        t1 = t2 = t3 = False
    expected = 1 if t1 and t2 else 2 if t1 and t3 else 3 if t1 else 4 if t2 else 5 if t3 else 6
    assert iv.branch == expected
    hoeff = math.sqrt(n / 2 * math.log(1 / e2))
    if t1:
        assert iv.lower_dev == pytest.approx(math.sqrt(2 * x * math.log(16 / e2**4)))
    else:
        assert iv.lower_dev == pytest.approx(hoeff)
    if t2:
        assert iv.upper_dev == pytest.approx(math.sqrt(2 * x * math.log(e3**-1.5)))
    elif t3:
        assert iv.upper_dev == pytest.approx(math.sqrt(2 * x * math.log(e3**-2)))
    else:
        assert iv.upper_dev == pytest.approx(hoeff)
    assert iv.failure_prob == pytest.approx(e2 + e3 if expected == 6 else e1 + e2 + e3)


def test_vectorised_matches_scalar():
    rng = np.random.default_rng(3)
    n = rng.integers(1, 10**7, 50).astype(float)
    x = np.floor(n * rng.random(50))
    budget = TailBudget.uniform(1e-6)
    lo, hi, gam, br, _ = bounds.chernoff_deviations(x, n, budget)
    for i in range(50):
        iv = bounds.chernoff_interval(x[i], n[i], budget)
        assert (iv.lower_dev, iv.upper_dev, iv.failure_prob, iv.branch) == (lo[i], hi[i], gam[i], br[i])
    assert np.array_equal(bounds.g_dev(x, 0.1), [bounds.g_dev(v, 0.1) for v in x])
