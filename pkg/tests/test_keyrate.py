import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mdiqkd import keyrate
from mdiqkd.bounds import DomainError
from mdiqkd.channel import ChannelParams, expected_block
from mdiqkd.keyrate import SecurityBudget, StateBudget
from mdiqkd.optimizer import asymptotic
from mdiqkd.protocol import DecoyIntensities, ProtocolConfig, SelectionProbs, YieldEstimates

ST = StateBudget(*[1e-11] * 7)


def test_entropy_edges():
    assert keyrate.binary_entropy(0.0) == keyrate.binary_entropy(1.0) == 0.0
    assert keyrate.binary_entropy(0.5) == 1.0
    with pytest.raises(DomainError):
        keyrate.binary_entropy(1.5)


def test_leak_edges():
    assert keyrate.leak_ec(1e6, 0.0) == 0.0
    assert keyrate.leak_ec(1234, 0.5, 1.0) == pytest.approx(1234)


def test_key_length_edges():
    assert keyrate.key_length(0, 0, 0.01, 0, 1e-15, ST) == 0
    pen = keyrate.penalty_bits(1e-15, ST)
    # e = 1/2 removes the single-photon term
    assert keyrate.raw_length(1e6, 1e6, 0.5, 0, 1e-15, ST) == pytest.approx(1e6 - pen)


@settings(max_examples=200, deadline=None)
@given(n0=st.floats(0, 1e8), n1=st.floats(0, 1e8), e=st.floats(0, 0.5), leak=st.floats(0, 1e7),
       d=st.floats(0, 1e6), de=st.floats(0, 0.2))
def test_length_monotonicity(n0, n1, e, leak, d, de):
    base = keyrate.key_length(n0, n1, e, leak, 1e-15, ST)
    assert keyrate.key_length(n0 + d, n1, e, leak, 1e-15, ST) >= base
    assert keyrate.key_length(n0, n1 + d, e, leak, 1e-15, ST) >= base
    assert keyrate.key_length(n0, n1, min(e + de, 0.5), leak, 1e-15, ST) <= base
    assert keyrate.key_length(n0, n1, e, leak + d, 1e-15, ST) <= base
    tighter = StateBudget(*[1e-13] * 7)
    assert keyrate.key_length(n0, n1, e, leak, 1e-15, tighter) <= base


def test_composition_audit():
    budget = SecurityBudget.uniform(1e-10, 1e-15)
    assert keyrate.compose_secrecy(budget) + budget.eps_cor == pytest.approx(1e-10, rel=1e-12)
    st_ = budget.states["psi_minus"]
    assert keyrate.compose_secrecy(budget) >= st_.eps_sec
    with pytest.raises(DomainError):
        keyrate.compose_secrecy(budget, target=5e-11)


def test_tiny_components_compose_to_tiny():
    b = SecurityBudget(1e-30, {k: StateBudget(*[1e-30] * 7) for k in ("psi_minus", "psi_plus")})
    assert keyrate.compose_secrecy(b) < 1e-28


def test_sifting_gate_boundaries():
    assert keyrate.sifting_gate(0.11, 0.1, 0.11, 0.3) == ""
    assert keyrate.sifting_gate(0.1100001, 0.1, 0.11, 0.3) == "E_tol"
    assert keyrate.sifting_gate(0.05, 0.31, 0.11, 0.3) == "e_tol"
    assert keyrate.sifting_gate(0.05, None, 0.11, 0.3) == "unestimable"


def _est(k, n0, n1, e):
    return YieldEstimates(k, n0, n0, n1, n1, 1000, 10, int(e * n1), e, 1e-11, 1e-11, 1e-11)


def test_assemble_partial_and_global_abort():

    probs = SelectionProbs.from_fractions(0.5, 0.3, 0.9, 0.3)
    ints = DecoyIntensities(0.2, 0.03, 5e-4)
    cfg = ProtocolConfig(ints, ints, probs, probs, 0.99)
    _, blocks = expected_block(1e12, cfg, ChannelParams(distance_km=10))
    budget = SecurityBudget.uniform()
    good = [_est(b.bell_state, 10**6, 10**7, 0.05) for b in blocks]
    res = keyrate.assemble(blocks, good, budget, 0.11, 0.3)
    assert not res.aborted and res.length == sum(s.length for s in res.states) > 0

    mixed = [good[0], _est(blocks[1].bell_state, 10**6, 10**7, 0.4)]
    res2 = keyrate.assemble(blocks, mixed, budget, 0.11, 0.3)
    assert res2.aborted_states == [blocks[1].bell_state]
    assert res2.length == res.states[0].length

    bad = [_est(b.bell_state, 10**6, 10**7, 0.4) for b in blocks]
    res3 = keyrate.assemble(blocks, bad, budget, 0.11, 0.3)
    assert res3.aborted and res3.length == 0


def test_asymptote_properties():
    assert asymptotic(0.0, ChannelParams(det_efficiency=1e-12, dark_rate=0.0))[0] == 0.0
    r0, _ = asymptotic(0.0)
    r150, _ = asymptotic(150.0)
    assert r0 > r150 > 0
    assert keyrate.asymptotic_rate(0.3, 0.3, {"k": 0.0}, {"k": 0.0}, {"k": 0.5}, {"k": 0.0}, {"k": 0.0}) == 0.0
