"""Click model of a fiber link feeding a linear-optics Bell-state relay.

Alice and Bob send phase-randomised weak coherent pulses in polarisation.
The relay interferes them on a 50:50 beam splitter followed by polarising
beam splitters and four threshold detectors (D1H, D1V, D2H, D2V).  A
successful measurement is exactly two clicks in orthogonal polarisations:
D1H+D2V or D1V+D2H announce psi_minus, D1H+D1V or D2H+D2V announce psi_plus.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .protocol import BELL_STATES, LABELS, ObservationBlock, ProtocolConfig, split_signal_set

# detector order: D1H, D1V, D2H, D2V
_CLICK_PATTERNS = {
    "psi_minus": ((0, 3), (1, 2)),
    "psi_plus": ((0, 1), (2, 3)),
}
# sign of the interference term at each detector (output port 1 is +, port 2 is -)
_PORT_SIGN = np.array([1.0, 1.0, -1.0, -1.0])


@dataclass(frozen=True)
class ChannelParams:
    """Symmetric fiber link and relay detectors.

    ``misalignment`` is the single-photon error rate the optical
    imperfections produce.  It is realised by opposite rotations of the two
    inputs, whose relative angle sets the psi_minus error rate, and a
    rotation of output port 2, which sets the psi_plus error rate.  Values
    above 1/2 saturate the psi_plus rate at 1/2.
    """

    distance_km: float = 0.0
    loss_db_per_km: float = 0.2
    det_efficiency: float = 0.145
    dark_rate: float = 6.02e-6
    misalignment: float = 0.015
    rep_rate_hz: float = 1e9
    phase_nodes: int = 64

    def __post_init__(self):
        if self.distance_km < 0 or self.loss_db_per_km < 0:
            raise ValueError("distance and loss must be nonnegative")
        if not 0 < self.det_efficiency <= 1:
            raise ValueError("det_efficiency must lie in (0, 1]")
        if not 0 <= self.dark_rate < 1:
            raise ValueError("dark_rate must lie in [0, 1)")
        if not 0 <= self.misalignment <= 1:
            raise ValueError("misalignment must lie in [0, 1]")
        if self.phase_nodes < 4:
            raise ValueError("phase_nodes must be at least 4")

    @property
    def arm_transmittance(self) -> float:
        half = self.distance_km / 2.0
        return self.det_efficiency * 10.0 ** (-self.loss_db_per_km * half / 10.0)

    @property
    def rotation_angles(self) -> tuple[float, float, float]:
        """Rotations on Alice's input, Bob's input and output port 2."""
        rel = math.asin(math.sqrt(self.misalignment))
        # psi_plus single-photon error is 2 s (1 - s) with s = sin^2(output angle)
        s = (1.0 - math.sqrt(max(1.0 - 2.0 * self.misalignment, 0.0))) / 2.0
        return rel / 2.0, -rel / 2.0, math.asin(math.sqrt(s))


def _polarisation(basis: str, bit: int, theta: float) -> np.ndarray:
    angle = (0.0 if bit == 0 else math.pi / 2) if basis == "Z" else (
        math.pi / 4 if bit == 0 else -math.pi / 4)
    angle += theta
    return np.array([math.cos(angle), math.sin(angle)])


def _rotate(vec: np.ndarray, theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([c * vec[0] - s * vec[1], s * vec[0] + c * vec[1]])


def _detector_weights(basis, bit_a, bit_b, params: ChannelParams):
    """Per-detector ``(alpha, beta, kappa)`` so that the mean photon number is
    ``alpha*a + beta*b + kappa*sqrt(a*b)*cos(phi)``."""
    th_a, th_b, th_out = params.rotation_angles
    eta = params.arm_transmittance
    u = _polarisation(basis, bit_a, th_a)
    w = _polarisation(basis, bit_b, th_b)
    u2, w2 = _rotate(u, th_out), _rotate(w, th_out)
    p = np.array([u[0], u[1], u2[0], u2[1]])
    q = np.array([w[0], w[1], w2[0], w2[1]])
    alpha = eta * p**2 / 2.0
    beta = eta * q**2 / 2.0
    kappa = _PORT_SIGN * eta * p * q
    return alpha, beta, kappa


def _error_bits(basis: str, k: str, bit_a: int, bit_b: int) -> bool:
    if basis == "Z" or k == "psi_minus":
        return bit_a == bit_b
    return bit_a != bit_b


def gains(a, b, params: ChannelParams):
    """Gains and error gains for every Bell state and basis.

    Parameters
    ----------
    a, b : array_like
        Broadcastable intensity arrays.

    Returns
    -------
    dict
        ``{(k, basis): (gain, error_gain)}`` with arrays of the broadcast shape.
    """
    a, b = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float))
    M = params.phase_nodes
    phi = 2.0 * np.pi * np.arange(M) / M
    cos_phi = np.cos(phi)
    ln_keep = math.log1p(-params.dark_rate)
    sq = np.sqrt(a * b)
    out = {}
    for basis in ("Z", "X"):
        acc = {k: [np.zeros(a.shape), np.zeros(a.shape)] for k in BELL_STATES}
        for bit_a, bit_b in itertools.product((0, 1), repeat=2):
            alpha, beta, kappa = _detector_weights(basis, bit_a, bit_b, params)
            shape = (4,) + (1,) * a.ndim + (1,)
            lam = (alpha.reshape(shape) * a[None, ..., None]
                   + beta.reshape(shape) * b[None, ..., None]
                   + kappa.reshape(shape) * sq[None, ..., None] * cos_phi)
            ln_none = ln_keep - lam
            p_none = np.exp(ln_none)
            p_click = -np.expm1(ln_none)
            for k, pats in _CLICK_PATTERNS.items():
                prob = 0.0
                for i, j in pats:
                    others = [d for d in range(4) if d not in (i, j)]
                    prob = prob + p_click[i] * p_click[j] * p_none[others[0]] * p_none[others[1]]
                avg = prob.mean(axis=-1) / 4.0
                acc[k][0] = acc[k][0] + avg
                if _error_bits(basis, k, bit_a, bit_b):
                    acc[k][1] = acc[k][1] + avg
        for k in BELL_STATES:
            out[(k, basis)] = (acc[k][0], acc[k][1])
    return out


def gain_and_error(a: float, b: float, basis: str, k: str, params: ChannelParams):
    """Gain and error gain for one intensity pair, basis and Bell state."""
    g, e = gains(a, b, params)[(k, basis)]
    return float(g), float(e)


def photon_yields(n_max: int, params: ChannelParams):
    """Exact photon-number yields ``Y[n, m]`` and error yields.

    Uses the expansion of each click pattern into products of no-click
    probabilities, whose phase average is ``exp(-A) I0(B)``.

    Returns
    -------
    dict
        ``{(k, basis): (Y, Y_err)}`` with arrays of shape ``(n_max+1, n_max+1)``.
    """
    keep = 1.0 - params.dark_rate
    n = np.arange(n_max + 1)
    # C(n, j) table
    comb = np.array([[math.comb(i, j) for j in range(n_max + 1)] for i in range(n_max + 1)], float)
    out = {}
    for basis in ("Z", "X"):
        acc = {k: [np.zeros((n_max + 1,) * 2), np.zeros((n_max + 1,) * 2)] for k in BELL_STATES}
        for bit_a, bit_b in itertools.product((0, 1), repeat=2):
            alpha, beta, kappa = _detector_weights(basis, bit_a, bit_b, params)
            for k, pats in _CLICK_PATTERNS.items():
                y = np.zeros((n_max + 1, n_max + 1))
                for i, j in pats:
                    others = [d for d in range(4) if d not in (i, j)]
                    for sub in ((), (i,), (j,), (i, j)):
                        dets = list(sub) + others
                        coef = (-1.0) ** len(sub) * keep ** len(dets)
                        al, be, ka = alpha[dets].sum(), beta[dets].sum(), kappa[dets].sum()
                        y += coef * _series(n, comb, 1.0 - al, 1.0 - be, ka * ka / 4.0)
                y /= 4.0
                acc[k][0] += y
                if _error_bits(basis, k, bit_a, bit_b):
                    acc[k][1] += y
        for k in BELL_STATES:
            out[(k, basis)] = (acc[k][0], acc[k][1])
    return out


def _series(n, comb, x, y, c):
    """``sum_j C(n,j) C(m,j) c^j x^(n-j) y^(m-j)`` for all n, m."""
    size = len(n)
    res = np.zeros((size, size))
    for j in range(size):
        cn = comb[:, j] * np.where(n >= j, x ** np.clip(n - j, 0, None), 0.0)
        cm = comb[:, j] * np.where(n >= j, y ** np.clip(n - j, 0, None), 0.0)
        res += c**j * np.outer(cn, cm)
    return res


@dataclass
class ExpectedBlock:
    """Expected per-pulse statistics of one protocol run.

    ``gain[k][basis]`` and ``error_gain[k][basis]`` are 3x3 arrays indexed by
    intensity label pairs; ``counts`` holds the exact expected counts.
    """

    n_pulses: float
    config: ProtocolConfig
    params: ChannelParams
    gain: dict
    error_gain: dict

    def expected_counts(self, k: str, basis: str):
        p = self.config.joint(basis)
        return self.n_pulses * p * self.gain[k][basis], self.n_pulses * p * self.error_gain[k][basis]

    def qber(self, k: str) -> float:
        g = self.gain[k]["Z"][0, 0]
        return float(self.error_gain[k]["Z"][0, 0] / g) if g > 0 else 0.0


def expected_gains(config: ProtocolConfig, params: ChannelParams):
    av, bv = config.alice.values, config.bob.values
    table = gains(av[:, None], bv[None, :], params)
    gain = {k: {bs: table[(k, bs)][0] for bs in ("Z", "X")} for k in BELL_STATES}
    err = {k: {bs: table[(k, bs)][1] for bs in ("Z", "X")} for k in BELL_STATES}
    return gain, err


def expected_block(n_pulses: float, config: ProtocolConfig, params: ChannelParams):
    """Expected statistics plus observation blocks built from rounded expectations.

    Returns
    -------
    expected : ExpectedBlock
    blocks : list of ObservationBlock
        One per Bell state.
    """
    gain, err = expected_gains(config, params)
    exp = ExpectedBlock(float(n_pulses), config, params, gain, err)
    blocks = []
    for k in BELL_STATES:
        z, _ = exp.expected_counts(k, "Z")
        x, xe = exp.expected_counts(k, "X")
        blocks.append(_make_block(k, config, np.rint(z), np.rint(x), np.rint(xe),
                                  exp.qber(k), n_pulses))
    return exp, blocks


def _make_block(k, config, z, x, xe, qber, n_pulses):
    z = z.astype(np.int64)
    n_k, r_k = split_signal_set(int(z[0, 0]), config.n_k_fraction)
    pz, px = config.joint("Z"), config.joint("X")
    return ObservationBlock(
        bell_state=k, alice=config.alice, bob=config.bob,
        z_counts=z, x_counts=x.astype(np.int64), x_errors=np.minimum(xe, x).astype(np.int64),
        p_z=pz, p_x=px, qber=float(min(max(qber, 0.0), 1.0)), n_k=n_k, r_k=r_k,
        n_z_pulses=n_pulses * pz.sum(), n_x_pulses=n_pulses * px.sum(),
    )


# numpy's hypergeometric sampler needs ngood, nbad < 1e9
_HYPER_LIMIT = 10**9 - 1


def hypergeometric(rng, good: int, bad: int, draws: int) -> int:
    """Hypergeometric draw without numpy's population limit.

    Within numpy's range this is ``rng.hypergeometric``.  Beyond it the
    draw is normal with the exact mean and variance, rounded and clipped to
    the support; there the standard deviation is large enough that the
    discretisation is immaterial.
    """
    good, bad, draws = int(good), int(bad), int(draws)
    total = good + bad
    if not 0 <= draws <= total:
        raise ValueError("need 0 <= draws <= good + bad")
    if good < _HYPER_LIMIT and bad < _HYPER_LIMIT:
        return int(rng.hypergeometric(good, bad, draws))
    p = good / total
    var = draws * p * (1.0 - p) * (total - draws) / (total - 1)
    x = round(draws * p + math.sqrt(var) * rng.standard_normal())
    return int(min(max(x, draws - bad, 0), good, draws))


def sample_block(expected: ExpectedBlock, seed) -> list[ObservationBlock]:
    """Poisson-sampled observation blocks, reproducible for a fixed seed.

    Error and non-error counts are drawn independently, so every count is
    Poisson with its expected mean and errors never exceed counts.  The QBER
    is the error fraction of a hypergeometric test sample of ``R_k`` bits.
    """
    rng = np.random.default_rng(seed)
    blocks = []
    for k in BELL_STATES:
        z_mean, ze_mean = expected.expected_counts(k, "Z")
        x_mean, xe_mean = expected.expected_counts(k, "X")
        ze = rng.poisson(ze_mean)
        z = ze + rng.poisson(np.maximum(z_mean - ze_mean, 0.0))
        xe = rng.poisson(xe_mean)
        x = xe + rng.poisson(np.maximum(x_mean - xe_mean, 0.0))
        n_k, r_k = split_signal_set(int(z[0, 0]), expected.config.n_k_fraction)
        if r_k > 0:
            test_err = hypergeometric(rng, int(ze[0, 0]), int(z[0, 0] - ze[0, 0]), r_k)
            qber = test_err / r_k
        else:
            qber = 0.0
        blocks.append(_make_block(k, expected.config, z.astype(float), x.astype(float),
                                  xe.astype(float), qber, expected.n_pulses))
    return blocks

