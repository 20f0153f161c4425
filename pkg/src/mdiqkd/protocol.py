"""Protocol settings and the per-Bell-state observation block."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

BELL_STATES = ("psi_minus", "psi_plus")
LABELS = ("s", "d1", "d2")
BASES = ("Z", "X")


@dataclass(frozen=True)
class DecoyIntensities:
    """Signal and two decoy mean photon numbers of one party."""

    signal: float
    decoy1: float
    decoy2: float

    def __post_init__(self):
        vals = (self.signal, self.decoy1, self.decoy2)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"intensities must be finite: {vals}")
        if not (self.signal > self.decoy1 > self.decoy2 >= 0):
            raise ValueError(f"need signal > decoy1 > decoy2 >= 0, got {vals}")

    @property
    def values(self) -> np.ndarray:
        return np.array([self.signal, self.decoy1, self.decoy2])


@dataclass(frozen=True)
class SelectionProbs:
    """``p[i, j]``: probability of intensity ``LABELS[i]`` in basis ``BASES[j]``."""

    p: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        object.__setattr__(self, "p", p)
        if p.shape != (3, 2):
            raise ValueError("selection probabilities must have shape (3, 2)")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("selection probabilities must be a distribution")

    @classmethod
    def from_fractions(cls, q_signal, q_decoy1, pz_signal, pz_decoy):
        """Intensity fractions plus the Z-basis probability per intensity class."""
        q = np.array([q_signal, q_decoy1, 1.0 - q_signal - q_decoy1])
        pz = np.array([pz_signal, pz_decoy, pz_decoy])
        if np.any(q <= 0):
            raise ValueError(f"intensity fractions must be positive: {q}")
        return cls(np.column_stack([q * pz, q * (1.0 - pz)]))


@dataclass(frozen=True)
class ProtocolConfig:
    """Everything Alice and Bob fix before sending ``N`` pulse pairs."""

    alice: DecoyIntensities
    bob: DecoyIntensities
    alice_probs: SelectionProbs
    bob_probs: SelectionProbs
    n_k_fraction: float = 0.99
    e_tol: float = 0.11
    phase_tol: float = 0.3

    def __post_init__(self):
        if not 0 < self.n_k_fraction < 1:
            raise ValueError("n_k_fraction must lie in (0, 1)")

    def joint(self, basis: str) -> np.ndarray:
        """``p_{a,b,basis}`` for every intensity pair, shape (3, 3)."""
        j = BASES.index(basis)
        return np.outer(self.alice_probs.p[:, j], self.bob_probs.p[:, j])


@dataclass
class ObservationBlock:
    """Counts announced for one Bell state ``k``.

    Arrays are indexed ``[alice_label, bob_label]`` in ``LABELS`` order.
    ``n_z_pulses`` and ``n_x_pulses`` are the numbers of pulse pairs in which
    both parties chose Z (X); only the LP estimator uses them.
    """

    bell_state: str
    alice: DecoyIntensities
    bob: DecoyIntensities
    z_counts: np.ndarray
    x_counts: np.ndarray
    x_errors: np.ndarray
    p_z: np.ndarray
    p_x: np.ndarray
    qber: float
    n_k: int
    r_k: int
    n_z_pulses: float = 0.0
    n_x_pulses: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.bell_state not in BELL_STATES:
            raise ValueError(f"unknown Bell state {self.bell_state!r}")
        for name in ("z_counts", "x_counts", "x_errors"):
            arr = np.asarray(getattr(self, name), dtype=np.int64)
            if arr.shape != (3, 3) or np.any(arr < 0):
                raise ValueError(f"{name} must be a nonnegative 3x3 array")
            setattr(self, name, arr)
        self.p_z = np.asarray(self.p_z, dtype=float)
        self.p_x = np.asarray(self.p_x, dtype=float)
        if np.any(self.x_errors > self.x_counts):
            raise ValueError("x_errors exceed x_counts")
        if self.p_z.sum() + self.p_x.sum() > 1.0 + 1e-12:
            raise ValueError("selection probabilities sum to more than 1")
        if self.n_k < 0 or self.r_k < 0 or self.n_k + self.r_k > self.z_counts[0, 0]:
            raise ValueError("n_k + R_k must not exceed the signal-signal Z count")
        if not 0.0 <= self.qber <= 1.0:
            raise ValueError("qber must lie in [0, 1]")

    @property
    def z_signal(self) -> int:
        return int(self.z_counts[0, 0])


def split_signal_set(z_signal: int, fraction: float) -> tuple[int, int]:
    """Return ``(n_k, R_k)`` for a signal-signal Z set of size ``z_signal``."""
    n_k = int(math.floor(fraction * z_signal))
    return n_k, z_signal - n_k


def block_from_counts(bell_state, config: ProtocolConfig, z, x, xe, qber,
                      n_z_pulses=0.0, n_x_pulses=0.0) -> ObservationBlock:
    z = np.asarray(z, dtype=np.int64)
    n_k, r_k = split_signal_set(int(z[0, 0]), config.n_k_fraction)
    return ObservationBlock(
        bell_state=bell_state, alice=config.alice, bob=config.bob,
        z_counts=z, x_counts=x, x_errors=xe,
        p_z=config.joint("Z"), p_x=config.joint("X"),
        qber=float(qber), n_k=n_k, r_k=r_k,
        n_z_pulses=n_z_pulses, n_x_pulses=n_x_pulses,
    )


CSV_HEADER = ("k", "a_label", "b_label", "basis", "count")


def write_blocks_csv(path, blocks) -> None:
    """Write blocks as ``k,a_label,b_label,basis,count`` rows.

    ``Z_err`` (signal pair only) holds the errors found among the ``R_k``
    test bits.
    """
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for blk in blocks:
            for i, a in enumerate(LABELS):
                for j, b in enumerate(LABELS):
                    w.writerow((blk.bell_state, a, b, "Z", int(blk.z_counts[i, j])))
                    w.writerow((blk.bell_state, a, b, "X", int(blk.x_counts[i, j])))
                    w.writerow((blk.bell_state, a, b, "X_err", int(blk.x_errors[i, j])))
            w.writerow((blk.bell_state, "s", "s", "Z_err", int(round(blk.qber * blk.r_k))))


def read_blocks_csv(path, config: ProtocolConfig, n_pulses: float = 0.0) -> list[ObservationBlock]:
    """Parse a counts file written by :func:`write_blocks_csv` (or by hand)."""
    path = Path(path)
    data: dict[str, dict[str, np.ndarray]] = {}
    z_err: dict[str, int] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_HEADER:
            raise ValueError(f"{path}: header must be {','.join(CSV_HEADER)}")
        for row in reader:
            k = row["k"]
            if k not in BELL_STATES:
                raise ValueError(f"{path}: unknown Bell state {k!r}")
            count = int(row["count"])
            if row["basis"] == "Z_err":
                z_err[k] = count
                continue
            arrs = data.setdefault(k, {b: np.zeros((3, 3), np.int64) for b in ("Z", "X", "X_err")})
            if row["basis"] not in arrs:
                raise ValueError(f"{path}: unknown basis {row['basis']!r}")
            arrs[row["basis"]][LABELS.index(row["a_label"]), LABELS.index(row["b_label"])] = count
    pz, px = config.joint("Z"), config.joint("X")
    blocks = []
    for k in BELL_STATES:
        if k not in data:
            continue
        arrs = data[k]
        n_k, r_k = split_signal_set(int(arrs["Z"][0, 0]), config.n_k_fraction)
        qber = z_err.get(k, 0) / r_k if r_k > 0 else 0.0
        blocks.append(ObservationBlock(
            bell_state=k, alice=config.alice, bob=config.bob,
            z_counts=arrs["Z"], x_counts=arrs["X"], x_errors=arrs["X_err"],
            p_z=pz, p_x=px, qber=min(qber, 1.0), n_k=n_k, r_k=r_k,
            n_z_pulses=n_pulses * pz.sum(), n_x_pulses=n_pulses * px.sum(),
        ))
    return blocks


def with_counts(block: ObservationBlock, **changes) -> ObservationBlock:
    return replace(block, **changes)


@dataclass
class YieldEstimates:
    """Certified quantities for one Bell state.

    Counts are integers after the prescribed floors and ceilings.
    ``e_k1`` is the phase-error rate ``e_k1_count / n_k1`` (1/2 when
    ``n_k1 == 0``).  ``eps`` maps each failure-probability name to its value.
    """

    bell_state: str
    m_k0: int
    n_k0: int
    m_k1: int
    n_k1: int
    nbar_k1: int
    ebar_k1: int
    e_k1_count: int
    e_k1: float
    eps_k0: float
    eps_k1: float
    eps_ke: float
    eps: dict = field(default_factory=dict)
    unestimable: bool = False
    diagnostics: dict = field(default_factory=dict)
