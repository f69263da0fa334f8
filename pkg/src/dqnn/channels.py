"""Kraus channels, trajectory sampling and amplitude-damping corruption states."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .pauli import I2, X
from .qcore import as_density, ket, n_qubits_of

COMPLETENESS_TOL = 1e-10

AD_CASES = ("e0_all", "damp_q1", "damp_q2", "damp_q3", "damp_q4")


def make_rng(seed) -> np.random.Generator:
    """A Generator from an int seed, a SeedSequence, or an existing Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass(frozen=True, eq=False)
class KrausChannel:
    operators: tuple
    labels: tuple
    kind: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        ops = tuple(np.array(op, dtype=complex) for op in self.operators)
        if not ops:
            raise ValueError("a channel needs at least one Kraus operator")
        dim = ops[0].shape[0]
        for op in ops:
            if op.shape != (dim, dim):
                raise ValueError("Kraus operators must be square and of equal size")
            op.setflags(write=False)
        if len(self.labels) != len(ops):
            raise ValueError("one label per Kraus operator required")
        total = sum(op.conj().T @ op for op in ops)
        if np.max(np.abs(total - np.eye(dim))) > COMPLETENESS_TOL:
            raise ValueError("Kraus operators violate completeness")
        object.__setattr__(self, "operators", ops)
        object.__setattr__(self, "labels", tuple(self.labels))

    def __eq__(self, other):
        if not isinstance(other, KrausChannel):
            return NotImplemented
        return (self.labels == other.labels and self.kind == other.kind
                and self.params == other.params and len(self.operators) == len(other.operators)
                and all(np.array_equal(a, b) for a, b in zip(self.operators, other.operators)))

    def __hash__(self):
        return hash((self.kind, self.labels, tuple(sorted(self.params.items()))))

    @property
    def dim(self) -> int:
        return self.operators[0].shape[0]

    @property
    def n_qubits(self) -> int:
        return n_qubits_of(self.dim)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise ValueError(
                f"channel {self.kind!r} has no case {label!r}; "
                f"available: {', '.join(self.labels)}") from None

    def config(self) -> dict:
        return {"kind": self.kind, **self.params, "qubits": self.n_qubits}

    def case_weights(self) -> np.ndarray | None:
        """Per-operator c_k when every E_k^dag E_k = c_k I, else None.

        For such channels the outcome probabilities do not depend on the state.
        """
        weights = []
        for op in self.operators:
            g = op.conj().T @ op
            c = g[0, 0].real
            if np.max(np.abs(g - c * np.eye(self.dim))) > COMPLETENESS_TOL:
                return None
            weights.append(c)
        return np.array(weights)


def _check_prob(name: str, value: float) -> None:
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {value}")


def _flip_label(flipped: Sequence[int]) -> str:
    if not flipped:
        return "no_error"
    return "flip_" + "_".join(f"q{q + 1}" for q in flipped)


def bitflip_iid(p: float, n_qubits: int = 1) -> KrausChannel:
    """Independent NOT on each qubit with probability p; 2**n operators, zero terms dropped."""
    _check_prob("p", p)
    ops, labels = [], []
    for pattern in itertools.product((0, 1), repeat=n_qubits):
        k = sum(pattern)
        weight = p**k * (1 - p) ** (n_qubits - k)
        if weight == 0:
            continue
        op = np.ones((1, 1), dtype=complex)
        for bit in pattern:
            op = np.kron(op, X if bit else I2)
        ops.append(np.sqrt(weight) * op)
        labels.append(_flip_label([q for q, b in enumerate(pattern) if b]))
    return KrausChannel(tuple(ops), tuple(labels), "bitflip_iid",
                        {"p": float(p)})


def single_error_bitflip(p: float, n_qubits: int = 3) -> KrausChannel:
    """At most one flip: no error with 1-p, each single flip with p/n."""
    _check_prob("p", p)
    dim = 2**n_qubits
    ops, labels = [], []
    if p < 1:
        ops.append(np.sqrt(1 - p) * np.eye(dim, dtype=complex))
        labels.append("no_error")
    if p > 0:
        for q in range(n_qubits):
            op = np.ones((1, 1), dtype=complex)
            for r in range(n_qubits):
                op = np.kron(op, X if r == q else I2)
            ops.append(np.sqrt(p / n_qubits) * op)
            labels.append(_flip_label([q]))
    return KrausChannel(tuple(ops), tuple(labels), "single_error_bitflip",
                        {"p": float(p)})


def amplitude_damping_ops(gamma: float) -> tuple[np.ndarray, np.ndarray]:
    _check_prob("gamma", gamma)
    e0 = np.array([[1, 0], [0, np.sqrt(1 - gamma)]], dtype=complex)
    e1 = np.array([[0, np.sqrt(gamma)], [0, 0]], dtype=complex)
    return e0, e1


def amplitude_damping(gamma: float, n_qubits: int = 1) -> KrausChannel:
    """Per-qubit amplitude damping; operator labels name the damped qubits."""
    e = amplitude_damping_ops(gamma)
    ops, labels = [], []
    for pattern in itertools.product((0, 1), repeat=n_qubits):
        op = np.ones((1, 1), dtype=complex)
        for bit in pattern:
            op = np.kron(op, e[bit])
        ops.append(op)
        damped = [q for q, b in enumerate(pattern) if b]
        labels.append("e0_all" if not damped
                      else "damp_" + "_".join(f"q{q + 1}" for q in damped))
    return KrausChannel(tuple(ops), tuple(labels), "amplitude_damping",
                        {"gamma": float(gamma)})


def identity_channel(n_qubits: int) -> KrausChannel:
    return KrausChannel((np.eye(2**n_qubits, dtype=complex),), ("no_error",),
                        "identity", {})


CHANNEL_KINDS = ("bitflip_iid", "single_error_bitflip", "amplitude_damping")


def channel_from_config(cfg: dict) -> KrausChannel:
    """Build a channel from ``{kind, p|gamma, qubits}``."""
    kind = cfg.get("kind")
    n = int(cfg.get("qubits", 1))
    if kind == "bitflip_iid":
        return bitflip_iid(float(cfg["p"]), n)
    if kind == "single_error_bitflip":
        return single_error_bitflip(float(cfg["p"]), n)
    if kind == "amplitude_damping":
        return amplitude_damping(float(cfg["gamma"]), n)
    if kind == "identity":
        return identity_channel(n)
    raise ValueError(f"unknown channel kind {kind!r}; expected one of {CHANNEL_KINDS}")


def apply_kraus(ch: KrausChannel, rho: np.ndarray) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (ch.dim, ch.dim):
        raise ValueError(f"channel acts on dimension {ch.dim}, state has {rho.shape}")
    return sum(op @ rho @ op.conj().T for op in ch.operators)


def superoperator(ch: KrausChannel) -> np.ndarray:
    """Matrix acting on row-major vec(rho): sum_k E_k (x) conj(E_k)."""
    return sum(np.kron(op, op.conj()) for op in ch.operators)


@dataclass(frozen=True)
class CorruptionOutcome:
    state: np.ndarray
    probability: float
    case_label: str


def enumerate_corruption(ch: KrausChannel, psi: np.ndarray) -> list[CorruptionOutcome]:
    """Every non-vanishing trajectory E_k|psi> with its probability."""
    psi = np.asarray(psi, dtype=complex)
    if psi.shape != (ch.dim,):
        raise ValueError(f"channel acts on dimension {ch.dim}, state has {psi.shape}")
    out = []
    for op, label in zip(ch.operators, ch.labels):
        v = op @ psi
        prob = float(np.vdot(v, v).real)
        if prob > 0:
            out.append(CorruptionOutcome(v / np.sqrt(prob), prob, label))
    return out


def sample_corruption(ch: KrausChannel, psi: np.ndarray, rng_seed=None) -> CorruptionOutcome:
    """Draw one trajectory with probability ||E_k psi||**2."""
    rng = make_rng(rng_seed)
    outcomes = enumerate_corruption(ch, psi)
    probs = np.array([o.probability for o in outcomes])
    # total is 1 by completeness; normalize away rounding
    k = rng.choice(len(outcomes), p=probs / probs.sum())
    return outcomes[k]


def forced_case(ch: KrausChannel, state: np.ndarray, label: str) -> np.ndarray:
    """Normalized output of a single Kraus operator (vector in, vector out; matrix in, matrix out)."""
    op = ch.operators[ch.index(label)]
    state = np.asarray(state, dtype=complex)
    if state.ndim == 1:
        v = op @ state
        norm = np.linalg.norm(v)
        if norm == 0:
            raise ValueError(f"case {label!r} has zero probability for this state")
        return v / norm
    out = op @ state @ op.conj().T
    tr = np.trace(out).real
    if tr <= 0:
        raise ValueError(f"case {label!r} has zero probability for this state")
    return out / tr


def ad_corruption_state(a: complex, b: complex, which: str,
                        gamma: float) -> CorruptionOutcome:
    """Closed-form single-damping outcomes of the 4-qubit amplitude-damping code.

    The unnormalized ket's squared norm is returned as the probability.
    """
    if which not in AD_CASES:
        raise ValueError(f"invalid case {which!r}; expected one of {AD_CASES}")
    if not 0 < gamma < 1:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    if abs(abs(a) ** 2 + abs(b) ** 2 - 1) > 1e-10:
        raise ValueError("|a|^2 + |b|^2 must equal 1")
    s2 = np.sqrt(2)
    g = 1 - gamma
    if which == "e0_all":
        v = (a * (ket("0000") + g**2 * ket("1111"))
             + b * g * (ket("0011") + ket("1100"))) / s2
    else:
        heavy, light = {
            "damp_q1": ("0111", "0100"),
            "damp_q2": ("1011", "1000"),
            "damp_q3": ("1101", "0001"),
            "damp_q4": ("1110", "0010"),
        }[which]
        v = np.sqrt(gamma * g / 2) * (a * g * ket(heavy) + b * ket(light))
    prob = float(np.vdot(v, v).real)
    return CorruptionOutcome(v / np.sqrt(prob), prob, which)


def biased_ad_sampler(p: float, gamma: float, a: complex, b: complex,
                      rng_seed=None) -> CorruptionOutcome:
    """e0_all with probability 1-p, otherwise a uniformly chosen single damping."""
    _check_prob("p", p)
    rng = make_rng(rng_seed)
    if rng.random() >= p:
        return ad_corruption_state(a, b, "e0_all", gamma)
    which = AD_CASES[1 + int(rng.integers(4))]
    return ad_corruption_state(a, b, which, gamma)


def mixture(outcomes: Sequence[CorruptionOutcome]) -> np.ndarray:
    return sum(o.probability * as_density(o.state) for o in outcomes)
