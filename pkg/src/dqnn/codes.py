"""Logical states, encoders, dataset builders and the syndrome decoder."""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import channels as ch
from .network import NetworkSpec, unitary_for_layer
from .qcore import as_density, ket

CARDINAL = ("0", "1", "+", "-", "+i", "-i")


@dataclass(frozen=True)
class BlochAngles:
    theta: float
    phi: float

    def __post_init__(self):
        if not 0 <= self.theta <= np.pi:
            raise ValueError(f"theta must lie in [0, pi], got {self.theta}")
        if not 0 <= self.phi < 2 * np.pi:
            raise ValueError(f"phi must lie in [0, 2pi), got {self.phi}")


def bloch_state(angles: BlochAngles | tuple[float, float]) -> np.ndarray:
    theta, phi = (angles.theta, angles.phi) if isinstance(angles, BlochAngles) else angles
    return np.array([np.cos(theta / 2), np.exp(1j * phi) * np.sin(theta / 2)], dtype=complex)


def named_state(label: str) -> np.ndarray:
    """Single-qubit state for one of 0, 1, +, -, +i, -i."""
    r = 1 / np.sqrt(2)
    table = {
        "0": [1, 0], "1": [0, 1], "+": [r, r], "-": [r, -r],
        "+i": [r, 1j * r], "-i": [r, -1j * r],
    }
    if label not in table:
        raise ValueError(f"unknown logical state {label!r}; expected one of {CARDINAL}")
    return np.array(table[label], dtype=complex)


def _check_qubit(psi: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    if psi.shape != (2,):
        raise ValueError(f"expected a single-qubit state, got shape {psi.shape}")
    if abs(np.linalg.norm(psi) - 1) > 1e-10:
        raise ValueError("input state is not normalized")
    return psi


def encode_bitflip3(psi: np.ndarray) -> np.ndarray:
    a, b = _check_qubit(psi)
    return a * ket("000") + b * ket("111")


def encode_ad4(psi: np.ndarray) -> np.ndarray:
    a, b = _check_qubit(psi)
    return (a * (ket("0000") + ket("1111")) + b * (ket("0011") + ket("1100"))) / np.sqrt(2)


def encode_none(psi: np.ndarray) -> np.ndarray:
    return _check_qubit(psi)


ENCODERS = {"bitflip3": encode_bitflip3, "ad4": encode_ad4, "none": encode_none}


def encoder(name: str):
    try:
        return ENCODERS[name]
    except KeyError:
        raise ValueError(f"unknown encoder {name!r}; expected one of {sorted(ENCODERS)}") from None


# -- datasets -----------------------------------------------------------------

@dataclass(frozen=True)
class TrainingPair:
    """``input`` is a state vector, or a density matrix for channel-averaged inputs."""
    input: np.ndarray
    target: np.ndarray
    meta: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Dataset:
    pairs: tuple
    kind: str = "train"
    config: dict = field(default_factory=dict)
    # per-pair weights for the dataset cost; None means a uniform mean
    weights: np.ndarray | None = None

    def __post_init__(self):
        if not self.pairs:
            raise ValueError("dataset is empty")
        shape_in = self.pairs[0].input.shape[0]
        shape_out = self.pairs[0].target.shape
        for p in self.pairs:
            if p.input.shape[0] != shape_in or p.target.shape != shape_out:
                raise ValueError("dataset pairs have inconsistent dimensions")

    def __len__(self) -> int:
        return len(self.pairs)

    @property
    def n_in(self) -> int:
        return int(np.log2(self.pairs[0].input.shape[0]))

    @property
    def n_out(self) -> int:
        return int(np.log2(self.pairs[0].target.shape[0]))

    def cost_weights(self) -> np.ndarray:
        if self.weights is None:
            return np.full(len(self.pairs), 1 / len(self.pairs))
        return np.asarray(self.weights, dtype=float)

    def channel_cases(self) -> np.ndarray | None:
        """Per-pair Kraus indices for an embedded channel, if recorded."""
        cases = [p.meta.get("channel_case") for p in self.pairs]
        if all(c is None for c in cases):
            return None
        if any(c is None for c in cases):
            raise ValueError("channel cases recorded for only some pairs")
        return np.array(cases, dtype=int)

    def subset(self, index: Sequence[int]) -> "Dataset":
        w = None if self.weights is None else self.weights[np.asarray(index)]
        return Dataset(tuple(self.pairs[i] for i in index), self.kind, self.config, w)


def _spawn(seed, n: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def build_train_bitflip(n_pairs: int, p: float, seed: int,
                        model: str = "single_error",
                        states: Sequence[str] = CARDINAL) -> Dataset:
    """Encoded cardinal states corrupted by sampled bit flips."""
    if n_pairs < 1:
        raise ValueError("n_pairs must be at least 1")
    chan = {"single_error": ch.single_error_bitflip, "iid": ch.bitflip_iid}[model](p, 3)
    label_rng, noise_rng = _spawn(seed, 2)
    pairs = []
    for _ in range(n_pairs):
        label = states[int(label_rng.integers(len(states)))]
        target = encode_bitflip3(named_state(label))
        out = ch.sample_corruption(chan, target, noise_rng)
        pairs.append(TrainingPair(out.state, target,
                                  {"logical_label": label, "case": out.case_label,
                                   "probability": out.probability, "seed": seed}))
    return Dataset(tuple(pairs), "train",
                   {"builder": "bitflip", "n_pairs": n_pairs, "p": p, "model": model,
                    "seed": seed, "states": list(states)})


def build_train_ad(n_pairs: int, gamma: float, p_bias: float,
                   state_set: Sequence[str] = ("0", "1", "+"), seed: int = 0) -> Dataset:
    if n_pairs < 1:
        raise ValueError("n_pairs must be at least 1")
    label_rng, noise_rng = _spawn(seed, 2)
    pairs = []
    for _ in range(n_pairs):
        label = state_set[int(label_rng.integers(len(state_set)))]
        a, b = named_state(label)
        out = ch.biased_ad_sampler(p_bias, gamma, a, b, noise_rng)
        pairs.append(TrainingPair(out.state, encode_ad4(np.array([a, b])),
                                  {"logical_label": label, "case": out.case_label,
                                   "probability": out.probability, "seed": seed}))
    return Dataset(tuple(pairs), "train",
                   {"builder": "ad", "n_pairs": n_pairs, "gamma": gamma, "p_bias": p_bias,
                    "seed": seed, "states": list(state_set)})


def build_train_identity(n_pairs: int, state_set: Sequence[str] = ("0", "1", "+", "-"),
                         seed: int = 0, channel: ch.KrausChannel | None = None) -> Dataset:
    """Pairs (phi, phi) for networks with an embedded channel.

    With ``channel`` given, each pair also records a fixed Kraus index
    drawn with the channel's (state-independent) case probabilities.
    """
    if n_pairs < 1:
        raise ValueError("n_pairs must be at least 1")
    label_rng, noise_rng = _spawn(seed, 2)
    probs = None
    if channel is not None:
        probs = channel.case_weights()
        if probs is None:
            raise ValueError("fixed per-pair cases need state-independent case probabilities")
    pairs = []
    for _ in range(n_pairs):
        label = state_set[int(label_rng.integers(len(state_set)))]
        psi = named_state(label)
        meta = {"logical_label": label, "seed": seed}
        if probs is not None:
            k = int(noise_rng.choice(len(probs), p=probs / probs.sum()))
            meta["channel_case"] = k
            meta["case"] = channel.labels[k]
        pairs.append(TrainingPair(psi, psi.copy(), meta))
    return Dataset(tuple(pairs), "train",
                   {"builder": "identity", "n_pairs": n_pairs, "seed": seed,
                    "states": list(state_set)})


def mesh_angles(n: int) -> tuple[np.ndarray, np.ndarray]:
    """theta_i = i*pi/N and phi_j = j*2pi/N for i, j = 0..N-1."""
    if n < 2:
        raise ValueError("mesh size must be at least 2")
    return np.arange(n) * np.pi / n, np.arange(n) * 2 * np.pi / n


def mesh_weights(n: int) -> np.ndarray:
    """sin(theta_i) * dtheta * dphi / (4 pi) on the N x N grid (row-major in theta)."""
    theta, _ = mesh_angles(n)
    w = np.sin(theta) * (np.pi / n) * (2 * np.pi / n) / (4 * np.pi)
    return np.repeat(w, n)


def build_validation_mesh(n: int, encode: str = "bitflip3",
                          channel: ch.KrausChannel | None = None,
                          mode: str = "deterministic_kraus", case: str | None = None,
                          seed: int = 0) -> Dataset:
    """Bloch-sphere grid of encoded targets with corrupted inputs.

    ``mode`` is ``deterministic_kraus`` (mixed input from the full channel),
    ``sampled`` (one drawn trajectory per cell) or ``fixed_case`` (the
    normalized output of the Kraus operator named by ``case``).
    """
    enc = encoder(encode)
    thetas, phis = mesh_angles(n)
    rng = np.random.default_rng(seed)
    pairs = []
    for i, theta in enumerate(thetas):
        for j, phi in enumerate(phis):
            target = enc(bloch_state((theta, phi)))
            meta = {"theta": float(theta), "phi": float(phi), "i": i, "j": j, "seed": seed}
            if channel is None:
                inp = target.copy()
                meta["case"] = "none"
            elif mode == "deterministic_kraus":
                inp = ch.apply_kraus(channel, as_density(target))
                meta["case"] = "mixture"
            elif mode == "sampled":
                out = ch.sample_corruption(channel, target, rng)
                inp = out.state
                meta.update(case=out.case_label, probability=out.probability)
            elif mode == "fixed_case":
                inp = ch.forced_case(channel, target, case)
                meta["case"] = case
            else:
                raise ValueError(f"unknown corruption mode {mode!r}")
            pairs.append(TrainingPair(inp, target, meta))
    return Dataset(tuple(pairs), "validation",
                   {"builder": "mesh", "N": n, "encode": encode, "mode": mode, "case": case,
                    "channel": None if channel is None else channel.config(), "seed": seed},
                   weights=mesh_weights(n))


# -- dataset files ------------------------------------------------------------

def _num(x: float) -> str:
    return format(float(x), ".17g")


def _amps(a: np.ndarray) -> str:
    return "[" + ",".join(f"[{_num(z.real)},{_num(z.imag)}]" for z in np.ravel(a)) + "]"


def dataset_lines(ds: Dataset) -> list[str]:
    header = json.dumps({"kind": ds.kind, "config": ds.config,
                         "weighted": ds.weights is not None}, sort_keys=True)
    lines = [header]
    for k, pair in enumerate(ds.pairs):
        meta = json.dumps(pair.meta, sort_keys=True)
        shape = "pure" if pair.input.ndim == 1 else "mixed"
        weight = "null" if ds.weights is None else _num(ds.weights[k])
        lines.append(
            f'{{"meta":{meta},"input_kind":"{shape}","weight":{weight},'
            f'"input":{_amps(pair.input)},"target":{_amps(pair.target)}}}')
    return lines


def save_dataset(path: str | Path, ds: Dataset) -> None:
    Path(path).write_text("\n".join(dataset_lines(ds)) + "\n")


def load_dataset(path: str | Path) -> Dataset:
    lines = Path(path).read_text().splitlines()
    header = json.loads(lines[0])
    pairs, weights = [], []
    for line in lines[1:]:
        rec = json.loads(line)
        inp = np.array([complex(re, im) for re, im in rec["input"]])
        if rec["input_kind"] == "mixed":
            d = int(round(np.sqrt(inp.size)))
            inp = inp.reshape(d, d)
        tgt = np.array([complex(re, im) for re, im in rec["target"]])
        pairs.append(TrainingPair(inp, tgt, rec["meta"]))
        weights.append(rec["weight"])
    w = np.array(weights, dtype=float) if header["weighted"] else None
    return Dataset(tuple(pairs), header["kind"], header["config"], w)


# -- classical decoding -------------------------------------------------------

class DecodeError(ValueError):
    """State lies outside every single-flip subspace of the 3-qubit code."""


_SYNDROMES = ("000", "100", "010", "001")


def syndrome_decode3(state: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Majority-vote correction followed by decoding a|000>+b|111> -> a|0>+b|1>."""
    state = np.asarray(state, dtype=complex)
    if state.shape != (8,):
        raise ValueError("expected a 3-qubit state")
    for s in _SYNDROMES:
        lo = int(s, 2)
        hi = 7 - lo
        weight = abs(state[lo]) ** 2 + abs(state[hi]) ** 2
        if abs(weight - 1) <= tol:
            return np.array([state[lo], state[hi]])
    raise DecodeError("state is not in any single-flip subspace")


def bitflip3_failure_probability(p, probe: np.ndarray | None = None):
    """Probability that majority-vote decoding corrupts the logical state under i.i.d. flips.

    Enumerates all 8 flip patterns. With a Fraction ``p`` the result is exact.
    """
    if probe is None:
        probe = np.array([0.6, 0.8j])
    encoded = encode_bitflip3(probe)
    failure = p * 0
    one = p ** 0
    for pattern in itertools.product((0, 1), repeat=3):
        idx = np.arange(8)
        for q, bit in enumerate(pattern):
            if bit:
                idx = idx ^ (1 << (2 - q))
        flipped = np.empty(8, dtype=complex)
        flipped[idx] = encoded
        decoded = syndrome_decode3(flipped)
        ok = abs(np.vdot(probe, decoded)) ** 2 > 1 - 1e-12
        if not ok:
            k = sum(pattern)
            failure += p**k * (one - p) ** (3 - k)
    return failure


def bitflip3_failure_formula(p):
    return 3 * (1 - p) * p**2 + p**3


# -- learned codewords --------------------------------------------------------

@dataclass(frozen=True)
class CodewordReport:
    layer: int
    states: tuple           # images of |0>|0..0> and |1>|0..0> on the layer register
    dominant: tuple         # (bit string, amplitude) of the largest entry per image
    overlap: complex
    n_source: int

    def lines(self, top: int = 4) -> list[str]:
        out = [f"layer {self.layer} register: {self.n_source} source + "
               f"{int(np.log2(self.states[0].size)) - self.n_source} fresh qubits"]
        for b, psi in enumerate(self.states):
            order = np.argsort(-np.abs(psi), kind="stable")[:top]
            n = int(np.log2(psi.size))
            terms = ", ".join(
                f"({psi[k].real:+.4f}{psi[k].imag:+.4f}i)|{k:0{n}b}>" for k in order)
            out.append(f"|{b}> -> {terms}")
        out.append(f"|<c0|c1>| = {abs(self.overlap):.3e}")
        return out


def extract_codeword(spec: NetworkSpec, params: np.ndarray, layer: int = 1) -> CodewordReport:
    """Images of the logical basis under the (possibly conjugate) unitary of ``layer``."""
    m_prev, m = spec.widths[layer - 1], spec.widths[layer]
    if m_prev != 1:
        raise ValueError(f"layer {layer} has {m_prev} source qubits; expected 1")
    u = unitary_for_layer(spec, params, layer)
    d = 2**m
    states = (u[:, 0].copy(), u[:, d].copy())
    dominant = []
    for psi in states:
        k = int(np.argmax(np.abs(psi)))
        dominant.append((format(k, f"0{m_prev + m}b"), complex(psi[k])))
    return CodewordReport(layer, states, tuple(dominant),
                          complex(np.vdot(states[0], states[1])), m_prev)
