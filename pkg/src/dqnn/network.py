"""Dissipative QNN topology, layer maps and forward propagation.

Layers are numbered 1..L; layer ``l`` maps ``widths[l-1]`` qubits onto
``widths[l]`` fresh qubits. Inside a layer the working register holds the
source qubits first and the fresh qubits after them.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import channels as ch
from .pauli import build_generator
from .qcore import (as_density, dagger, embed_on_qubits, expi_hermitian,
                    partial_trace, permute_qubits, tensor)

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ChannelSlot:
    """A noise channel applied to the state leaving layer ``position``."""
    position: int
    channel: ch.KrausChannel


@dataclass(frozen=True)
class NetworkSpec:
    widths: tuple
    bindings: tuple = ()
    channel_slot: ChannelSlot | None = None

    def __post_init__(self):
        widths = tuple(int(w) for w in self.widths)
        if len(widths) < 2 or any(w < 1 for w in widths):
            raise ValueError(f"invalid topology {list(widths)}")
        bindings = tuple((int(s), int(b)) for s, b in self.bindings)
        object.__setattr__(self, "widths", widths)
        object.__setattr__(self, "bindings", bindings)
        n_layers = len(widths) - 1
        bound = [b for _, b in bindings]
        if len(set(bound)) != len(bound):
            raise ValueError("a layer can be bound at most once")
        for src, dst in bindings:
            for layer in (src, dst):
                if not 1 <= layer <= n_layers:
                    raise ValueError(f"binding ({src}, {dst}) references a missing layer")
            if src == dst or src in bound:
                raise ValueError(f"binding ({src}, {dst}): source must be a free layer")
            if widths[src - 1] != widths[dst] or widths[src] != widths[dst - 1]:
                raise ValueError(
                    f"binding ({src}, {dst}) violates the mirror condition: "
                    f"layer {src} is {widths[src - 1]}->{widths[src]}, "
                    f"layer {dst} is {widths[dst - 1]}->{widths[dst]}")
        slot = self.channel_slot
        if slot is not None:
            if not 1 <= slot.position <= n_layers - 1:
                raise ValueError(
                    f"channel position {slot.position} is not an inter-layer boundary")
            if slot.channel.n_qubits != widths[slot.position]:
                raise ValueError(
                    f"channel acts on {slot.channel.n_qubits} qubits but boundary "
                    f"{slot.position} carries {widths[slot.position]}")

    @property
    def n_layers(self) -> int:
        return len(self.widths) - 1

    def source_of(self, layer: int) -> int | None:
        for src, dst in self.bindings:
            if dst == layer:
                return src
        return None

    def is_bound(self, layer: int) -> bool:
        return self.source_of(layer) is not None

    def bound_to(self, layer: int) -> list[int]:
        return [dst for src, dst in self.bindings if src == layer]

    @property
    def trainable_layers(self) -> list[int]:
        return [l for l in range(1, self.n_layers + 1) if not self.is_bound(l)]

    def perceptron_size(self, layer: int) -> int:
        return 4 ** (self.widths[layer - 1] + 1)

    def layer_shape(self, layer: int) -> tuple[int, int]:
        return self.widths[layer], self.perceptron_size(layer)

    def param_slices(self) -> dict[int, slice]:
        out, start = {}, 0
        for layer in self.trainable_layers:
            m, size = self.layer_shape(layer)
            out[layer] = slice(start, start + m * size)
            start += m * size
        return out

    @property
    def n_params(self) -> int:
        return sum(m * s for m, s in map(self.layer_shape, self.trainable_layers))

    def layer_coefficients(self, params: np.ndarray, layer: int) -> np.ndarray:
        """Coefficients of ``layer`` as an (m_l, 4**(m_{l-1}+1)) array."""
        params = np.asarray(params, dtype=float)
        if params.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got {params.shape}")
        if self.is_bound(layer):
            raise ValueError(f"layer {layer} is bound and owns no parameters")
        return params[self.param_slices()[layer]].reshape(self.layer_shape(layer))


def trainable_parameter_count(spec: NetworkSpec) -> int:
    return spec.n_params


def perceptron_targets(m_prev: int, j: int) -> list[int]:
    """Register qubits touched by perceptron ``j`` (0-based): all sources, then fresh qubit j."""
    return list(range(m_prev)) + [m_prev + j]


def mirror_order(m_prev: int, m: int) -> list[int]:
    """Qubit relabelling from a source layer's register to its bound layer's register."""
    return [m_prev + k for k in range(m)] + list(range(m_prev))


def perceptron_unitaries(spec: NetworkSpec, params: np.ndarray, layer: int) -> list[np.ndarray]:
    """Embedded U_j for j = 1..m_l, each on the full (m_{l-1} + m_l)-qubit register."""
    coeffs = spec.layer_coefficients(params, layer)
    m_prev, m = spec.widths[layer - 1], spec.widths[layer]
    n = m_prev + m
    unitaries = expi_hermitian(build_generator(coeffs))
    return [embed_on_qubits(unitaries[j], perceptron_targets(m_prev, j), n)
            for j in range(m)]


def layer_unitary(spec: NetworkSpec, params: np.ndarray, layer: int) -> np.ndarray:
    """U^l = U_m ... U_2 U_1 (U_1 acts first)."""
    if spec.is_bound(layer):
        raise ValueError(
            f"layer {layer} is bound; use conjugate_layer_unitary instead")
    out = None
    for u in perceptron_unitaries(spec, params, layer):
        out = u if out is None else u @ out
    return out


def conjugate_layer_unitary(spec: NetworkSpec, params: np.ndarray, layer: int) -> np.ndarray:
    """Adjoint of the source layer's unitary with source and fresh roles swapped."""
    src = spec.source_of(layer)
    if src is None:
        raise ValueError(f"layer {layer} has no conjugate binding")
    u = layer_unitary(spec, params, src)
    return permute_qubits(dagger(u), mirror_order(spec.widths[src - 1], spec.widths[src]))


def unitary_for_layer(spec: NetworkSpec, params: np.ndarray, layer: int) -> np.ndarray:
    if spec.is_bound(layer):
        return conjugate_layer_unitary(spec, params, layer)
    return layer_unitary(spec, params, layer)


def apply_layer_unitary(u: np.ndarray, rho_prev: np.ndarray, m_prev: int, m: int) -> np.ndarray:
    rho_prev = as_density(rho_prev)
    if rho_prev.shape != (2**m_prev, 2**m_prev):
        raise ValueError(
            f"layer expects {m_prev} input qubits, state has shape {rho_prev.shape}")
    fresh = np.zeros((2**m, 2**m), dtype=complex)
    fresh[0, 0] = 1.0
    big = u @ tensor(rho_prev, fresh) @ dagger(u)
    return partial_trace(big, range(m_prev))


def apply_layer(spec: NetworkSpec, params: np.ndarray, layer: int,
                rho_prev: np.ndarray) -> np.ndarray:
    """Tr_prev(U (rho (x) |0..0><0..0|) U^dag)."""
    u = unitary_for_layer(spec, params, layer)
    return apply_layer_unitary(u, rho_prev, spec.widths[layer - 1], spec.widths[layer])


def forward(spec: NetworkSpec, params: np.ndarray, rho_in: np.ndarray,
            channel_case: str | None = None) -> np.ndarray:
    """Propagate a state through every layer.

    ``channel_case`` selects one Kraus operator of the embedded channel
    (renormalized); by default the full channel map is applied.
    """
    rho = as_density(rho_in)
    if rho.shape != (2 ** spec.widths[0],) * 2:
        raise ValueError(
            f"network expects {spec.widths[0]} input qubits, state has shape {rho.shape}")
    slot = spec.channel_slot
    for layer in range(1, spec.n_layers + 1):
        rho = apply_layer(spec, params, layer, rho)
        if slot is not None and slot.position == layer:
            if channel_case is None:
                rho = ch.apply_kraus(slot.channel, rho)
            else:
                rho = ch.forced_case(slot.channel, rho, channel_case)
    return rho


# -- checkpoints --------------------------------------------------------------

def spec_to_dict(spec: NetworkSpec) -> dict:
    slot = spec.channel_slot
    return {
        "widths": list(spec.widths),
        "bindings": [list(b) for b in spec.bindings],
        "channel_slot": None if slot is None else {
            "position": slot.position, "channel": slot.channel.config()},
    }


def spec_from_dict(d: dict) -> NetworkSpec:
    slot = d.get("channel_slot")
    if slot is not None:
        slot = ChannelSlot(int(slot["position"]), ch.channel_from_config(slot["channel"]))
    return NetworkSpec(tuple(d["widths"]), tuple(tuple(b) for b in d.get("bindings", ())),
                       slot)


def checkpoint_bytes(spec: NetworkSpec, params: np.ndarray) -> bytes:
    params = np.asarray(params, dtype=float)
    if params.shape != (spec.n_params,):
        raise ValueError(f"expected {spec.n_params} parameters, got {params.shape}")
    record = {"format_version": CHECKPOINT_VERSION, **spec_to_dict(spec),
              # repr of a float64 round-trips exactly through json
              "params": [float(x) for x in params]}
    return (json.dumps(record, indent=1) + "\n").encode()


def save_checkpoint(path: str | Path, spec: NetworkSpec, params: np.ndarray) -> None:
    Path(path).write_bytes(checkpoint_bytes(spec, params))


def load_checkpoint(path: str | Path) -> tuple[NetworkSpec, np.ndarray]:
    record = json.loads(Path(path).read_text())
    version = record.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint format version {version!r}")
    spec = spec_from_dict(record)
    params = np.array(record["params"], dtype=float)
    if params.shape != (spec.n_params,):
        raise ValueError(
            f"checkpoint has {params.size} parameters, topology needs {spec.n_params}")
    return spec, params


def make_spec(widths: Sequence[int], bindings: Sequence[tuple[int, int]] = (),
              channel: ch.KrausChannel | None = None,
              channel_position: int | None = None) -> NetworkSpec:
    slot = None if channel is None else ChannelSlot(int(channel_position), channel)
    return NetworkSpec(tuple(widths), tuple(bindings), slot)
