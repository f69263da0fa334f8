"""Batched superoperator propagation used by training and evaluation.

States are carried as rows of row-major vec(rho), so a batch is a
(B, d*d) array and every layer or channel acts as a right-multiplication
by the transpose of its superoperator. Fidelity against a pure target is
the bilinear form sum(T * R) with T = vec(conj(t) t^T).

Finite-difference gradients reuse cached forward states and
back-propagated target observables, so a perturbation only re-evaluates
the stages its coefficient touches.
"""
from __future__ import annotations

import numpy as np

from . import channels as ch
from .network import NetworkSpec, mirror_order, perceptron_targets, unitary_for_layer
from .pauli import build_generator, pauli_basis
from .qcore import as_density, dagger, embed_on_qubits, expi_hermitian, permute_qubits

# upper bound on complex entries held per perturbation chunk
_CHUNK_ENTRIES = 2_000_000


def superop_from_unitary(u: np.ndarray, m_prev: int, m: int) -> np.ndarray:
    """Superoperator of rho -> Tr_prev(U (rho (x) |0><0|) U^dag).

    Only the columns of U with the fresh qubits in |0> contribute.
    """
    d_prev, d = 2**m_prev, 2**m
    y = u[..., :, np.arange(d_prev) * d]
    batch = u.shape[:-2]
    y = y.reshape(batch + (d_prev, d * d_prev))
    # (tc, a) @ (a, ud) then reorder to (t, u, c, d)
    phi = np.swapaxes(y, -1, -2) @ y.conj()
    phi = phi.reshape(batch + (d, d_prev, d, d_prev))
    phi = np.swapaxes(phi, -3, -2)
    return phi.reshape(batch + (d * d, d_prev * d_prev))


def vec_states(states) -> np.ndarray:
    return np.stack([as_density(s).ravel() for s in states])


def vec_targets(targets) -> np.ndarray:
    return np.stack([np.outer(np.conj(t), t).ravel() for t in targets])


class Propagator:
    """A compiled network at a fixed parameter point."""

    def __init__(self, spec: NetworkSpec, params: np.ndarray):
        self.spec = spec
        self.params = np.asarray(params, dtype=float)
        w = spec.widths
        self.generators = {}
        self.embedded = {}
        for layer in spec.trainable_layers:
            m_prev, m = w[layer - 1], w[layer]
            k = build_generator(spec.layer_coefficients(self.params, layer))
            self.generators[layer] = k
            local = expi_hermitian(k)
            self.embedded[layer] = [
                embed_on_qubits(local[j], perceptron_targets(m_prev, j), m_prev + m)
                for j in range(m)]
        self.superops = {}
        for layer in range(1, spec.n_layers + 1):
            u = unitary_for_layer(spec, self.params, layer)
            self.superops[layer] = superop_from_unitary(u, w[layer - 1], w[layer])

        self.stages = []
        slot = spec.channel_slot
        for layer in range(1, spec.n_layers + 1):
            self.stages.append(("layer", layer))
            if slot is not None and slot.position == layer:
                self.stages.append(("channel", None))
        self.layer_stage = {l: i for i, (kind, l) in enumerate(self.stages) if kind == "layer"}
        if slot is not None:
            chan = slot.channel
            self.channel_full = ch.superoperator(chan)
            self.channel_cases = np.stack([np.kron(op, op.conj()) for op in chan.operators])
            weights = chan.case_weights()
            self.case_linear = weights is not None
            if self.case_linear:
                self.channel_cases = self.channel_cases / weights[:, None, None]

    # -- stage application ------------------------------------------------

    def _apply(self, stage: int, r: np.ndarray, cases, override=None,
               renormalize: bool = False) -> np.ndarray:
        kind, layer = self.stages[stage]
        if kind == "layer":
            phi = self.superops[layer] if override is None or layer not in override \
                else override[layer]
            return r @ np.swapaxes(phi, -1, -2)
        if cases is None:
            return r @ self.channel_full.T
        out = np.empty_like(r)
        for k in np.unique(cases):
            mask = cases == k
            out[..., mask, :] = r[..., mask, :] @ self.channel_cases[k].T
        if not self.case_linear:
            if not renormalize:
                raise ValueError(
                    "per-pair channel cases need Kraus operators proportional to "
                    "unitaries on gradient paths")
            d = int(np.sqrt(out.shape[-1]))
            tr = out[..., :: d + 1].sum(-1).real
            out = out / tr[..., None]
        return out

    def forward_cache(self, r0: np.ndarray, cases=None) -> list[np.ndarray]:
        rs = [r0]
        for s in range(len(self.stages)):
            rs.append(self._apply(s, rs[-1], cases))
        return rs

    def back_cache(self, t: np.ndarray, cases=None) -> list[np.ndarray]:
        """ts[s] pairs with the state entering stage s: f = sum(ts[s] * rs[s])."""
        ts = [None] * (len(self.stages) + 1)
        ts[-1] = t
        for s in range(len(self.stages) - 1, -1, -1):
            kind, layer = self.stages[s]
            nxt = ts[s + 1]
            if kind == "layer":
                ts[s] = nxt @ self.superops[layer]
            elif cases is None:
                ts[s] = nxt @ self.channel_full
            else:
                if not self.case_linear:
                    raise ValueError(
                        "per-pair channel cases need Kraus operators proportional to "
                        "unitaries on gradient paths")
                cur = np.empty_like(nxt)
                for k in np.unique(cases):
                    mask = cases == k
                    cur[mask] = nxt[mask] @ self.channel_cases[k]
                ts[s] = cur
        return ts

    def predict(self, r0: np.ndarray, cases=None) -> np.ndarray:
        """Output density matrices, shape (B, d, d)."""
        r = r0
        for s in range(len(self.stages)):
            r = self._apply(s, r, cases, renormalize=True)
        d = 2 ** self.spec.widths[-1]
        return r.reshape(-1, d, d)

    def fidelities(self, r0: np.ndarray, t: np.ndarray, cases=None) -> np.ndarray:
        r = r0
        for s in range(len(self.stages)):
            r = self._apply(s, r, cases, renormalize=True)
        return np.sum(t * r, axis=-1).real

    # -- finite differences -----------------------------------------------

    def perturbed_fidelities(self, r0: np.ndarray, t: np.ndarray, epsilon: float,
                             cases=None):
        """Yield (parameter offsets, f_plus, f_minus) per perceptron chunk.

        f_plus/f_minus have shape (n_chunk, B): per-pair fidelities with one
        coefficient shifted by +/- epsilon. A shared coefficient moves its
        source layer and every layer bound to it together.
        """
        spec = self.spec
        w = spec.widths
        rs = self.forward_cache(r0, cases)
        ts = self.back_cache(t, cases)
        slices = spec.param_slices()
        batch = r0.shape[0]
        for layer in spec.trainable_layers:
            m_prev, m = w[layer - 1], w[layer]
            n_reg = m_prev + m
            size = spec.perceptron_size(layer)
            basis = pauli_basis(m_prev + 1)
            emb = self.embedded[layer]
            bound = spec.bound_to(layer)
            stages = [self.layer_stage[layer]] + [self.layer_stage[b] for b in bound]
            first, last = min(stages), max(stages)
            dmax = max(r.shape[-1] for r in rs[first:last + 2])
            chunk = max(1, min(size, _CHUNK_ENTRIES // max(batch * dmax, 4**n_reg)))
            for j in range(m):
                left = right = None
                for u in emb[j + 1:]:
                    left = u if left is None else u @ left
                for u in emb[:j]:
                    right = u if right is None else u @ right
                offset = slices[layer].start + j * size
                for lo in range(0, size, chunk):
                    hi = min(size, lo + chunk)
                    shift = epsilon * basis[lo:hi]
                    k = self.generators[layer][j]
                    gens = np.concatenate([k + shift, k - shift])
                    uj = expi_hermitian(gens)
                    if m > 1:
                        uj = embed_on_qubits(uj, perceptron_targets(m_prev, j), n_reg)
                    u_new = uj
                    if right is not None:
                        u_new = u_new @ right
                    if left is not None:
                        u_new = left @ u_new
                    override = {layer: superop_from_unitary(u_new, m_prev, m)}
                    if bound:
                        u_conj = permute_qubits(dagger(u_new), mirror_order(m_prev, m))
                        phi_conj = superop_from_unitary(u_conj, m, m_prev)
                        for b in bound:
                            override[b] = phi_conj
                    x = rs[first]
                    for s in range(first, last + 1):
                        x = self._apply(s, x, cases, override)
                    f = np.sum(ts[last + 1] * x, axis=-1).real
                    n = hi - lo
                    yield offset + np.arange(lo, hi), f[:n], f[n:]
