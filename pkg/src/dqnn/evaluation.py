"""Bloch-mesh fidelity reports, conditional fidelities and oracle comparison."""
from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import channels as ch
from .codes import (bitflip3_failure_formula, bitflip3_failure_probability,
                    bloch_state, build_validation_mesh, encoder, mesh_angles, mesh_weights)
from .network import ChannelSlot, NetworkSpec, checkpoint_bytes
from .propagate import Propagator, vec_states, vec_targets

MESH_MODES = ("deterministic_kraus", "sampled", "fixed_case")


def model_hash(spec: NetworkSpec, params: np.ndarray) -> str:
    return hashlib.sha256(checkpoint_bytes(spec, params)).hexdigest()[:16]


def default_encoding(spec: NetworkSpec) -> str:
    return {1: "none", 3: "bitflip3", 4: "ad4"}.get(spec.widths[0], "none")


@dataclass(frozen=True)
class MeshReport:
    theta: np.ndarray
    phi: np.ndarray
    grid: np.ndarray          # grid[i, j] at (theta[i], phi[j])
    mean_fidelity: float
    channel: dict | None = None
    mode: str = "deterministic_kraus"
    case: str | None = None
    model_hash: str = ""
    seed: int = 0

    @property
    def n(self) -> int:
        return self.theta.size


@dataclass(frozen=True)
class ConditionalReport:
    means: dict
    reports: dict = field(default_factory=dict)
    # per-cell probability of each case, same layout as MeshReport.grid
    probabilities: dict = field(default_factory=dict)

    def recombined_mean(self) -> float:
        """sum over cells of w * sum_k p_k(cell) * F_k(cell)."""
        some = next(iter(self.reports.values()))
        w = mesh_weights(some.n).reshape(some.n, some.n)
        total = sum(self.probabilities[k] * self.reports[k].grid for k in self.reports)
        return float(np.sum(w * total))


def _prepare(spec, n, channel, mode, case, encode, seed):
    """Resolve the network, mesh dataset and per-cell embedded-channel cases."""
    if mode not in MESH_MODES:
        raise ValueError(f"unknown corruption mode {mode!r}; expected one of {MESH_MODES}")
    if mode == "fixed_case" and case is None:
        raise ValueError("fixed_case mode needs a case label")
    slot = spec.channel_slot
    if slot is None:
        encode = encode or default_encoding(spec)
        ds = build_validation_mesh(n, encode, channel, mode, case, seed)
        return spec, ds, None, channel
    chan = channel or slot.channel
    run_spec = spec if channel is None else replace(
        spec, channel_slot=ChannelSlot(slot.position, channel))
    ds = build_validation_mesh(n, "none", None, seed=seed)
    cases = None
    if mode == "fixed_case":
        cases = np.full(len(ds), chan.index(case))
    elif mode == "sampled":
        probs = chan.case_weights()
        if probs is None:
            raise ValueError("sampled mode needs state-independent case probabilities")
        rng = np.random.default_rng(seed)
        cases = rng.choice(len(probs), size=len(ds), p=probs / probs.sum())
    return run_spec, ds, cases, chan


def mesh_fidelity(spec: NetworkSpec, params: np.ndarray, n: int = 20,
                  channel: ch.KrausChannel | None = None,
                  mode: str = "deterministic_kraus", case: str | None = None,
                  encode: str | None = None, seed: int = 0) -> MeshReport:
    """Fidelity on the N x N Bloch grid and its sin(theta)-weighted mean.

    For networks with an embedded channel the grid inputs are bare qubit
    states and ``channel``/``mode`` act on the embedded slot; otherwise
    they corrupt the encoded inputs.
    """
    run_spec, ds, cases, chan = _prepare(spec, n, channel, mode, case, encode, seed)
    if ds.n_in != spec.widths[0] or ds.n_out != spec.widths[-1]:
        raise ValueError(
            f"mesh states are {ds.n_in}->{ds.n_out} qubits but the network is "
            f"{spec.widths[0]}->{spec.widths[-1]}")
    r = vec_states([p.input for p in ds.pairs])
    t = vec_targets([p.target for p in ds.pairs])
    f = np.clip(Propagator(run_spec, params).fidelities(r, t, cases), 0.0, 1.0)
    theta, phi = mesh_angles(n)
    return MeshReport(theta, phi, f.reshape(n, n), float(mesh_weights(n) @ f),
                      None if chan is None else chan.config(), mode, case,
                      model_hash(spec, params), seed)


def _case_probabilities(spec, params, n, chan, encode) -> dict:
    """Per-cell probability of every Kraus case of ``chan``."""
    slot = spec.channel_slot
    theta, phi = mesh_angles(n)
    if slot is None:
        enc = encoder(encode or default_encoding(spec))
        out = {label: np.zeros((n, n)) for label in chan.labels}
        for i, th in enumerate(theta):
            for j, ph in enumerate(phi):
                psi = enc(bloch_state((th, ph)))
                for op, label in zip(chan.operators, chan.labels):
                    v = op @ psi
                    out[label][i, j] = np.vdot(v, v).real
        return out
    run_spec = replace(spec, channel_slot=ChannelSlot(slot.position, chan))
    ds = build_validation_mesh(n, "none", None)
    prop = Propagator(run_spec, params)
    stage = prop.stages.index(("channel", None))
    rho = prop.forward_cache(vec_states([p.input for p in ds.pairs]))[stage]
    d = chan.dim
    rho = rho.reshape(-1, d, d)
    out = {}
    for op, label in zip(chan.operators, chan.labels):
        g = op.conj().T @ op
        out[label] = np.einsum("ij,bji->b", g, rho).real.reshape(n, n)
    return out


def conditional_fidelity(spec: NetworkSpec, params: np.ndarray, n: int = 20,
                         cases: Sequence[str] | None = None,
                         channel: ch.KrausChannel | None = None,
                         encode: str | None = None) -> ConditionalReport:
    """One mesh per corruption case with the channel forced to that case."""
    chan = channel or (spec.channel_slot.channel if spec.channel_slot else None)
    if chan is None:
        raise ValueError("conditional fidelities need a channel")
    cases = list(chan.labels) if cases is None else list(cases)
    reports = {c: mesh_fidelity(spec, params, n, chan, "fixed_case", c, encode)
               for c in cases}
    probs = _case_probabilities(spec, params, n, chan, encode)
    return ConditionalReport({c: r.mean_fidelity for c, r in reports.items()}, reports,
                             {c: probs[c] for c in cases})


def oracle_failure(p: float) -> float:
    return float(bitflip3_failure_probability(p))


def compare_to_oracle(spec: NetworkSpec | None, params: np.ndarray | None,
                      p_grid: Sequence[float], n: int = 20) -> list[dict]:
    """Model mesh fidelity under i.i.d. flips next to majority-vote success."""
    rows = []
    for p in p_grid:
        fail = oracle_failure(p)
        row = {"p": float(p), "oracle_failure": fail, "oracle_success": 1 - fail,
               "formula_failure": float(bitflip3_failure_formula(p))}
        if spec is not None:
            rep = mesh_fidelity(spec, params, n, ch.bitflip_iid(p, 3), encode="bitflip3")
            row["qae_mean_fidelity"] = rep.mean_fidelity
        rows.append(row)
    return rows


def write_oracle_table(rows: list[dict], path: str | Path) -> None:
    cols = ["p", "oracle_failure", "oracle_success", "formula_failure"]
    if rows and "qae_mean_fidelity" in rows[0]:
        cols.append("qae_mean_fidelity")
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for r in rows:
                w.writerow([format(r[c], ".17g") for c in cols])
    except OSError as exc:
        raise OSError(f"cannot write oracle table {path}: {exc}") from exc


def emit_colormap(report: MeshReport, path: str | Path) -> Path:
    """Write ``theta,phi,fidelity`` rows plus a ``.meta`` key=value sidecar."""
    path = Path(path)
    meta = path.with_name(path.name + ".meta")
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["theta", "phi", "fidelity"])
            for i, th in enumerate(report.theta):
                for j, ph in enumerate(report.phi):
                    w.writerow([format(th, ".17g"), format(ph, ".17g"),
                                format(report.grid[i, j], ".17g")])
        meta.write_text(
            f"model_hash={report.model_hash}\n"
            f"channel={json.dumps(report.channel, sort_keys=True)}\n"
            f"mode={report.mode}\ncase={report.case}\nseed={report.seed}\n"
            f"N={report.n}\nmean_fidelity={format(report.mean_fidelity, '.17g')}\n")
    except OSError as exc:
        raise OSError(f"cannot write colormap {path}: {exc}") from exc
    return path


def read_colormap(path: str | Path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    rows = list(csv.DictReader(open(path)))
    theta = np.array([float(r["theta"]) for r in rows])
    phi = np.array([float(r["phi"]) for r in rows])
    fid = np.array([float(r["fidelity"]) for r in rows])
    return theta, phi, fid


def read_meta(path: str | Path) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        key, _, value = line.partition("=")
        out[key] = value
    return out
