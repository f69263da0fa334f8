"""End-to-end experiment execution from an ExperimentConfig."""
from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import channels as ch
from . import evaluation as ev
from .codes import CARDINAL, Dataset, build_train_ad, build_train_bitflip, \
    build_train_identity, build_validation_mesh
from .config import ChannelModel, EvalModel, ExperimentConfig
from .network import NetworkSpec, make_spec, save_checkpoint
from .training import EarlyStopping, SessionConfig, TrainRecord, init_params, run_session

log = logging.getLogger(__name__)

OUTPUT_ROOT_ENV = "DQNN_OUTPUT_ROOT"


@dataclass
class ExperimentResult:
    spec: NetworkSpec
    params: np.ndarray
    record: TrainRecord
    summary: dict = field(default_factory=dict)
    mesh: ev.MeshReport | None = None
    conditional: ev.ConditionalReport | None = None
    out_dir: Path | None = None


def output_dir(cfg: ExperimentConfig) -> Path:
    root = os.environ.get(OUTPUT_ROOT_ENV)
    path = Path(cfg.output_dir)
    return Path(root) / path if root and not path.is_absolute() else path


def build_channel(model: ChannelModel | None) -> ch.KrausChannel | None:
    return None if model is None else ch.channel_from_config(model.as_dict())


def build_spec(cfg: ExperimentConfig) -> NetworkSpec:
    net = cfg.network
    chan = build_channel(cfg.channel) if net.channel_position is not None else None
    return make_spec(net.widths, [tuple(b) for b in net.bindings], chan, net.channel_position)


def build_train(cfg: ExperimentConfig, spec: NetworkSpec, session: int = 0) -> Dataset:
    """Training set for ``session`` (0 is the base ``[dataset]`` table)."""
    d = cfg.dataset.model_dump()
    if session:
        d.update(cfg.sessions[session - 1].dataset_overrides())
    seed = cfg.dataset_seed(session)
    states = d["states"]
    if d["builder"] == "bitflip":
        return build_train_bitflip(d["n_pairs"], d["p"], seed, d["model"],
                                   tuple(states or CARDINAL))
    if d["builder"] == "ad":
        return build_train_ad(d["n_pairs"], d["gamma"], d["p_bias"],
                              tuple(states or ("0", "1", "+")), seed)
    fixed = spec.channel_slot.channel if (d["fixed_channel_cases"] and spec.channel_slot) \
        else None
    return build_train_identity(d["n_pairs"], tuple(states or ("0", "1", "+", "-")),
                                seed, fixed)


def build_validation(cfg: ExperimentConfig, spec: NetworkSpec) -> Dataset:
    v = cfg.validation
    seed = cfg.validation_seed()
    if spec.channel_slot is not None:
        # the channel lives inside the network
        return build_validation_mesh(v.N, "none", None, seed=seed)
    chan = build_channel(v.channel or cfg.channel)
    return build_validation_mesh(v.N, v.encode or ev.default_encoding(spec), chan,
                                 v.mode, v.case, seed)


def session_config(cfg: ExperimentConfig, k: int, epochs: int | None = None) -> SessionConfig:
    s = cfg.sessions[k - 1]
    stop = None if s.early_stopping is None else \
        EarlyStopping(s.early_stopping.patience, s.early_stopping.min_delta)
    return SessionConfig(s.learning_rate, epochs or s.epochs, s.batch_size, s.optimizer,
                         dict(s.optimizer_params), stop, s.cost_mode, s.shots, s.epsilon,
                         cfg.session_seed(k), s.channel_sampling)


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def evaluate(spec: NetworkSpec, params: np.ndarray, spec_eval: EvalModel,
             default_channel: ChannelModel | None = None, out_dir: Path | None = None,
             ) -> tuple[dict, ev.MeshReport, ev.ConditionalReport | None]:
    """Overall mesh, per-case meshes and named extra meshes; optionally written out."""
    chan_model = spec_eval.channel or (None if spec.channel_slot else default_channel)
    chan = build_channel(chan_model)
    mesh = ev.mesh_fidelity(spec, params, spec_eval.N, chan, spec_eval.mode, spec_eval.case,
                            spec_eval.encode, spec_eval.seed)
    summary = {"model_hash": mesh.model_hash, "N": spec_eval.N,
               "mean_fidelity": mesh.mean_fidelity}
    files = {"mesh.csv": mesh}
    cond = None
    cond_chan = chan or (spec.channel_slot.channel if spec.channel_slot else None)
    if spec_eval.conditional and cond_chan is not None:
        cond = ev.conditional_fidelity(spec, params, spec_eval.N, spec_eval.cases, cond_chan,
                                       spec_eval.encode)
        for label, rep in cond.reports.items():
            summary[f"case.{label}"] = rep.mean_fidelity
            files[f"mesh_case_{label}.csv"] = rep
    for extra in spec_eval.meshes:
        rep = ev.mesh_fidelity(spec, params, spec_eval.N, build_channel(extra.channel),
                               extra.mode, extra.case, spec_eval.encode, spec_eval.seed)
        summary[f"mesh.{extra.name}"] = rep.mean_fidelity
        files[f"mesh_{extra.name}.csv"] = rep
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        for name, rep in files.items():
            ev.emit_colormap(rep, out_dir / name)
        write_summary(summary, out_dir / "summary.txt")
    return summary, mesh, cond


def write_summary(summary: dict, path: Path) -> None:
    lines = [f"{k}={_fmt(v) if isinstance(v, float) else v}" for k, v in summary.items()]
    try:
        path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write summary {path}: {exc}") from exc


def run_experiment(cfg: ExperimentConfig, out_dir: Path | None = None,
                   max_epochs: int | None = None, evaluate_final: bool = True,
                   ) -> ExperimentResult:
    """Train every session in order, checkpointing after each one.

    ``max_epochs`` caps each session (smoke runs). With ``out_dir`` set the
    config, checkpoints, training record and final reports are written there.
    A numerical failure propagates after the last good checkpoint is on disk.
    """
    spec = build_spec(cfg)
    params = init_params(spec, cfg.network.init, cfg.init_seed())
    val = build_validation(cfg, spec)
    train = build_train(cfg, spec, 0)
    record = TrainRecord()
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "config.json").write_text(
            json.dumps(cfg.model_dump(mode="json"), indent=2, sort_keys=True) + "\n")
        save_checkpoint(out_dir / "checkpoint.json", spec, params)
    try:
        for k, s in enumerate(cfg.sessions, start=1):
            if s.dataset_overrides() or s.dataset_seed is not None:
                train = build_train(cfg, spec, k)
            epochs = s.epochs if max_epochs is None else min(s.epochs, max_epochs)
            params, rec = run_session(spec, params, train, val,
                                      session_config(cfg, k, epochs), k, len(record))
            record.extend(rec)
            log.info("session %d done: val %.4f", k, rec.val_costs[-1])
            if out_dir is not None:
                save_checkpoint(out_dir / f"checkpoint_session{k}.json", spec, params)
                save_checkpoint(out_dir / "checkpoint.json", spec, params)
    finally:
        if out_dir is not None and len(record):
            record.write_csv(out_dir / "record.csv", wall_time=cfg.record_wall_time)
    result = ExperimentResult(spec, params, record, out_dir=out_dir)
    if evaluate_final:
        summary, mesh, cond = evaluate(spec, params, cfg.eval, cfg.channel, out_dir)
        summary["final_val_cost"] = float(record.val_costs[-1])
        if out_dir is not None:
            write_summary(summary, out_dir / "summary.txt")
        result.summary, result.mesh, result.conditional = summary, mesh, cond
    return result
