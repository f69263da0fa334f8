"""Cost, finite-difference gradients, training sessions and the swap-test estimator."""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .codes import Dataset
from .network import NetworkSpec
from .optim import make_optimizer
from .propagate import Propagator, vec_states, vec_targets
from .qcore import as_density, dagger, fidelity_pure, n_qubits_of

log = logging.getLogger(__name__)

COST_MODES = ("exact", "swap_test")
CHANNEL_SAMPLING = ("kraus", "fixed", "per_epoch")


class NumericalFailure(RuntimeError):
    """Raised when the cost stops being finite (parameter blow-up)."""


@dataclass(frozen=True)
class EarlyStopping:
    patience: int = 10
    min_delta: float = 1e-4


@dataclass(frozen=True)
class SessionConfig:
    learning_rate: float
    epochs: int
    batch_size: int | None = None
    optimizer: str = "sgd"
    optimizer_params: dict = field(default_factory=dict)
    early_stopping: EarlyStopping | None = None
    cost_mode: str = "exact"
    shots: int = 1000
    epsilon: float = 1e-3
    seed: int = 0
    channel_sampling: str = "kraus"

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.cost_mode not in COST_MODES:
            raise ValueError(f"cost_mode must be one of {COST_MODES}")
        if self.shots < 1:
            raise ValueError("shots must be at least 1")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.channel_sampling not in CHANNEL_SAMPLING:
            raise ValueError(f"channel_sampling must be one of {CHANNEL_SAMPLING}")


@dataclass
class EpochEntry:
    epoch: int
    session: int
    train_cost: float
    val_cost: float
    wall_ms: float


@dataclass
class TrainRecord:
    entries: list = field(default_factory=list)

    def __len__(self):
        return len(self.entries)

    def extend(self, other: "TrainRecord") -> None:
        self.entries.extend(other.entries)

    @property
    def val_costs(self) -> np.ndarray:
        return np.array([e.val_cost for e in self.entries])

    @property
    def train_costs(self) -> np.ndarray:
        return np.array([e.train_cost for e in self.entries])

    def write_csv(self, path: str | Path, wall_time: bool = True) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "session", "train_cost", "val_cost", "wall_ms"])
            for e in self.entries:
                w.writerow([e.epoch, e.session, repr(e.train_cost), repr(e.val_cost),
                            f"{e.wall_ms:.3f}" if wall_time else "0"])


# -- cost and gradient --------------------------------------------------------

def _check_dims(spec: NetworkSpec, ds: Dataset) -> None:
    if ds.n_in != spec.widths[0] or ds.n_out != spec.widths[-1]:
        raise ValueError(
            f"dataset maps {ds.n_in}->{ds.n_out} qubits, network is "
            f"{spec.widths[0]}->{spec.widths[-1]}")


def _vectors(ds: Dataset):
    return (vec_states([p.input for p in ds.pairs]),
            vec_targets([p.target for p in ds.pairs]))


def swap_estimator(shots: int, rng: np.random.Generator):
    """Per-pair fidelities -> shot-noise estimates 2 * n0 / S - 1."""
    def estimate(f: np.ndarray) -> np.ndarray:
        p0 = np.clip((1 + f) / 2, 0.0, 1.0)
        return 2 * rng.binomial(shots, p0) / shots - 1
    return estimate


def pair_fidelities(spec: NetworkSpec, params: np.ndarray, ds: Dataset,
                    cases=None) -> np.ndarray:
    _check_dims(spec, ds)
    r, t = _vectors(ds)
    f = Propagator(spec, params).fidelities(r, t, cases)
    return np.clip(f, 0.0, 1.0)


def cost(spec: NetworkSpec, params: np.ndarray, ds: Dataset, cases=None,
         estimator=None) -> float:
    """Weighted mean fidelity of network outputs against the targets."""
    f = pair_fidelities(spec, params, ds, cases)
    if estimator is not None:
        f = estimator(f)
    return float(ds.cost_weights() @ f)


def gradient(spec: NetworkSpec, params: np.ndarray, ds: Dataset, epsilon: float = 1e-3,
             cases=None, estimator=None) -> np.ndarray:
    """Central finite differences of ``cost`` for every trainable coefficient."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    _check_dims(spec, ds)
    r, t = _vectors(ds)
    w = ds.cost_weights()
    grad = np.zeros(spec.n_params)
    for idx, f_plus, f_minus in Propagator(spec, params).perturbed_fidelities(
            r, t, epsilon, cases):
        if estimator is not None:
            f_plus, f_minus = estimator(f_plus), estimator(f_minus)
        grad[idx] = (f_plus - f_minus) @ w / (2 * epsilon)
    return grad


def init_params(spec: NetworkSpec, scheme: str = "uniform01", seed: int = 0) -> np.ndarray:
    if scheme == "zeros":
        return np.zeros(spec.n_params)
    if scheme == "uniform01":
        return np.random.default_rng(seed).uniform(0.0, 1.0, spec.n_params)
    raise ValueError(f"unknown initialization scheme {scheme!r}")


# -- sessions -----------------------------------------------------------------

def _case_sampler(spec: NetworkSpec, ds: Dataset, cfg: SessionConfig,
                  rng: np.random.Generator):
    """Returns a callable epoch -> per-pair channel cases (or None)."""
    if spec.channel_slot is None or cfg.channel_sampling == "kraus":
        return lambda: None
    chan = spec.channel_slot.channel
    probs = chan.case_weights()
    if probs is None:
        raise ValueError("sampled channel cases need state-independent case probabilities")
    probs = probs / probs.sum()
    if cfg.channel_sampling == "fixed":
        fixed = ds.channel_cases()
        if fixed is None:
            fixed = rng.choice(len(probs), size=len(ds), p=probs)
        return lambda: fixed
    return lambda: rng.choice(len(probs), size=len(ds), p=probs)


def run_session(spec: NetworkSpec, params: np.ndarray, train_set: Dataset,
                val_set: Dataset, cfg: SessionConfig, session: int = 0,
                epoch_offset: int = 0) -> tuple[np.ndarray, TrainRecord]:
    """Train for ``cfg.epochs`` epochs (or until early stopping).

    Returns the final parameters, or the best-validation snapshot when
    early stopping is configured.
    """
    _check_dims(spec, train_set)
    _check_dims(spec, val_set)
    params = np.array(params, dtype=float)
    rng = np.random.default_rng(cfg.seed)
    opt = make_optimizer(cfg.optimizer, cfg.learning_rate, **cfg.optimizer_params)
    estimator = swap_estimator(cfg.shots, rng) if cfg.cost_mode == "swap_test" else None
    next_cases = _case_sampler(spec, train_set, cfg, rng)
    r_val, t_val = _vectors(val_set)
    w_val = val_set.cost_weights()
    n = len(train_set)
    record = TrainRecord()
    best_val, best_params, stale = -np.inf, params.copy(), 0
    for epoch in range(cfg.epochs):
        start = time.perf_counter()
        cases = next_cases()
        if cfg.batch_size is None or cfg.batch_size >= n:
            batches = [np.arange(n)]
        else:
            order = rng.permutation(n)
            batches = [order[i:i + cfg.batch_size] for i in range(0, n, cfg.batch_size)]
        for idx in batches:
            batch = train_set.subset(idx) if len(idx) < n else train_set
            batch_cases = None if cases is None else cases[idx]
            g = gradient(spec, params, batch, cfg.epsilon, batch_cases, estimator)
            params = opt.step(params, g)
            if not np.all(np.isfinite(params)):
                raise NumericalFailure(
                    f"non-finite parameters at session {session} "
                    f"epoch {epoch_offset + epoch + 1}")
        prop = Propagator(spec, params)
        r, t = _vectors(train_set)
        f_train = np.clip(prop.fidelities(r, t, cases), 0, 1)
        if estimator is not None:
            f_train = estimator(f_train)
        train_cost = float(np.clip(train_set.cost_weights() @ f_train, 0, 1)) \
            if np.all(np.isfinite(f_train)) else float("nan")
        val_cost = float(w_val @ np.clip(prop.fidelities(r_val, t_val), 0, 1))
        if not (np.isfinite(train_cost) and np.isfinite(val_cost)
                and np.all(np.isfinite(params))):
            raise NumericalFailure(
                f"non-finite cost at session {session} epoch {epoch_offset + epoch + 1}: "
                f"train={train_cost}, val={val_cost}, max|param|="
                f"{np.max(np.abs(params)):.3g}")
        wall = (time.perf_counter() - start) * 1e3
        record.entries.append(EpochEntry(epoch_offset + epoch + 1, session,
                                         train_cost, val_cost, wall))
        log.debug("session %d epoch %d train %.5f val %.5f", session,
                  epoch_offset + epoch + 1, train_cost, val_cost)
        if cfg.early_stopping is not None:
            if val_cost > best_val + cfg.early_stopping.min_delta:
                best_val, best_params, stale = val_cost, params.copy(), 0
            else:
                stale += 1
                if stale >= cfg.early_stopping.patience:
                    log.info("early stopping at epoch %d", epoch_offset + epoch + 1)
                    return best_params, record
    if cfg.early_stopping is not None:
        return best_params, record
    return params, record


def run_sessions(spec: NetworkSpec, params: np.ndarray, sessions, val_set: Dataset,
                 callback=None) -> tuple[np.ndarray, TrainRecord]:
    """Run (SessionConfig, train_set) pairs in order, each continuing from the last."""
    record = TrainRecord()
    for k, (cfg, train_set) in enumerate(sessions, start=1):
        params, rec = run_session(spec, params, train_set, val_set, cfg, session=k,
                                  epoch_offset=len(record))
        record.extend(rec)
        if callback is not None:
            callback(k, params, record)
    return params, record


# -- swap test ----------------------------------------------------------------

def swap_test_p0_circuit(rho_out: np.ndarray, target: np.ndarray) -> float:
    """Ancilla-|0> probability from simulating H, controlled swaps, H on the full register."""
    rho_out = as_density(rho_out)
    target = np.asarray(target, dtype=complex)
    d = target.shape[0]
    n_qubits_of(d)
    if rho_out.shape != (d, d):
        raise ValueError("dimension mismatch between output state and target")
    swap = np.zeros((d * d, d * d))
    for i in range(d):
        for j in range(d):
            swap[j * d + i, i * d + j] = 1.0
    had = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
    h_a = np.kron(had, np.eye(d * d))
    p0, p1 = np.diag([1.0, 0.0]), np.diag([0.0, 1.0])
    cswap = np.kron(p0, np.eye(d * d)) + np.kron(p1, swap)
    state = np.kron(np.kron(p0, np.outer(target, target.conj())), rho_out)
    u = h_a @ cswap @ h_a
    final = u @ state @ dagger(u)
    return float(np.trace(np.kron(p0, np.eye(d * d)) @ final).real)


def swap_test_fidelity(rho_out: np.ndarray, target: np.ndarray, shots: int = 1000,
                       seed=None, clamp: bool = False) -> float:
    """Shot-based fidelity estimate 2 * (n0 / S) - 1 with P0 = (1 + F) / 2.

    The raw estimate is unbiased; ``clamp`` restricts it to [0, 1].
    """
    if shots < 1:
        raise ValueError("shots must be at least 1")
    f = fidelity_pure(target, as_density(rho_out))
    p0 = (1 + f) / 2
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    est = 2 * rng.binomial(shots, p0) / shots - 1
    return float(min(1.0, max(0.0, est))) if clamp else float(est)


def with_seed(cfg: SessionConfig, seed: int) -> SessionConfig:
    return replace(cfg, seed=seed)
