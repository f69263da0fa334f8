import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dqnn import channels as ch
from dqnn import codes
from dqnn import network as nw
from dqnn import training as tr
from dqnn.codes import Dataset, TrainingPair
from dqnn.qcore import density
import oracles


def _random_dataset(rng, n_in, n_out, size=4):
    pairs = tuple(TrainingPair(oracles.random_state(rng, n_in), oracles.random_state(rng, n_out))
                  for _ in range(size))
    return Dataset(pairs, "train")


def _oracle_cost(widths, bindings, ds):
    def f(params):
        vals = [np.vdot(p.target, oracles.forward(widths, bindings, params,
                                                  density(p.input)) @ p.target).real
                for p in ds.pairs]
        return float(np.mean(vals))
    return f


@pytest.mark.parametrize("widths,bindings", [([1, 2, 1], []), ([2, 1, 2], [(1, 2)])])
def test_gradient_matches_richardson(widths, bindings, rng):
    spec = nw.make_spec(widths, bindings)
    params = rng.uniform(-1, 1, spec.n_params)
    ds = _random_dataset(rng, widths[0], widths[-1])
    g = tr.gradient(spec, params, ds)
    f = _oracle_cost(widths, bindings, ds)
    for _ in range(2):
        v = rng.normal(size=spec.n_params)
        v /= np.linalg.norm(v)
        ref = oracles.richardson_directional(f, params, v)
        assert abs(g @ v - ref) <= 1e-4 * max(abs(ref), 1e-3)


def test_cost_of_matching_pairs_is_one():
    spec = nw.make_spec([1, 1])
    ds = codes.build_train_identity(5, seed=0)
    # zero parameters leave the fresh qubit in |0>, so only |0> targets score 1
    f = tr.pair_fidelities(spec, np.zeros(spec.n_params), ds)
    for val, p in zip(f, ds.pairs):
        assert val == pytest.approx(abs(p.target[0]) ** 2)


def test_dimension_mismatch():
    spec = nw.make_spec([3, 1, 3])
    with pytest.raises(ValueError):
        tr.cost(spec, np.zeros(spec.n_params), codes.build_train_ad(3, 0.1, 0.5, seed=0))


def _small_problem():
    spec = nw.make_spec([3, 1, 3])
    train = codes.build_train_bitflip(12, 0.2, 0)
    val = codes.build_validation_mesh(3, "bitflip3", ch.single_error_bitflip(0.2))
    return spec, train, val


def test_run_session_deterministic_and_records():
    spec, train, val = _small_problem()
    p0 = tr.init_params(spec, "uniform01", 0)
    cfg = tr.SessionConfig(0.01, 3, 4, "adam", seed=2)
    a, rec_a = tr.run_session(spec, p0, train, val, cfg)
    b, rec_b = tr.run_session(spec, p0, train, val, cfg)
    assert np.array_equal(a, b)
    assert len(rec_a) == 3
    assert np.array_equal(rec_a.val_costs, rec_b.val_costs)
    assert rec_a.val_costs[-1] > rec_a.val_costs[0] - 1e-3


def test_zero_learning_rate_keeps_parameters():
    spec, train, val = _small_problem()
    p0 = tr.init_params(spec, "uniform01", 1)
    p1, rec = tr.run_session(spec, p0, train, val, tr.SessionConfig(0.0, 2))
    assert np.array_equal(p0, p1)
    assert rec.val_costs[0] == rec.val_costs[1]


def test_early_stopping_returns_best():
    spec, train, val = _small_problem()
    p0 = tr.init_params(spec, "uniform01", 1)
    cfg = tr.SessionConfig(0.0, 10, early_stopping=tr.EarlyStopping(patience=2))
    p1, rec = tr.run_session(spec, p0, train, val, cfg)
    assert len(rec) == 3
    assert np.array_equal(p1, p0)


def test_numerical_failure(monkeypatch):
    spec, train, val = _small_problem()
    p0 = tr.init_params(spec, "uniform01", 1)
    monkeypatch.setattr(tr, "gradient", lambda *a, **k: np.full(spec.n_params, np.inf))
    with pytest.raises(tr.NumericalFailure):
        tr.run_session(spec, p0, train, val, tr.SessionConfig(0.1, 2, optimizer="sgd"))


def test_session_config_validation():
    with pytest.raises(ValueError):
        tr.SessionConfig(-1.0, 2)
    with pytest.raises(ValueError):
        tr.SessionConfig(0.1, 0)
    with pytest.raises(ValueError):
        tr.SessionConfig(0.1, 1, cost_mode="shots")


def test_run_sessions_chain_and_csv(tmp_path):
    spec, train, val = _small_problem()
    p0 = tr.init_params(spec, "uniform01", 3)
    seen = []
    cfgs = [(tr.SessionConfig(0.01, 2, None, "adam", seed=1), train),
            (tr.SessionConfig(0.002, 1, seed=2), train)]
    p, rec = tr.run_sessions(spec, p0, cfgs, val, lambda k, params, r: seen.append(k))
    assert seen == [1, 2] and len(rec) == 3
    assert [e.epoch for e in rec.entries] == [1, 2, 3]
    rec.write_csv(tmp_path / "a.csv", wall_time=False)
    rec.write_csv(tmp_path / "b.csv", wall_time=False)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a.csv").read_text().splitlines()[0].startswith("epoch,session")


def test_swap_test_cost_mode_and_channel_sampling():
    chan = ch.single_error_bitflip(0.75)
    spec = nw.make_spec([1, 3, 1], [(2, 1)], chan, 1)
    train = codes.build_train_identity(6, seed=0, channel=chan)
    val = codes.build_validation_mesh(2, "none")
    p0 = tr.init_params(spec, "uniform01", 0)
    for sampling in ("kraus", "fixed", "per_epoch"):
        cfg = tr.SessionConfig(0.01, 1, None, "adam", cost_mode="swap_test", shots=200,
                               seed=0, channel_sampling=sampling)
        p, rec = tr.run_session(spec, p0, train, val, cfg)
        assert np.all(np.isfinite(p)) and len(rec) == 1


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 2), st.integers(0, 2**32 - 1))
def test_swap_circuit_probability(n, seed):
    rng = np.random.default_rng(seed)
    rho = oracles.random_density(rng, n)
    psi = oracles.random_state(rng, n)
    f = np.vdot(psi, rho @ psi).real
    assert tr.swap_test_p0_circuit(rho, psi) == pytest.approx((1 + f) / 2, abs=1e-12)


def test_swap_estimator_mean_and_clamp():
    psi = np.array([1, 0], complex)
    rho = np.eye(2) / 2
    g = np.random.default_rng(0)
    est = [tr.swap_test_fidelity(rho, psi, 500, g) for _ in range(2000)]
    assert abs(np.mean(est) - 0.5) < 3 * np.std(est) / np.sqrt(len(est))
    orth = density(np.array([0, 1]))
    clamped = [tr.swap_test_fidelity(orth, psi, 50, g, clamp=True) for _ in range(50)]
    assert min(clamped) >= 0
    with pytest.raises(ValueError):
        tr.swap_test_fidelity(rho, psi, 0)
