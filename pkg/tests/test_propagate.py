import numpy as np
import pytest

from dqnn import channels as ch
from dqnn import network as nw
from dqnn.propagate import Propagator, superop_from_unitary, vec_states, vec_targets
import oracles

CASES = [([2, 1, 2], [(1, 2)], None), ([1, 2, 1], [], None), ([2, 2], [], None),
         ([1, 2, 1], [(2, 1)], ch.single_error_bitflip(0.5, 2)),
         ([1, 1, 2, 1], [], ch.amplitude_damping(0.3, 1))]


def test_superop_matches_layer(rng):
    spec = nw.make_spec([2, 1])
    params = rng.normal(size=spec.n_params)
    u = nw.layer_unitary(spec, params, 1)
    rho = oracles.random_density(rng, 2)
    phi = superop_from_unitary(u, 2, 1)
    out = (phi @ rho.ravel()).reshape(2, 2)
    assert np.allclose(out, nw.apply_layer_unitary(u, rho, 2, 1))


@pytest.mark.parametrize("widths,bindings,chan", CASES)
def test_predict_matches_forward(widths, bindings, chan, rng):
    spec = nw.make_spec(widths, bindings, chan, 1 if chan else None)
    params = rng.uniform(-1, 1, spec.n_params)
    states = [oracles.random_density(rng, widths[0]) for _ in range(4)]
    out = Propagator(spec, params).predict(vec_states(states))
    for o, s in zip(out, states):
        assert np.allclose(o, nw.forward(spec, params, s), atol=1e-12)


@pytest.mark.parametrize("widths,bindings,chan", CASES)
def test_perturbed_fidelities_match_direct(widths, bindings, chan, rng):
    spec = nw.make_spec(widths, bindings, chan, 1 if chan else None)
    params = rng.uniform(-1, 1, spec.n_params)
    psis = [oracles.random_state(rng, widths[0]) for _ in range(3)]
    targets = [oracles.random_state(rng, widths[-1]) for _ in range(3)]
    r0, t = vec_states(psis), vec_targets(targets)
    eps = 1e-3
    prop = Propagator(spec, params)
    seen = np.zeros(spec.n_params, bool)
    for idx, f_plus, f_minus in prop.perturbed_fidelities(r0, t, eps):
        for row, i in enumerate(idx):
            if rng.uniform() > 0.2:
                continue
            for sign, f in ((1, f_plus), (-1, f_minus)):
                shifted = params.copy()
                shifted[i] += sign * eps
                direct = Propagator(spec, shifted).fidelities(r0, t)
                assert np.allclose(f[row], direct, atol=1e-12)
        seen[list(idx)] = True
    assert seen.all()


def test_case_override_matches_forced_forward(rng):
    chan = ch.single_error_bitflip(0.75, 3)
    spec = nw.make_spec([1, 3, 1], [(2, 1)], chan, 1)
    params = rng.uniform(0, 1, spec.n_params)
    psi = oracles.random_state(rng, 1)
    prop = Propagator(spec, params)
    for k, label in enumerate(chan.labels):
        out = prop.predict(vec_states([psi]), np.array([k]))[0]
        assert np.allclose(out, nw.forward(spec, params, psi, label), atol=1e-12)
