import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dqnn import channels as ch
from dqnn.qcore import density
import oracles

probs = st.floats(0, 1, allow_nan=False)


def _complete(chan):
    total = sum(e.conj().T @ e for e in chan.operators)
    return np.max(np.abs(total - np.eye(chan.dim)))


@settings(max_examples=40, deadline=None)
@given(probs, st.integers(1, 3))
def test_constructors_are_complete(p, n):
    for chan in (ch.bitflip_iid(p, n), ch.single_error_bitflip(p, n), ch.amplitude_damping(p, n)):
        assert _complete(chan) <= ch.COMPLETENESS_TOL
        assert chan.n_qubits == n


def test_invalid_parameters():
    with pytest.raises(ValueError):
        ch.bitflip_iid(1.2)
    with pytest.raises(ValueError):
        ch.amplitude_damping(-0.1)
    with pytest.raises(ValueError):
        ch.KrausChannel((np.eye(2) * 0.9,), ("x",))


def test_amplitude_damping_fixes_ground_state():
    chan = ch.amplitude_damping(0.37, 1)
    g = density(np.array([1, 0]))
    assert np.allclose(ch.apply_kraus(chan, g), g)
    excited = ch.apply_kraus(chan, density(np.array([0, 1])))
    assert np.allclose(np.diag(excited), [0.37, 0.63])


def test_bitflip_iid_brute_force(rng):
    chan = ch.bitflip_iid(0.3, 3)
    rho = oracles.random_density(rng, 3)
    ref = np.zeros_like(rho)
    for k in range(8):
        bits = oracles.bits_of(k, 3)
        w = np.prod([0.3 if b else 0.7 for b in bits])
        op = oracles.kron_all([oracles.P1["X" if b else "I"] for b in bits])
        ref += w * op @ rho @ op
    assert np.allclose(ch.apply_kraus(chan, rho), ref)


def test_single_error_labels_and_limits():
    assert ch.single_error_bitflip(0.0).labels == ("no_error",)
    assert ch.single_error_bitflip(1.0).labels == ("flip_q1", "flip_q2", "flip_q3")
    w = ch.single_error_bitflip(0.75).case_weights()
    assert np.allclose(w, [0.25, 0.25, 0.25, 0.25])
    assert ch.amplitude_damping(0.1, 2).case_weights() is None


def test_superoperator_matches_apply(rng):
    chan = ch.amplitude_damping(0.2, 2)
    rho = oracles.random_density(rng, 2)
    out = (ch.superoperator(chan) @ rho.ravel()).reshape(4, 4)
    assert np.allclose(out, ch.apply_kraus(chan, rho))


def test_enumerate_and_mixture(rng):
    chan = ch.amplitude_damping(0.25, 2)
    psi = oracles.random_state(rng, 2)
    outs = ch.enumerate_corruption(chan, psi)
    assert sum(o.probability for o in outs) == pytest.approx(1)
    assert np.allclose(ch.mixture(outs), ch.apply_kraus(chan, density(psi)))


def test_sample_corruption_is_seeded(rng):
    chan = ch.single_error_bitflip(0.5, 3)
    psi = oracles.bitflip3_codeword(0.6, 0.8)
    a = [ch.sample_corruption(chan, psi, 7).case_label for _ in range(3)]
    b = [ch.sample_corruption(chan, psi, 7).case_label for _ in range(3)]
    assert a == b
    freq = {}
    g = np.random.default_rng(0)
    for _ in range(4000):
        lab = ch.sample_corruption(chan, psi, g).case_label
        freq[lab] = freq.get(lab, 0) + 1
    assert abs(freq["no_error"] / 4000 - 0.5) < 0.03


def test_forced_case_zero_probability():
    chan = ch.amplitude_damping(0.3, 1)
    with pytest.raises(ValueError):
        ch.forced_case(chan, np.array([1, 0]), "damp_q1")


@pytest.mark.parametrize("gamma", [0.05, 0.1, 0.4])
def test_ad_closed_form_matches_kraus_strings(gamma):
    a0, a1 = oracles.ad_ops(gamma)
    rng = np.random.default_rng(int(gamma * 1000))
    singles = {"e0_all": [a0] * 4}
    for q in range(4):
        singles[f"damp_q{q + 1}"] = [a1 if r == q else a0 for r in range(4)]
    for _ in range(50):
        a, b = oracles.random_state(rng, 1)
        psi = oracles.ad4_codeword(a, b)
        for which, ops in singles.items():
            ref = oracles.kron_all(ops) @ psi
            out = ch.ad_corruption_state(a, b, which, gamma)
            v = out.state * np.sqrt(out.probability)
            assert np.max(np.abs(v - ref)) <= 1e-12


def test_biased_sampler_frequencies():
    g = np.random.default_rng(1)
    labels = [ch.biased_ad_sampler(0.8, 0.1, 1, 0, g).case_label for _ in range(2000)]
    assert abs(labels.count("e0_all") / 2000 - 0.2) < 0.03
    assert set(labels) <= set(ch.AD_CASES)


def test_channel_from_config_round_trip():
    for chan in (ch.bitflip_iid(0.2, 3), ch.single_error_bitflip(0.75, 3),
                 ch.amplitude_damping(0.1, 4)):
        assert ch.channel_from_config(chan.config()) == chan
    with pytest.raises(ValueError):
        ch.channel_from_config({"kind": "depolarizing", "p": 0.1})
