import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dqnn.optim import OPTIMIZERS, make_optimizer


def reference_adam(grads, lr, b1=0.9, b2=0.999, eps=1e-8, nesterov=False):
    """Scalar-loop Adam/Nadam ascent written from the update equations."""
    x = np.zeros_like(grads[0])
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    for t, g in enumerate(grads, start=1):
        d = -g  # descend on -C
        m = b1 * m + (1 - b1) * d
        v = b2 * v + (1 - b2) * d**2
        if nesterov:
            mh = b1 * m / (1 - b1 ** (t + 1)) + (1 - b1) * d / (1 - b1**t)
        else:
            mh = m / (1 - b1**t)
        x = x - lr * mh / (np.sqrt(v / (1 - b2**t)) + eps)
    return x


def test_sgd_ascends():
    opt = make_optimizer("sgd", 0.5)
    assert np.allclose(opt.step(np.array([1.0]), np.array([2.0])), [2.0])


@pytest.mark.parametrize("nesterov", [False, True])
def test_adam_family_matches_reference(nesterov, rng):
    grads = [rng.normal(size=5) for _ in range(7)]
    opt = make_optimizer("nadam" if nesterov else "adam", 0.03)
    x = np.zeros(5)
    for g in grads:
        x = opt.step(x, g)
    assert np.allclose(x, reference_adam(grads, 0.03, nesterov=nesterov), atol=1e-14)


def test_adam_first_step_is_lr_sized():
    opt = make_optimizer("adam", 0.1)
    x = opt.step(np.zeros(3), np.array([5.0, -0.01, 2.0]))
    assert np.allclose(x, [0.1, -0.1, 0.1], atol=1e-6)


def test_rmsprop_and_adamax_reference():
    g = np.array([0.5, -2.0])
    r = make_optimizer("rmsprop", 0.01)
    x = r.step(np.zeros(2), g)
    assert np.allclose(x, 0.01 * g / (np.sqrt(0.1 * g * g) + 1e-8))
    a = make_optimizer("adamax", 0.002)
    x = a.step(np.zeros(2), g)
    assert np.allclose(x, 0.002 * np.sign(g), atol=1e-8)


@pytest.mark.parametrize("name", sorted(OPTIMIZERS))
def test_all_optimizers_maximize_concave(name):
    lr = {"sgd": 0.1}.get(name, 0.05)
    opt = make_optimizer(name, lr)
    x = np.array([0.0, 5.0])
    for _ in range(2000):
        x = opt.step(x, -2 * (x - np.array([3.0, -1.0])))
    assert np.allclose(x, [3.0, -1.0], atol=0.05)


@settings(max_examples=20)
@given(st.sampled_from(sorted(OPTIMIZERS)), st.integers(0, 1000))
def test_zero_learning_rate_is_noop(name, seed):
    g = np.random.default_rng(seed).normal(size=4)
    x = np.arange(4.0)
    assert np.array_equal(make_optimizer(name, 0.0).step(x, g), x)


def test_errors():
    with pytest.raises(ValueError):
        make_optimizer("lbfgs", 0.1)
    with pytest.raises(ValueError):
        make_optimizer("sgd", 0.1).step(np.zeros(2), np.zeros(3))
