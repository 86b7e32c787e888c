import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hympc.nnet import Mlp, TrainingError, elu, elu_grad


def fd_check(net, X, Y, h=1e-6):
    _, gW, gb = net.loss_and_grads(X, Y)
    worst = 0.0
    for params, grads in ((net.weights, gW), (net.biases, gb)):
        for P, G in zip(params, grads):
            flat = P.reshape(-1)
            for idx in range(flat.size):
                old = flat[idx]
                flat[idx] = old + h
                lp = net.loss_and_grads(X, Y)[0]
                flat[idx] = old - h
                lm = net.loss_and_grads(X, Y)[0]
                flat[idx] = old
                num = (lp - lm) / (2 * h)
                ana = G.reshape(-1)[idx]
                worst = max(worst, abs(num - ana) / max(abs(num), abs(ana), 1e-6))
    return worst


def test_gradients_match_finite_differences(rng):
    net = Mlp([5, 7, 6, 3], seed=3)
    X = rng.normal(size=(8, 5))
    Y = rng.normal(size=(8, 3))
    assert fd_check(net, X, Y) < 1e-4


def test_elu_and_derivative():
    z = np.array([-2.0, -1e-9, 0.0, 1e-9, 3.0])
    assert np.allclose(elu(z), [np.expm1(-2), -1e-9, 0, 1e-9, 3])
    h = 1e-6
    zz = np.array([-1.3, 0.7])
    assert np.allclose(elu_grad(zz), (elu(zz + h) - elu(zz - h)) / (2 * h), atol=1e-8)


def test_batch_and_single_agree(rng):
    net = Mlp([4, 8, 2], seed=0)
    X = rng.normal(size=(5, 4))
    batch = net(X)
    assert np.allclose(batch, np.array([net(x) for x in X]))
    with pytest.raises(ValueError):
        net(np.zeros(3))


def test_seeded_init_is_reproducible():
    a, b = Mlp([3, 4, 1], seed=5), Mlp([3, 4, 1], seed=5)
    assert all(np.array_equal(x, y) for x, y in zip(a.parameters(), b.parameters()))
    W = Mlp([100, 50], seed=0).weights[0]
    assert np.abs(W).max() <= np.sqrt(6 / 100)


def test_zero_net_outputs_zero():
    assert np.all(Mlp([3, 5, 2], zero=True)(np.ones(3)) == 0)


def test_training_reduces_loss(rng):
    X = rng.uniform(-1, 1, size=(64, 2))
    Y = np.sin(2 * X[:, :1]) + X[:, 1:] ** 2
    net = Mlp([2, 32, 1], seed=1, momentum=0.9)
    first = net.train_step(X, Y, 1e-2)
    for _ in range(500):
        last = net.train_step(X, Y, 1e-2)
    assert last < 0.2 * first


def test_nonfinite_loss_raises():
    net = Mlp([2, 3, 1])
    with pytest.raises(TrainingError):
        net.train_step(np.array([[np.nan, 0.0]]), np.array([[0.0]]), 0.1)
    with pytest.raises(ValueError):
        net.train_step(np.zeros((1, 2)), np.zeros((1, 1)), 0.0)


def test_serialization_round_trip(tmp_path, rng):
    net = Mlp([3, 6, 2], seed=2)
    net.save(tmp_path / "n.json")
    back = Mlp.load(tmp_path / "n.json")
    x = rng.normal(size=3)
    assert np.array_equal(net(x), back(x))
    data = net.to_dict()
    data["weights"][0] = [[0.0]]
    with pytest.raises(ValueError):
        Mlp.from_dict(data)
    with pytest.raises(ValueError):
        Mlp.from_dict({**net.to_dict(), "version": 99})


@given(st.lists(st.integers(1, 6), min_size=2, max_size=4))
def test_output_shape(sizes):
    net = Mlp(sizes, seed=0)
    assert net(np.zeros((3, sizes[0]))).shape == (3, sizes[-1])
