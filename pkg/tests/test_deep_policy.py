import numpy as np
import pytest

from hympc.deep_policy import (
    DATA_DIR, DeepPolicy, ReplayBuffer, Standardizer, collect, observation, train,
)
from hympc.harness.config import ScenarioConfig
from hympc.nnet import Mlp


def synthetic_buffer(n=300, seed=0):
    rng = np.random.default_rng(seed)
    buf = ReplayBuffer(n)
    for i in range(n):
        o = rng.normal(size=6)
        buf.add(o, float(np.clip(0.5 + 0.3 * np.tanh(o[0]), 0, 1)),
                0.5 + 0.2 * np.tanh(o[1]), 0.02 * i)
    return buf


def test_observation_is_relative_state():
    gate = np.array([2.0, 1.0, 1.0, 0.0, 1.0, 0.0])
    drone = np.concatenate([[1.0, 0.0, 1.0, 2.0, 0.0, 0.0], [1, 0, 0, 0]])
    assert np.allclose(observation(gate, drone), [1, 1, 0, -2, 1, 0])
    with pytest.raises(ValueError):
        observation(np.full(6, np.nan), drone)


def test_buffer_contract(tmp_path):
    buf = ReplayBuffer(2)
    assert buf.add(np.zeros(6), 0.2, 0.5, 0.0)
    assert buf.add(np.ones(6), 1.0, 1.0, 0.02)
    assert not buf.add(np.ones(6), 1.0, 1.0, 0.04)
    assert buf.full and len(buf) == 2
    with pytest.raises(ValueError):
        ReplayBuffer(3).add(np.zeros(6), 1.2, 0.5, 0.0)
    with pytest.raises(ValueError):
        ReplayBuffer(3).add(np.zeros(5), 0.2, 0.5, 0.0)
    with pytest.raises(ValueError):
        ReplayBuffer(0)
    buf.save(tmp_path / "b.csv")
    assert open(tmp_path / "b.csv").readline().strip() == "o1,o2,o3,o4,o5,o6,lambda,t_p,t"
    back = ReplayBuffer.load(tmp_path / "b.csv")
    assert np.array_equal(back.array, buf.array)


def test_constant_labels_are_learned():
    rng = np.random.default_rng(0)
    buf = ReplayBuffer(200)
    for _ in range(200):
        buf.add(rng.normal(size=6), 0.3, 0.7, 0.0)
    _, rep = train(buf, epochs=20, lr=1e-2)
    assert rep.lambda_loss < 1e-4 and rep.t_p_loss < 1e-4


def test_training_reduces_loss_and_generalizes():
    buf = synthetic_buffer(400)
    policy, rep = train(buf, epochs=40, lr=1e-2)
    first, last = rep.epoch_losses[0], rep.epoch_losses[-1]
    assert last[0] < first[0] and last[1] < first[1]
    held = synthetic_buffer(100, seed=9)
    lam_pred, _ = policy.raw(held.observations)
    assert np.mean((lam_pred - held.lambdas) ** 2) < np.var(held.lambdas)
    with pytest.raises(ValueError):
        train(ReplayBuffer(1))


def test_infer_clamps_counts_and_is_deterministic(tmp_path):
    lam = Mlp([6, 4, 1], seed=0)
    tp = Mlp([6, 4, 1], seed=1)
    lam.biases[-1][:] = 5.0
    tp.biases[-1][:] = -5.0
    pol = DeepPolicy(lam, tp, Standardizer(np.zeros(6), np.ones(6)))
    o = np.linspace(-1, 1, 6)
    assert pol.infer(o, 0.02, 1.0) == (1.0, 0.02)
    assert pol.infer(o, 0.02, 1.0) == pol.infer(o, 0.02, 1.0)
    assert pol.forward_calls == {"lambda": 3, "t_p": 3}
    pol.save(tmp_path)
    back = DeepPolicy.load(tmp_path)
    assert back.infer(o, 0.02, 1.0) == pol.infer(o, 0.02, 1.0)
    with pytest.raises(FileNotFoundError):
        DeepPolicy.load(tmp_path / "missing")
    with pytest.raises(ValueError):
        DeepPolicy(Mlp([5, 1]), tp, pol.norm)


def test_bundled_policy_loads():
    pol = DeepPolicy.load()
    lam, t_p = pol.infer(np.zeros(6), 0.02, 1.0)
    assert 0 <= lam <= 1 and 0.02 <= t_p <= 1.0


def test_bundled_buffer_holdout():
    # 90/10 split of the shipped supervision; the nets must beat the mean predictor
    A = ReplayBuffer.load(DATA_DIR / "buffer.csv").array
    assert len(A) == 3000
    idx = np.random.default_rng(0).permutation(len(A))
    n_val = len(A) // 10
    tr = ReplayBuffer(len(A) - n_val)
    for r in A[idx[n_val:]]:
        tr.add(r[:6], r[6], r[7], r[8])
    pol, _ = train(tr)
    val = A[idx[:n_val]]
    lam, _ = pol.raw(val[:, :6])
    assert np.mean((lam - val[:, 6]) ** 2) < val[:, 6].var()
    assert np.mean(np.abs(np.clip(lam[:100], 0, 1) - val[:100, 6])) < 0.15


def cheap_config():
    return ScenarioConfig.from_dict({
        "predictor_warmup": 0.4, "start_x_range": [-1.0, 0.0],
        "search": {"n_samples": 2, "max_iters": 1, "candidate_times": [0.3, 0.6, 0.9]},
    })


def test_collection_is_reproducible():
    a = collect(12, cheap_config(), seed=3)
    b = collect(12, cheap_config(), seed=3)
    assert len(a) == 12 and np.array_equal(a.array, b.array)
    assert np.all((a.lambdas >= 0) & (a.lambdas <= 1))
    assert np.all((a.traversal_times >= 0) & (a.traversal_times <= 1))
    with pytest.raises(ValueError):
        collect(0, cheap_config(), seed=0)
