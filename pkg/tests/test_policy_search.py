import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hympc.dynamics import DroneState, GateObservation
from hympc.mpc.solver import MpcConfig, SolverConfig
from hympc.policy_search import (
    GaussianPolicy, RewardConfig, SearchConfig, Verdict, classify, em_update, reward, search,
    write_trace,
)

ALPHA = np.array([1.0, 0.0, 0.0])


def line(xs, y=0.0):
    return np.array([[x, y, 1.0] for x in xs])


def gate_track(n, y=0.0):
    return np.tile([2.0, y, 1.0, 0.0, 0.0, 0.0], (n, 1))


def test_not_reached():
    assert classify(line([0.0, 0.5, 1.0]), gate_track(3), ALPHA, 0.3).verdict is Verdict.NOT_REACHED


def test_success_at_gate_center():
    v = classify(line([1.0, 2.0, 3.0]), gate_track(3), ALPHA, 0.3)
    assert v.verdict is Verdict.SUCCESS and v.index == 1 and v.error == 0.0


def test_failure_and_strict_boundary():
    v = classify(line([1.5, 2.5], y=0.0), gate_track(2, y=0.35), ALPHA, 0.3)
    assert v.verdict is Verdict.FAILURE
    # drone lands exactly 0.3 m from the center at the crossing step
    states = np.array([[1.8, 0.0, 1.0], [2.0, 0.3, 1.0]])
    v = classify(states, gate_track(2), ALPHA, 0.3)
    assert v.error == pytest.approx(0.3) and v.verdict is Verdict.FAILURE
    v = classify(states, gate_track(2), ALPHA, 0.3 + 1e-9)
    assert v.verdict is Verdict.SUCCESS


def test_crossing_uses_earlier_gate_position():
    # gate moves past the drone; only the earlier gate position defines the plane
    states = line([1.0, 1.5])
    gates = np.array([[2.0, 0, 1, 0, 0, 0], [1.2, 0, 1, 0, 0, 0]])
    assert classify(states, gates, ALPHA, 0.3).verdict is Verdict.NOT_REACHED


def test_classify_misaligned():
    with pytest.raises(ValueError):
        classify(line([0, 1]), gate_track(3), ALPHA, 0.3)


@given(st.floats(1e-3, 1e3))
def test_classify_alpha_scale_invariant(scale):
    states = line([1.0, 1.9, 2.1, 3.0], y=0.1)
    a = classify(states, gate_track(4), ALPHA, 0.3)
    b = classify(states, gate_track(4), scale * ALPHA, 0.3)
    assert (a.verdict, a.index, a.error) == (b.verdict, b.index, b.error)


def test_reward_values():
    cfg = RewardConfig()
    track = gate_track(4)
    same = track[:, :3]
    ok = classify(line([1.0, 2.0, 3.0, 4.0]), track, ALPHA, 0.3)
    assert ok.crossed
    from hympc.policy_search import TrajectoryVerdict
    r = reward(same, track, TrajectoryVerdict(Verdict.SUCCESS, 1, 0.0), 1.0, cfg, 1.0, 0.02)
    assert r == pytest.approx(-1.0)
    r = reward(same, track, TrajectoryVerdict(Verdict.FAILURE, 1, 0.5), 1.0, cfg, 1.0, 0.02)
    assert r == pytest.approx(-99_999 - 1.0)
    off = same + np.array([0.0, 0.1, 0.0])
    r = reward(off[:3], track[:3], TrajectoryVerdict(Verdict.NOT_REACHED), 0.5, cfg, 0.04, 0.02)
    assert r == pytest.approx(-0.01 * (np.exp(-10 * 0.0004) + 1.0), rel=1e-12)


def test_reward_prefers_earlier_traversal():
    cfg = RewardConfig()
    from hympc.policy_search import TrajectoryVerdict
    track = gate_track(10)
    states = track[:, :3] + 0.05
    v = TrajectoryVerdict(Verdict.SUCCESS, 3, 0.05)
    # constant offsets make the tracking sum independent of t_p up to edge effects;
    # compare with matched sums by using the same track and zero offset
    zero = track[:, :3]
    assert reward(zero, track, v, 0.2, cfg, 0.2, 0.02) > reward(zero, track, v, 0.3, cfg, 0.2, 0.02)
    assert reward(states, track, v, 0.1, cfg, 0.2, 0.02) < 0


def test_em_examples():
    mu, sigma = em_update([0.2, 0.8, 0.5], [-1.0, -1.0, -1.0], 3.0)
    assert mu == pytest.approx(0.5)
    mu, sigma = em_update([0.5] * 4, [-3.0, -1.0, -2.0, 0.0], 3.0, min_sigma=1e-3)
    assert (mu, sigma) == (0.5, 1e-3)
    w = np.array([1.0, 3.0])
    mu, sigma = em_update([0.2, 0.8], np.log(w), 1.0, variance="unbiased")
    assert mu == pytest.approx(0.65) and sigma == pytest.approx(np.sqrt(0.18))
    mu, sigma = em_update([0.2, 0.8], np.log(w), 1.0)
    assert sigma == pytest.approx(np.sqrt(0.27 / 4))
    with pytest.raises(ValueError):
        em_update([0.1], [0.0], 1.0)
    with pytest.raises(ValueError):
        em_update([0.1, 0.2], [0.0, 0.0], 1.0, variance="bogus")


def test_em_degenerate_weights():
    mu, sigma = em_update([0.1, 0.9], [0.0, -1e6], 3.0, min_sigma=0.01)
    assert mu == pytest.approx(0.1) and sigma == 0.01


samples = st.lists(st.tuples(st.floats(0, 1), st.floats(-5, 0)), min_size=2, max_size=8)


@given(samples, st.floats(-1e3, 1e3))
def test_em_shift_invariance_and_hull(pairs, c):
    lams, rs = map(np.array, zip(*pairs))
    a = em_update(lams, rs, 3.0)
    b = em_update(lams, rs + c, 3.0)
    assert a[0] == pytest.approx(b[0], abs=1e-12) and a[1] == pytest.approx(b[1], abs=1e-12)
    assert lams.min() - 1e-12 <= a[0] <= lams.max() + 1e-12


def test_policy_sampling_is_clamped(rng):
    s = GaussianPolicy(0.9, 1.0).sample(rng, 1000)
    assert s.min() >= 0 and s.max() <= 1
    with pytest.raises(ValueError):
        GaussianPolicy(0.5, 0.0)
    with pytest.raises(ValueError):
        SearchConfig(n_samples=1)


def static_problem():
    x0 = DroneState(p=np.array([0.5, 0.0, 1.2]))
    gate = GateObservation(np.array([2.0, 0.0, 1.0]), np.zeros(3))
    mpc = MpcConfig(solver=SolverConfig(max_iters=10, rtol=1e-4))
    mpc.weights.time_scale = 0.2
    track = np.tile(gate.to_vector(), (mpc.horizon + 1, 1))
    return x0, gate, track, DroneState(p=np.array([4.0, 0.0, 1.2])), mpc


def test_static_gate_search(rng, tmp_path):
    # closed-loop success on a frozen gate is covered in the harness tests
    x0, gate, track, target, mpc = static_problem()
    cfg = SearchConfig()
    res = search(x0, gate, track, target, cfg, mpc, RewardConfig(),
                 GaussianPolicy(0.5, 0.3), rng)
    assert 1 <= len(res.trace) <= cfg.max_iters
    assert 0.0 <= res.lam <= 1.0 and res.policy.sigma >= 1e-3
    assert res.n_solves == len(cfg.candidate_times) * (cfg.n_samples * len(res.trace) + 1)
    assert res.t_p in SearchConfig().candidate_times
    write_trace(res.trace, tmp_path / "trace.csv")
    assert len(open(tmp_path / "trace.csv").read().splitlines()) == len(res.trace) + 1


def test_single_candidate_time_is_returned(rng):
    x0, gate, track, target, mpc = static_problem()
    res = search(x0, gate, lambda ts: np.tile(gate.to_vector(), (len(ts), 1)), target,
                 SearchConfig(candidate_times=(0.4,), max_iters=2), mpc, RewardConfig(),
                 GaussianPolicy(), rng)
    assert res.t_p == 0.4


@pytest.mark.xfail(strict=True, reason=(
    "measured 51-54% on frozen and swinging gates: once mu settles, the best of five "
    "fresh samples rises or falls between iterations about equally often"))
def test_best_reward_mostly_non_decreasing():
    x0, gate, track, target, mpc = static_problem()
    ups = total = 0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        start = DroneState(p=np.array([rng.uniform(-3, 1), rng.uniform(-1, 1), 1.2]))
        res = search(start, gate, track, target, SearchConfig(), mpc, RewardConfig(),
                     GaussianPolicy(0.5, 0.3), rng)
        best = [t["best_reward"] for t in res.trace]
        ups += sum(b >= a - 1e-9 for a, b in zip(best, best[1:]))
        total += len(best) - 1
    assert total > 0 and ups / total >= 0.8
