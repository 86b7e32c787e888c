import csv
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hympc.deep_policy import DeepPolicy, Standardizer
from hympc.dynamics import DroneState, GateObservation
from hympc.harness import cli
from hympc.harness.config import ConfigError, ScenarioConfig
from hympc.harness.episode import (
    DeepController, EpisodeMetrics, GateMetrics, manual_lambda, run_episode, traversal_success,
)
from hympc.harness.suites import aggregate, episode_seeds, run_suite
from hympc.nnet import Mlp

# a frozen gate 3 m ahead with a small search budget keeps episodes to seconds
CHEAP = {
    "drone_start": [-1.0, 0.0, 1.5, 0.0, 0.0, 0.0],
    "gate": {"theta_range": [0.0, 0.0], "theta_dot_range": [0.0, 0.0]},
    "search": {"n_samples": 3, "max_iters": 2, "candidate_times": [0.3, 0.6, 0.9]},
    "solver": {"max_iters": 5, "rtol": 1e-3},
    "predictor": {"steps_per_tick": 1},
    "predictor_warmup": 0.5,
    "timeout": 4.0,
}


@pytest.fixture
def cheap():
    return ScenarioConfig.from_dict(CHEAP)


def test_config_round_trip(tmp_path, cheap):
    path = tmp_path / "cfg.json"
    cheap.save(path)
    back = ScenarioConfig.load(path)
    assert back.to_dict() == cheap.to_dict()
    assert back.gate.theta_range == (0.0, 0.0)
    assert ScenarioConfig.from_dict({}).to_dict() == ScenarioConfig().to_dict()


def test_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        ScenarioConfig.from_dict({"bogus": 1})
    with pytest.raises(ConfigError):
        ScenarioConfig.from_dict({"controller": "pid"})
    with pytest.raises(ConfigError):
        ScenarioConfig.load(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        ScenarioConfig.load(bad)


def _gate(x):
    return GateObservation(np.array([x, 0.0, 1.5]), np.zeros(3))


def _drone(x):
    return DroneState(p=np.array([x, 0.0, 1.5]))


def test_manual_lambda_examples():
    d0, g0 = _drone(-5.0), _gate(2.0)
    assert manual_lambda(d0, g0, d0, g0) == 1.0
    assert manual_lambda(_drone(2.0), g0, d0, g0) == 0.0
    assert manual_lambda(_drone(0.25), g0, d0, g0) == pytest.approx(0.25)
    assert manual_lambda(_drone(-9.0), g0, d0, g0) == 1.0
    assert manual_lambda(_drone(0.0), g0, _drone(2.0), g0) == 0.0


def test_success_threshold_is_strict():
    assert traversal_success(0.399, 0.4)
    assert not traversal_success(0.4, 0.4)


def test_timeout_reports_no_crossing(cheap):
    m = run_episode(cheap.replace(controller="standard-mpc", timeout=0.2), 0)
    assert m.reason == "timeout" and not m.success
    assert m.traversal_error is None and m.traversal_time is None
    assert m.ticks == 10


def test_frozen_gate_gaussian_crosses(cheap, tmp_path):
    m = run_episode(cheap, 3, tmp_path / "ep.csv")
    assert m.reason == "crossed" and m.success
    assert m.traversal_error < 0.1
    rows = list(csv.DictReader(open(tmp_path / "ep.csv")))
    assert len(rows) == m.ticks
    lams = np.array([float(r["lambda"]) for r in rows])
    assert np.all((lams >= 0) & (lams <= 1))


def test_episode_is_deterministic(cheap):
    cfg = cheap.replace(gate={**cheap.to_dict()["gate"], "theta_range": [-0.5, 0.5]})
    a = run_episode(cfg, 11)
    b = run_episode(cfg, 11)
    assert a.to_dict() == b.to_dict()


def test_plant_thrust_is_capped(cheap, tmp_path):
    limits = {**cheap.to_dict()["limits"], "sim_c_max": 12.0}
    m = run_episode(cheap.replace(controller="manual-mpc", limits=limits), 0, tmp_path / "ep.csv")
    c = np.array([float(r["c"]) for r in csv.DictReader(open(tmp_path / "ep.csv"))])
    assert m.ticks > 0 and c.max() <= 12.0


def _tiny_policy(lam, t_p):
    nets = []
    for value in (lam, t_p):
        net = Mlp([6, 4, 1], seed=0)
        net.weights[-1][:] = 0.0
        net.biases[-1][:] = value
        nets.append(net)
    return DeepPolicy(*nets, Standardizer(np.zeros(6), np.ones(6)))


def test_deep_controller_one_forward_per_tick(cheap):
    policy = _tiny_policy(0.2, 0.5)
    ctrl = DeepController(cheap.replace(controller="hympc-deep"), np.random.default_rng(0),
                          policy=policy)
    m = run_episode(cheap.replace(controller="hympc-deep"), 0, controller=ctrl)
    assert m.ticks > 0
    assert policy.forward_calls == {"lambda": m.ticks, "t_p": m.ticks}


def _metrics(seed, err, t):
    return EpisodeMetrics(seed, "x", err is not None and err < 0.4, err, t,
                          "crossed" if err is not None else "timeout",
                          [GateMetrics(err is not None and err < 0.4, err, t)])


@given(st.lists(st.one_of(st.none(), st.floats(0, 2)), min_size=1, max_size=10),
       st.randoms(use_true_random=False))
def test_aggregate_is_permutation_invariant(errs, rnd):
    results = [_metrics(i, e, None if e is None else 1.0 + e) for i, e in enumerate(errs)]
    shuffled = results[:]
    rnd.shuffle(shuffled)
    a, b = aggregate(results), aggregate(shuffled)
    assert a["success_rate"] == b["success_rate"] and a["crossed"] == b["crossed"]
    if a["mean_error"] is None:
        assert b["mean_error"] is None
    else:
        assert a["mean_error"] == pytest.approx(b["mean_error"], abs=1e-12)


def test_episode_seeds():
    assert episode_seeds(5, 4) == episode_seeds(5, 4)
    assert episode_seeds(5, 4) != episode_seeds(6, 4)
    assert len(set(episode_seeds(5, 20))) == 20


def test_run_suite_writes_report(cheap, tmp_path):
    cfg = cheap.replace(controller="manual-mpc")
    report = run_suite("multigate", cfg, seeds=[1], out_dir=tmp_path)
    saved = json.loads((tmp_path / "multigate.json").read_text())
    assert saved["groups"][0]["gate_count"] == 3 and saved["seeds"] == [1]
    assert len(report["groups"][0]["episodes_detail"][0]["gates"]) == 3
    assert list((tmp_path / "episodes").glob("*.csv"))
    with pytest.raises(ValueError):
        run_suite("bogus", cfg, seeds=[1])


def test_cli_exit_codes(cheap, tmp_path, capsys):
    path = tmp_path / "cfg.json"
    cheap.replace(controller="manual-mpc").save(path)
    out = tmp_path / "run"
    assert cli.main(["simulate", "--config", str(path), "--seed", "2", "--out", str(out)]) == 0
    assert json.loads((out / "episode_2.json").read_text())["controller"] == "manual-mpc"
    assert (out / "episode_2.csv").exists()
    bad = tmp_path / "bad.json"
    bad.write_text('{"horizon": "long"}')
    assert cli.main(["simulate", "--config", str(bad), "--out", str(out)]) == 2
    assert cli.main(["simulate", "--config", str(tmp_path / "nope.json"), "--out", str(out)]) == 2
    assert "error" in capsys.readouterr().err
