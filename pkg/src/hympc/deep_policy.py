"""Distilled policies: regress the searched (lambda, t_p) onto the relative gate state.

Supervision is gathered by flying randomized episodes with the Gaussian
search in the loop, then two independent MLPs are fit by minibatch SGD.
At flight time each net needs a single forward pass per tick.
"""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .nnet import Mlp, TrainingError

log = logging.getLogger(__name__)

OBS_DIM = 6
HIDDEN = (256, 256)
BUFFER_COLUMNS = [f"o{i}" for i in range(1, OBS_DIM + 1)] + ["lambda", "t_p", "t"]
DATA_DIR = Path(__file__).resolve().parent / "data"


def observation(gate_vec, drone_vec) -> np.ndarray:
    """Gate center/velocity minus drone position/velocity."""
    o = np.asarray(gate_vec, dtype=float)[:OBS_DIM] - np.asarray(drone_vec, dtype=float)[:OBS_DIM]
    if not np.all(np.isfinite(o)):
        raise ValueError("observation must be finite")
    return o


class ReplayBuffer:
    def __init__(self, capacity: int):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._rows: list[np.ndarray] = []

    def __len__(self) -> int:
        return len(self._rows)

    @property
    def full(self) -> bool:
        return len(self._rows) >= self.capacity

    def add(self, o, lam: float, t_p: float, t: float) -> bool:
        """Store a record; returns False once the buffer is full."""
        if self.full:
            return False
        o = np.asarray(o, dtype=float)
        if o.shape != (OBS_DIM,) or not np.all(np.isfinite(o)):
            raise ValueError("observation must be a finite 6-vector")
        if not 0.0 <= lam <= 1.0:
            raise ValueError("lambda must lie in [0, 1]")
        if t_p < 0.0:
            raise ValueError("t_p must be nonnegative")
        self._rows.append(np.concatenate([o, [lam, t_p, t]]))
        return True

    def extend(self, other: "ReplayBuffer") -> None:
        for r in other.array:
            if not self.add(r[:OBS_DIM], r[6], r[7], r[8]):
                break

    @property
    def array(self) -> np.ndarray:
        return np.array(self._rows).reshape(-1, OBS_DIM + 3)

    @property
    def observations(self) -> np.ndarray:
        return self.array[:, :OBS_DIM]

    @property
    def lambdas(self) -> np.ndarray:
        return self.array[:, OBS_DIM]

    @property
    def traversal_times(self) -> np.ndarray:
        return self.array[:, OBS_DIM + 1]

    def save(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(BUFFER_COLUMNS)
            for r in self._rows:
                out.writerow([repr(float(v)) for v in r])

    @classmethod
    def load(cls, path: str | Path, capacity: int | None = None) -> "ReplayBuffer":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header != BUFFER_COLUMNS:
                raise ValueError(f"unexpected buffer columns {header}")
            rows = [np.array([float(v) for v in r]) for r in reader if r]
        buf = cls(capacity or max(len(rows), 1))
        for r in rows:
            buf.add(r[:OBS_DIM], r[6], r[7], r[8])
        return buf


def collect(num_samples: int, cfg, seed: int, progress=None) -> ReplayBuffer:
    """Fly randomized Gaussian-search episodes until ``num_samples`` records are stored.

    ``cfg`` is a harness ScenarioConfig; its controller is forced to the
    Gaussian search.  Episodes that end in a solver failure or divergence are
    discarded.
    """
    from .harness.episode import run_episode

    if num_samples <= 0:
        raise ValueError("num_samples must be positive")
    cfg = cfg.replace(controller="hympc-gaussian")
    buf = ReplayBuffer(num_samples)
    seeds = np.random.SeedSequence(seed)
    episode = 0
    while not buf.full:
        ep_seed = int(seeds.spawn(1)[0].generate_state(1)[0])
        local = ReplayBuffer(num_samples)
        m = run_episode(cfg, ep_seed, recorder=lambda o, lam, tp, t: local.add(o, lam, tp, t))
        episode += 1
        if m.reason.startswith(("solver failure", "diverged")):
            log.warning("episode %d (seed %d) discarded: %s", episode, ep_seed, m.reason)
            continue
        buf.extend(local)
        if progress is not None:
            progress(episode, len(buf), m)
    return buf


@dataclass
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, x: np.ndarray) -> "Standardizer":
        std = x.std(axis=0)
        return cls(x.mean(axis=0), np.where(std > 1e-8, std, 1.0))

    def __call__(self, x):
        return (np.asarray(x, dtype=float) - self.mean) / self.std


@dataclass
class TrainReport:
    lambda_loss: float
    t_p_loss: float
    epoch_losses: list[tuple[float, float]]


class DeepPolicy:
    """The pair of regressors plus the frozen input standardization."""

    def __init__(self, lam_net: Mlp, tp_net: Mlp, norm: Standardizer):
        for net in (lam_net, tp_net):
            if net.n_in != OBS_DIM or net.n_out != 1:
                raise ValueError("policy nets must map 6 inputs to 1 output")
        self.lam_net = lam_net
        self.tp_net = tp_net
        self.norm = norm
        self.forward_calls = {"lambda": 0, "t_p": 0}

    def raw(self, o: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        z = self.norm(o)
        return self.lam_net(z)[..., 0], self.tp_net(z)[..., 0]

    def infer(self, o, dt: float, t_horizon: float) -> tuple[float, float]:
        """``(lambda, t_p)`` with lambda clamped to [0, 1] and t_p to [dt, t_horizon]."""
        z = self.norm(np.asarray(o, dtype=float).reshape(OBS_DIM))
        lam = float(self.lam_net(z)[0])
        self.forward_calls["lambda"] += 1
        t_p = float(self.tp_net(z)[0])
        self.forward_calls["t_p"] += 1
        return float(np.clip(lam, 0.0, 1.0)), float(np.clip(t_p, dt, t_horizon))

    def save(self, directory: str | Path) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        self.lam_net.save(d / "mlp_lambda.json")
        self.tp_net.save(d / "mlp_tp.json")
        (d / "policy_norm.json").write_text(json.dumps(
            {"mean": self.norm.mean.tolist(), "std": self.norm.std.tolist()}))

    @classmethod
    def load(cls, directory: str | Path | None = None) -> "DeepPolicy":
        d = Path(directory) if directory is not None else DATA_DIR
        try:
            stats = json.loads((d / "policy_norm.json").read_text())
            return cls(Mlp.load(d / "mlp_lambda.json"), Mlp.load(d / "mlp_tp.json"),
                       Standardizer(np.array(stats["mean"]), np.array(stats["std"])))
        except FileNotFoundError as exc:
            raise FileNotFoundError(f"no trained policies in {d}") from exc


def train(buf: ReplayBuffer, epochs: int = 200, lr: float = 1e-2, batch_size: int = 64,
          momentum: float = 0.9, seed: int = 0) -> tuple[DeepPolicy, TrainReport]:
    """Fit the lambda and t_p regressors by minibatch SGD on squared error."""
    if len(buf) == 0:
        raise ValueError("buffer is empty")
    X = buf.observations
    norm = Standardizer.fit(X)
    Z = norm(X)
    targets = {"lambda": buf.lambdas[:, None], "t_p": buf.traversal_times[:, None]}
    rng = np.random.default_rng(seed)
    nets = {k: Mlp([OBS_DIM, *HIDDEN, 1], seed=seed + i, momentum=momentum)
            for i, k in enumerate(targets)}
    # start from the label-mean predictor: zero output weights, bias at the mean
    for k, net in nets.items():
        net.weights[-1][:] = 0.0
        net.biases[-1][:] = targets[k].mean()
    history = []
    n = len(Z)
    for _ in range(epochs):
        order = rng.permutation(n)
        sums = {k: 0.0 for k in nets}
        for s in range(0, n, batch_size):
            idx = order[s:s + batch_size]
            for k, net in nets.items():
                loss = net.train_step(Z[idx], targets[k][idx], lr)
                sums[k] += loss * len(idx)
        history.append((sums["lambda"] / n, sums["t_p"] / n))
    final = {k: net.loss_and_grads(Z, targets[k])[0] for k, net in nets.items()}
    if not all(np.isfinite(v) for v in final.values()):
        raise TrainingError("non-finite training loss")
    policy = DeepPolicy(nets["lambda"], nets["t_p"], norm)
    return policy, TrainReport(final["lambda"], final["t_p"], history)
