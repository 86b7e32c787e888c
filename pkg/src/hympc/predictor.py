"""Online-learned model of the gate's motion.

The network sees two consecutive observations and a query offset ``dt`` and
outputs an average rate, so a prediction is ``cur + dt * net(prev, cur, dt)``
and a zero offset reproduces the latest observation exactly.
"""
from __future__ import annotations

import json
from collections import deque
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .dynamics import GateObservation
from .nnet import Mlp

OBS_DIM = 6


class GateHistory:
    """Fixed-capacity buffer of time-stamped gate observations."""

    def __init__(self, capacity: int = 300):
        if capacity < 2:
            raise ValueError("capacity must be at least 2")
        self.capacity = capacity
        self._times: deque[float] = deque(maxlen=capacity)
        self._obs: deque[np.ndarray] = deque(maxlen=capacity)

    def append(self, t: float, obs: GateObservation | np.ndarray) -> None:
        if self._times and t <= self._times[-1]:
            raise ValueError("timestamps must be strictly increasing")
        vec = obs.to_vector() if isinstance(obs, GateObservation) else np.asarray(obs, float)
        self._times.append(float(t))
        self._obs.append(vec.copy())

    def __len__(self) -> int:
        return len(self._times)

    @property
    def times(self) -> np.ndarray:
        return np.array(self._times)

    @property
    def observations(self) -> np.ndarray:
        return np.array(self._obs).reshape(-1, OBS_DIM)

    def latest(self, n: int = 2) -> np.ndarray:
        return self.observations[-n:]


@dataclass
class PredictorConfig:
    hidden: tuple[int, ...] = (64, 64)
    lr: float = 2e-2
    momentum: float = 0.9
    steps_per_tick: int = 16
    max_offset_steps: int = 50
    batch_size: int = 64
    seed: int = 0


class GatePredictor:
    def __init__(self, cfg: PredictorConfig | None = None, net: Mlp | None = None):
        self.cfg = cfg or PredictorConfig()
        if net is None:
            net = Mlp([2 * OBS_DIM + 1, *self.cfg.hidden, OBS_DIM],
                      seed=self.cfg.seed, momentum=self.cfg.momentum)
        if net.n_in != 2 * OBS_DIM + 1 or net.n_out != OBS_DIM:
            raise ValueError("predictor network must map 13 inputs to 6 outputs")
        self.net = net
        self._rng = np.random.default_rng(self.cfg.seed)
        self.forward_calls = 0
        # affine feature/output scaling, anchored on the first observation seen
        self.anchor: np.ndarray | None = None
        self.in_scale = np.array([1.0] * 3 + [2.0] * 3)
        self.out_scale = np.array([2.0] * 3 + [5.0] * 3)

    def _norm(self, obs: np.ndarray) -> np.ndarray:
        anchor = self.anchor if self.anchor is not None else np.zeros(OBS_DIM)
        return (obs - anchor) / self.in_scale

    def features(self, prev: np.ndarray, cur: np.ndarray, dt) -> np.ndarray:
        prev = self._norm(np.atleast_2d(prev))
        cur = self._norm(np.atleast_2d(cur))
        dt = np.asarray(dt, dtype=float).reshape(-1, 1)
        n = max(len(cur), len(dt))
        return np.hstack([np.broadcast_to(prev, (n, OBS_DIM)),
                          np.broadcast_to(cur, (n, OBS_DIM)),
                          np.broadcast_to(dt, (n, 1))])

    def predict_many(self, prev, cur, dts) -> np.ndarray:
        """Predicted observation vectors at each offset in ``dts`` (shape ``(n, 6)``)."""
        prev = prev.to_vector() if isinstance(prev, GateObservation) else np.asarray(prev, float)
        cur = cur.to_vector() if isinstance(cur, GateObservation) else np.asarray(cur, float)
        dts = np.atleast_1d(np.asarray(dts, dtype=float))
        if np.any(dts < 0):
            raise ValueError("prediction offset must be nonnegative")
        rate = self.net.forward(self.features(prev, cur, dts)) * self.out_scale
        self.forward_calls += 1
        return cur[None, :] + dts[:, None] * rate

    def predict(self, prev, cur, dt: float) -> GateObservation:
        return GateObservation.from_vector(self.predict_many(prev, cur, [dt])[0])

    def training_batch(self, hist: GateHistory):
        """Random (prev, cur, dt) -> rate samples at offsets 1..k steps."""
        obs = hist.observations
        times = hist.times
        n = len(obs)
        kmax = min(self.cfg.max_offset_steps, n - 2)
        if kmax < 1:
            return None
        k = self._rng.integers(1, kmax + 1, size=self.cfg.batch_size)
        # anchor i needs i-1 >= 0 and i+k <= n-1
        i = 1 + (self._rng.random(self.cfg.batch_size) * (n - 1 - k)).astype(int)
        dt = times[i + k] - times[i]
        X = self.features(obs[i - 1], obs[i], dt)
        Y = (obs[i + k] - obs[i]) / dt[:, None] / self.out_scale
        return X, Y

    def observe_and_train(self, hist: GateHistory) -> float | None:
        """Train on the history; returns the mean loss, or None when history is too short."""
        if len(hist) < 3:
            return None
        if self.anchor is None:
            self.anchor = hist.observations[0].copy()
            self.anchor[3:] = 0.0
        losses = []
        for _ in range(self.cfg.steps_per_tick):
            batch = self.training_batch(hist)
            if batch is None:
                return None
            losses.append(self.net.train_step(batch[0], batch[1], self.cfg.lr))
        return float(np.mean(losses))

    def save(self, path: str | Path) -> None:
        data = {
            "config": asdict(self.cfg),
            "anchor": None if self.anchor is None else self.anchor.tolist(),
            "net": self.net.to_dict(),
        }
        Path(path).write_text(json.dumps(data))

    @classmethod
    def load(cls, path: str | Path) -> "GatePredictor":
        data = json.loads(Path(path).read_text())
        cfg = data["config"]
        cfg["hidden"] = tuple(cfg["hidden"])
        pr = cls(PredictorConfig(**cfg), net=Mlp.from_dict(data["net"]))
        pr.net.momentum = pr.cfg.momentum
        if data["anchor"] is not None:
            pr.anchor = np.array(data["anchor"])
        return pr
