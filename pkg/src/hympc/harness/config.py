"""Scenario configuration: one JSON document with named keys for every default."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from ..dynamics import DroneLimits, GateGeometry
from ..mpc.solver import CostWeights, MpcConfig, SolverConfig
from ..policy_search import RewardConfig, SearchConfig
from ..predictor import PredictorConfig

CONTROLLERS = ("hympc-gaussian", "hympc-deep", "oracle-dynamics", "standard-mpc", "manual-mpc")


class ConfigError(ValueError):
    pass


@dataclass
class GateScenario:
    pivot: tuple[float, float, float] = (2.0, 0.0, 3.0)
    arm_length: float = 2.0
    height: float = 0.8
    width: float = 1.0
    alpha: tuple[float, float, float] = (1.0, 0.0, 0.0)
    theta_range: tuple[float, float] = (-np.pi / 4, np.pi / 4)
    theta_dot_range: tuple[float, float] = (-np.pi / 20, np.pi / 20)
    damping: float = 0.0
    count: int = 1
    spacing: float = 4.0  # along alpha, between consecutive gates

    def geometry(self, index: int = 0) -> GateGeometry:
        alpha = np.asarray(self.alpha, dtype=float)
        alpha = alpha / np.linalg.norm(alpha)
        pivot = np.asarray(self.pivot, dtype=float) + index * self.spacing * alpha
        return GateGeometry(pivot=pivot, arm_length=self.arm_length, height=self.height,
                            width=self.width, alpha=alpha)


@dataclass
class ScenarioConfig:
    drone_start: tuple[float, ...] = (-5.0, 0.0, 1.5, 0.0, 0.0, 0.0)
    start_x_range: tuple[float, float] | None = None  # randomizes the start x when set
    target_offset: float = 2.0  # target sits this far behind the (last) gate along alpha
    gate: GateScenario = field(default_factory=GateScenario)
    limits: DroneLimits = field(default_factory=DroneLimits)
    # a narrower temporal spread than the module default keeps the drone from
    # parking in the gate plane over a 1 s horizon
    weights: CostWeights = field(default_factory=lambda: CostWeights(time_scale=0.2))
    solver: SolverConfig = field(default_factory=lambda: SolverConfig(max_iters=10, rtol=1e-4))
    horizon: int = 50
    dt: float = 0.02
    search: SearchConfig = field(default_factory=SearchConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    predictor: PredictorConfig = field(default_factory=PredictorConfig)
    predictor_warmup: float = 5.0  # seconds of gate observation before launch
    standard_lambda: float = 0.5
    timeout: float = 10.0
    bound: float = 20.0
    success_radius: float = 0.4
    num_trials: int = 20
    seed: int = 0
    controller: str = "hympc-gaussian"
    policy_dir: str | None = None  # None selects the bundled deep policies
    workers: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.controller not in CONTROLLERS:
            raise ConfigError(f"unknown controller {self.controller!r}; choose from {CONTROLLERS}")
        if len(self.drone_start) != 6:
            raise ConfigError("drone_start must be [x, y, z, vx, vy, vz]")
        if self.timeout <= 0 or self.dt <= 0 or self.horizon < 2:
            raise ConfigError("timeout, dt must be positive and horizon at least 2")
        if self.gate.count < 1:
            raise ConfigError("need at least one gate")
        if self.num_trials < 1 or self.workers < 1:
            raise ConfigError("num_trials and workers must be positive")
        if not 0.0 <= self.standard_lambda <= 1.0:
            raise ConfigError("standard_lambda must lie in [0, 1]")
        if max(self.search.candidate_times) > self.horizon * self.dt + 1e-9:
            raise ConfigError("candidate times exceed the MPC horizon")

    def mpc_config(self, temporal_spread: bool = True) -> MpcConfig:
        return MpcConfig(horizon=self.horizon, dt=self.dt, limits=self.limits,
                         weights=self.weights, solver=self.solver,
                         temporal_spread=temporal_spread)

    def to_dict(self) -> dict:
        return _plain(asdict(self))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        try:
            return _build(cls, data)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path: str | Path) -> "ScenarioConfig":
        try:
            data = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(data)

    def replace(self, **changes) -> "ScenarioConfig":
        data = self.to_dict()
        data.update(changes)
        return ScenarioConfig.from_dict(data)


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _build(cls, data):
    """Construct a (nested) dataclass from plain data, rejecting unknown keys."""
    if isinstance(data, cls):
        return data
    if not isinstance(data, dict):
        raise ConfigError(f"{cls.__name__} expects an object")
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(f"unknown keys for {cls.__name__}: {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        sub = _nested_type(cls, name)
        if sub is not None and isinstance(value, dict):
            value = _build(sub, value)
        elif isinstance(value, list):
            value = tuple(value)
        kwargs[name] = value
    return cls(**kwargs)


_NESTED = {
    "gate": GateScenario, "limits": DroneLimits, "weights": CostWeights,
    "solver": SolverConfig, "search": SearchConfig, "reward": RewardConfig,
    "predictor": PredictorConfig,
}


def _nested_type(cls, name):
    if cls is ScenarioConfig:
        return _NESTED.get(name)
    return None
