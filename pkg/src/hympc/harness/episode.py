"""Closed-loop episodes: plant, swinging gates, predictor and a pluggable controller."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from ..core_math import IntegrationError
from ..deep_policy import DeepPolicy, observation
from ..dynamics import (
    DroneState, GateObservation, GateState, apply_plant_limits, drone_step_rk4,
    gate_observe, gate_step,
)
from ..mpc.solver import MpcConfig, MpcRequest, MpcSolution, SolverError, solve
from ..policy_search import CandidateSweep, GaussianPolicy, SearchFailure, search
from ..predictor import GateHistory, GatePredictor
from .config import ScenarioConfig

log = logging.getLogger(__name__)

LOG_COLUMNS = (
    ["t"] + [f"p{i}" for i in "xyz"] + [f"v{i}" for i in "xyz"]
    + ["qw", "qx", "qy", "qz", "c", "wx", "wy", "wz", "gate", "theta", "theta_dot",
       "lambda", "t_p", "pred_error"]
)


@dataclass
class GateMetrics:
    success: bool = False
    traversal_error: float | None = None
    traversal_time: float | None = None


@dataclass
class EpisodeMetrics:
    seed: int
    controller: str
    success: bool
    traversal_error: float | None
    traversal_time: float | None
    reason: str
    gates: list[GateMetrics] = field(default_factory=list)
    ticks: int = 0
    log_path: str | None = None

    def to_dict(self) -> dict:
        return {
            "seed": self.seed, "controller": self.controller, "success": self.success,
            "traversal_error": self.traversal_error, "traversal_time": self.traversal_time,
            "reason": self.reason, "ticks": self.ticks, "log_path": self.log_path,
            "gates": [vars(g) for g in self.gates],
        }


def manual_lambda(drone: DroneState, gate_now: GateObservation, drone0: DroneState,
                  gate0: GateObservation) -> float:
    """Current-to-initial drone-gate distance ratio, clamped to [0, 1]."""
    d0 = float(np.linalg.norm(drone0.p - gate0.center))
    if d0 <= 0.0:
        return 0.0
    return float(np.clip(np.linalg.norm(drone.p - gate_now.center) / d0, 0.0, 1.0))


def traversal_success(error: float, radius: float) -> bool:
    """Episode-level pass test; an error exactly at the radius fails."""
    return bool(error < radius)


@dataclass
class TickContext:
    t: float
    drone: DroneState
    gate_now: GateObservation
    forecast: np.ndarray       # (H+1, 6) predicted gate track on the horizon grid
    truth: np.ndarray          # (H+1, 6) ground-truth gate track (oracle only)
    x_target: DroneState
    alpha: np.ndarray
    drone0: DroneState
    gate0: GateObservation
    warm_start: np.ndarray | None


@dataclass
class Decision:
    lam: float
    t_p: float
    solution: MpcSolution


class Controller:
    kind = "base"

    def __init__(self, cfg: ScenarioConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.rng = rng
        self.mpc = cfg.mpc_config()

    def decide(self, ctx: TickContext) -> Decision:
        raise NotImplementedError

    def _sweep(self, ctx: TickContext, lam: float, track: np.ndarray,
               mpc: MpcConfig | None = None) -> Decision:
        sweep = CandidateSweep(ctx.drone, ctx.gate_now, track, ctx.x_target,
                               self.cfg.search.candidate_times, mpc or self.mpc,
                               self.cfg.reward, ctx.alpha, ctx.warm_start)
        _, t_p, sol = sweep(lam)
        if sol is None:
            raise SolverError("every candidate solve failed")
        return Decision(lam, t_p, sol)

    @staticmethod
    def _pred_at(track: np.ndarray, t_p: float, dt: float) -> GateObservation:
        return GateObservation.from_vector(track[int(round(t_p / dt))])


class GaussianController(Controller):
    kind = "hympc-gaussian"

    def decide(self, ctx):
        s = self.cfg.search
        res = search(ctx.drone, ctx.gate_now, ctx.forecast, ctx.x_target, s, self.mpc,
                     self.cfg.reward, GaussianPolicy(0.5, s.init_sigma), self.rng,
                     ctx.alpha, ctx.warm_start)
        return Decision(res.lam, res.t_p, res.solution)


class OracleController(Controller):
    """Ground-truth gate forecast, no follow term, reward-selected traversal time."""
    kind = "oracle-dynamics"

    def decide(self, ctx):
        return self._sweep(ctx, 0.0, ctx.truth)


class ManualController(Controller):
    """Distance-ratio lambda with reward-selected traversal time."""
    kind = "manual-mpc"

    def decide(self, ctx):
        lam = manual_lambda(ctx.drone, ctx.gate_now, ctx.drone0, ctx.gate0)
        return self._sweep(ctx, lam, ctx.forecast)


class StandardController(Controller):
    """Constant stage weights, fixed lambda, traversal anchored at the horizon end."""
    kind = "standard-mpc"

    def __init__(self, cfg, rng):
        super().__init__(cfg, rng)
        self.mpc = cfg.mpc_config(temporal_spread=False)

    def decide(self, ctx):
        t_p = self.mpc.t_horizon
        req = MpcRequest(ctx.drone, ctx.gate_now, self._pred_at(ctx.forecast, t_p, self.mpc.dt),
                         t_p, ctx.x_target, self.cfg.standard_lambda)
        return Decision(req.lam, t_p, solve(req, self.mpc, ctx.warm_start))


class DeepController(Controller):
    kind = "hympc-deep"

    def __init__(self, cfg, rng, policy=None):
        super().__init__(cfg, rng)
        self.policy = policy if policy is not None else DeepPolicy.load(cfg.policy_dir)

    def decide(self, ctx):
        o = observation(ctx.gate_now.to_vector(), ctx.drone.to_vector())
        lam, t_p = self.policy.infer(o, self.mpc.dt, self.mpc.t_horizon)
        # snap to the sampling grid so the gate prediction and pass anchor agree
        t_p = round(t_p / self.mpc.dt) * self.mpc.dt
        req = MpcRequest(ctx.drone, ctx.gate_now, self._pred_at(ctx.forecast, t_p, self.mpc.dt),
                         t_p, ctx.x_target, lam)
        return Decision(lam, t_p, solve(req, self.mpc, ctx.warm_start))


CONTROLLER_TYPES = {c.kind: c for c in (GaussianController, OracleController, ManualController,
                                        StandardController, DeepController)}


def make_controller(cfg: ScenarioConfig, rng: np.random.Generator, **kwargs) -> Controller:
    return CONTROLLER_TYPES[cfg.controller](cfg, rng, **kwargs)


def initial_drone(cfg: ScenarioConfig, rng: np.random.Generator) -> DroneState:
    s = np.asarray(cfg.drone_start, dtype=float)
    p = s[:3].copy()
    if cfg.start_x_range is not None:
        p[0] = rng.uniform(*cfg.start_x_range)
    return DroneState(p=p, v=s[3:6].copy())


def initial_gates(cfg: ScenarioConfig, rng: np.random.Generator) -> list[GateState]:
    g = cfg.gate
    return [GateState(rng.uniform(*g.theta_range), rng.uniform(*g.theta_dot_range))
            for _ in range(g.count)]


def target_for(cfg: ScenarioConfig, index: int) -> DroneState:
    geo = cfg.gate.geometry(index)
    z = float(cfg.drone_start[2])
    p = geo.pivot + cfg.target_offset * geo.alpha
    return DroneState(p=np.array([p[0], p[1], z]))


def truth_track(state: GateState, cfg: ScenarioConfig, index: int, steps: int) -> np.ndarray:
    geo = cfg.gate.geometry(index)
    out = np.empty((steps + 1, 6))
    s = state
    for k in range(steps + 1):
        out[k] = gate_observe(s, geo).to_vector()
        s = gate_step(s, cfg.dt, geo.arm_length, cfg.limits.g, cfg.gate.damping)
    return out


class _GateWorld:
    """Gate states plus one online predictor per gate."""

    def __init__(self, cfg: ScenarioConfig, states: list[GateState], predictors=None):
        self.cfg = cfg
        self.states = states
        self.geos = [cfg.gate.geometry(i) for i in range(len(states))]
        self.histories = [GateHistory() for _ in states]
        if predictors is None:
            predictors = [GatePredictor(cfg.predictor) for _ in states]
        self.predictors = predictors
        self.clock = 0.0

    def observe(self, train: bool = True) -> list[GateObservation]:
        obs = [gate_observe(s, g) for s, g in zip(self.states, self.geos)]
        for h, p, o in zip(self.histories, self.predictors, obs):
            h.append(self.clock, o)
            if train:
                p.observe_and_train(h)
        return obs

    def step(self) -> None:
        c = self.cfg
        self.states = [gate_step(s, c.dt, g.arm_length, c.limits.g, c.gate.damping)
                       for s, g in zip(self.states, self.geos)]
        self.clock += c.dt

    def forecast(self, i: int) -> np.ndarray:
        h = self.histories[i]
        grid = np.arange(self.cfg.horizon + 1) * self.cfg.dt
        last = h.latest(2)
        prev = last[0] if len(last) > 1 else last[-1]
        return self.predictors[i].predict_many(prev, last[-1], grid)


def run_episode(
    cfg: ScenarioConfig,
    seed: int,
    log_path: str | Path | None = None,
    controller: Controller | None = None,
    recorder: Callable[[np.ndarray, float, float, float], None] | None = None,
) -> EpisodeMetrics:
    """Simulate one flight.

    ``recorder(o, lam, t_p, t)`` is called every tick with the relative
    gate-minus-drone state and the controller's decision.
    """
    rng = np.random.default_rng(seed)
    init_rng, ctrl_rng = rng.spawn(2)
    drone = initial_drone(cfg, init_rng)
    world = _GateWorld(cfg, initial_gates(cfg, init_rng))
    ctrl = controller or make_controller(cfg, ctrl_rng)
    d, H = cfg.dt, cfg.horizon

    # watch the gates before launch so the predictors have data
    for _ in range(int(round(cfg.predictor_warmup / d))):
        world.observe()
        world.step()

    n_gates = len(world.states)
    gates = [GateMetrics() for _ in range(n_gates)]
    active = 0
    drone0 = drone
    gate0 = gate_observe(world.states[0], world.geos[0])
    warm = None
    rows = []
    reason = "timeout"
    prev_forecast = None
    t = 0.0
    k = 0
    n_ticks = int(round(cfg.timeout / d))
    while k < n_ticks:
        obs = world.observe()
        now = obs[active]
        pred_err = float("nan")
        if prev_forecast is not None:
            pred_err = float(np.linalg.norm(prev_forecast[1, :3] - now.center))
        forecast = world.forecast(active)
        prev_forecast = forecast
        needs_truth = ctrl.kind == "oracle-dynamics"
        truth = truth_track(world.states[active], cfg, active, H) if needs_truth else None
        ctx = TickContext(t, drone, now, forecast, truth, target_for(cfg, active),
                          world.geos[active].alpha, drone0, gate0, warm)
        try:
            dec = ctrl.decide(ctx)
        except (SolverError, SearchFailure, FloatingPointError) as exc:
            reason = f"solver failure: {exc}"
            log.warning("seed %d: %s", seed, reason)
            break
        if recorder is not None:
            recorder(observation(now.to_vector(), drone.to_vector()), dec.lam, dec.t_p, t)
        u = apply_plant_limits(dec.solution.first_control, cfg.limits)
        st = world.states[active]
        rows.append([t, *drone.to_vector(), *u, active, st.theta, st.theta_dot,
                     dec.lam, dec.t_p, pred_err])
        warm = dec.solution.shifted()
        try:
            x_next = drone_step_rk4(drone.to_vector(), u, d, cfg.limits.g)
        except IntegrationError as exc:
            reason = f"diverged: {exc}"
            break
        g_before = now.center
        world.step()
        k += 1
        t = k * d
        drone_next = DroneState.from_vector(x_next)
        alpha = world.geos[active].alpha
        before = (g_before - drone.p) @ alpha
        after = (g_before - drone_next.p) @ alpha
        drone = drone_next
        if np.any(np.abs(drone.p) > cfg.bound) or drone.p[2] < 0.0:
            reason = "out of bounds"
            break
        if before * after <= 0.0:
            g_after = gate_observe(world.states[active], world.geos[active]).center
            err = float(np.linalg.norm(drone.p - g_after))
            gates[active] = GateMetrics(traversal_success(err, cfg.success_radius), err, t)
            active += 1
            warm = None
            prev_forecast = None
            if active == n_gates:
                reason = "crossed"
                break
            gate0 = gate_observe(world.states[active], world.geos[active])
            drone0 = drone

    if log_path is not None:
        write_log(log_path, rows)
    last = gates[-1]
    crossed = [g for g in gates if g.traversal_error is not None]
    return EpisodeMetrics(
        seed=seed, controller=ctrl.kind,
        success=all(g.success for g in gates),
        traversal_error=crossed[-1].traversal_error if n_gates == 1 and crossed else
        (float(np.mean([g.traversal_error for g in crossed])) if crossed else None),
        traversal_time=last.traversal_time,
        reason=reason, gates=gates, ticks=k,
        log_path=None if log_path is None else str(log_path),
    )


def write_log(path: str | Path, rows) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(LOG_COLUMNS)
        out.writerows(rows)
