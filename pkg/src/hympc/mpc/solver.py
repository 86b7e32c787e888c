"""Parameterized MPC: request/config types and the single-shooting solve."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..dynamics import NU, NX, DroneLimits, DroneState, GateObservation
from . import kernels
from .cost import gate_reference_embed, temporal_weight


def _diag(pos: float, vel: float, quat: float) -> np.ndarray:
    return np.array([pos] * 3 + [vel] * 3 + [quat] * 4, dtype=float)


@dataclass
class CostWeights:
    q_u: np.ndarray = field(default_factory=lambda: np.full(NU, 0.1))
    q_f: np.ndarray = field(default_factory=lambda: _diag(100.0, 10.0, 1.0))
    q_p: np.ndarray = field(default_factory=lambda: _diag(100.0, 10.0, 1.0))
    q_g: np.ndarray = field(default_factory=lambda: _diag(100.0, 10.0, 1.0))
    eta: float = 10.0
    time_scale: float = 1.0  # seconds; width of the temporal spread weights

    def __post_init__(self):
        for name in ("q_u", "q_f", "q_p", "q_g"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if np.any(arr < 0):
                raise ValueError(f"{name} must be nonnegative")
            setattr(self, name, arr)
        if self.eta <= 0:
            raise ValueError("eta must be positive")


@dataclass
class SolverConfig:
    max_iters: int = 50
    tol: float = 1e-4
    rtol: float = 0.0
    armijo: float = 1e-4
    max_halvings: int = 12


@dataclass
class MpcConfig:
    horizon: int = 50
    dt: float = 0.02
    limits: DroneLimits = field(default_factory=DroneLimits)
    weights: CostWeights = field(default_factory=CostWeights)
    solver: SolverConfig = field(default_factory=SolverConfig)
    temporal_spread: bool = True  # False gives the constant-weight standard MPC

    def __post_init__(self):
        if self.horizon < 2:
            raise ValueError("horizon must have at least 2 steps")
        if self.dt <= 0:
            raise ValueError("dt must be positive")

    @property
    def t_horizon(self) -> float:
        return self.horizon * self.dt


@dataclass
class MpcRequest:
    x0: DroneState
    gate_now: GateObservation
    gate_pred: GateObservation
    t_p: float
    x_target: DroneState
    lam: float
    t_f: float | None = None  # None anchors the follow weight at the horizon end

    def validate(self, cfg: MpcConfig) -> None:
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lambda must lie in [0, 1]")
        if not 0.0 <= self.t_p <= cfg.t_horizon + 1e-12:
            raise ValueError("t_p must lie within the horizon")


@dataclass
class MpcSolution:
    states: np.ndarray    # (H+1, 10)
    controls: np.ndarray  # (H, 4)
    cost: float
    iterations: int
    converged: bool
    cost_history: np.ndarray
    grad_history: np.ndarray

    @property
    def first_control(self) -> np.ndarray:
        return self.controls[0].copy()

    def shifted(self) -> np.ndarray:
        """Controls advanced one step for warm-starting the next tick."""
        return np.vstack([self.controls[1:], self.controls[-1:]])


class SolverError(RuntimeError):
    pass


def pack_problem(req: MpcRequest, cfg: MpcConfig):
    """Flatten a request into the kernel layout ``(refs, qdiag, w, u_ref, qu)``."""
    H, d = cfg.horizon, cfg.dt
    wts = cfg.weights
    lam = float(req.lam)
    t_f = cfg.t_horizon if req.t_f is None else req.t_f
    ts = np.arange(H + 1) * d
    if cfg.temporal_spread:
        xi_f = temporal_weight(ts, t_f, wts.eta, wts.time_scale)
        xi_p = temporal_weight(ts, req.t_p, wts.eta, wts.time_scale)
    else:
        xi_f = np.full(H + 1, wts.eta)
        xi_p = np.full(H + 1, wts.eta)
    w_follow = lam * xi_f
    w_pass = (1.0 - lam) * xi_p
    w_pass[H] = 0.0
    w_goal = np.zeros(H + 1)
    w_goal[H] = 1.0 - lam
    refs = np.vstack([
        gate_reference_embed(req.gate_now).to_vector(),
        gate_reference_embed(req.gate_pred).to_vector(),
        req.x_target.to_vector(),
    ])
    qdiag = np.vstack([wts.q_f, wts.q_p, wts.q_g])
    w = np.vstack([w_follow, w_pass, w_goal])
    u_ref = np.array([cfg.limits.g, 0.0, 0.0, 0.0])
    return refs, qdiag, w, u_ref, np.asarray(wts.q_u, dtype=float)


def hover_controls(cfg: MpcConfig) -> np.ndarray:
    return np.tile([cfg.limits.g, 0.0, 0.0, 0.0], (cfg.horizon, 1))


def solve(
    req: MpcRequest,
    cfg: MpcConfig,
    warm_start: MpcSolution | np.ndarray | None = None,
    debug_csv: str | Path | None = None,
) -> MpcSolution:
    """Minimize the hybrid cost over the horizon's controls.

    ``warm_start`` may be a previous solution (used as-is) or a raw control
    array; without one the solver starts from hover.
    """
    req.validate(cfg)
    if warm_start is None:
        U0 = hover_controls(cfg)
    elif isinstance(warm_start, MpcSolution):
        U0 = warm_start.controls
    else:
        U0 = np.asarray(warm_start, dtype=float)
    if U0.shape != (cfg.horizon, NU):
        raise ValueError(f"warm start must have shape {(cfg.horizon, NU)}")
    refs, qdiag, w, u_ref, qu = pack_problem(req, cfg)
    s = cfg.solver
    try:
        U, X, J, it, conv, hist, pg = kernels.solve(
            req.x0.to_vector(), U0, cfg.dt, cfg.limits.g,
            cfg.limits.lower, cfg.limits.upper, refs, qdiag, w, u_ref, qu,
            max_iter=s.max_iters, tol=s.tol, rtol=s.rtol, armijo=s.armijo,
            max_halvings=s.max_halvings,
        )
    except FloatingPointError as exc:
        raise SolverError(f"solver failed: {exc}") from exc
    sol = MpcSolution(X, U, float(J), int(it), bool(conv), hist, pg)
    if debug_csv is not None:
        dump_iterations(sol, debug_csv)
    return sol


def dump_iterations(sol: MpcSolution, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["iteration", "cost", "grad_norm"])
        for i, c in enumerate(sol.cost_history):
            gn = sol.grad_history[i] if i < len(sol.grad_history) else ""
            out.writerow([i, repr(float(c)), gn if gn == "" else repr(float(gn))])


def solution_cost(sol_states, controls, req: MpcRequest, cfg: MpcConfig) -> float:
    """Packed-form cost of an arbitrary trajectory under ``req``."""
    refs, qdiag, w, u_ref, qu = pack_problem(req, cfg)
    return float(kernels.trajectory_cost(sol_states, controls, refs, qdiag, w, u_ref, qu))


__all__ = [
    "CostWeights", "SolverConfig", "MpcConfig", "MpcRequest", "MpcSolution",
    "SolverError", "pack_problem", "hover_controls", "solve", "solution_cost",
    "NX",
]
