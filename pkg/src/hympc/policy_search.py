"""Episode-based search over the cost-mixing variable and traversal time.

A Gaussian over ``lambda`` is sampled, every sample is rolled out through
the MPC at each candidate traversal time, trajectories are scored against
the predicted gate track, and the Gaussian is refit by reward-weighted
maximum likelihood.
"""
from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .dynamics import DroneState, GateObservation
from .mpc.solver import MpcConfig, MpcRequest, MpcSolution, SolverError, solve


class Verdict(enum.Enum):
    NOT_REACHED = "not_reached"
    SUCCESS = "success"
    FAILURE = "failure"


@dataclass
class TrajectoryVerdict:
    verdict: Verdict
    index: int | None = None
    error: float | None = None

    @property
    def crossed(self) -> bool:
        return self.verdict is not Verdict.NOT_REACHED


@dataclass
class GaussianPolicy:
    mu: float = 0.5
    sigma: float = 0.3

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return np.clip(rng.normal(self.mu, self.sigma, size=n), 0.0, 1.0)


@dataclass
class RewardConfig:
    zeta: float = 3.0
    epsilon: float = 0.3
    omega: float = 99_999.0
    varrho: float = 10.0
    success_radius: float = 0.4


@dataclass
class SearchConfig:
    n_samples: int = 5
    candidate_times: tuple[float, ...] = tuple(np.round(np.arange(1, 11) * 0.1, 10))
    max_iters: int = 10
    mu_tol: float = 1e-3
    min_sigma: float = 1e-3
    init_sigma: float = 0.3
    variance: str = "ml"  # "ml" (weighted-likelihood argmax) or "unbiased"

    def __post_init__(self):
        if self.n_samples < 2:
            raise ValueError("need at least two samples per iteration")
        if len(self.candidate_times) == 0:
            raise ValueError("candidate_times must be nonempty")
        self.candidate_times = tuple(float(t) for t in self.candidate_times)


def _positions(track) -> np.ndarray:
    if len(track) and isinstance(track[0], GateObservation):
        return np.array([o.center for o in track])
    arr = np.asarray(track, dtype=float)
    return arr[:, :3]


def classify(states, gate_states, alpha, epsilon: float) -> TrajectoryVerdict:
    """Find the first step whose neighbours straddle the gate plane.

    The plane test uses the gate position at the earlier step of each pair;
    the traversal error is the drone-to-gate distance at the later step.
    """
    p = _positions(states)
    gp = _positions(gate_states)
    if len(p) != len(gp):
        raise ValueError("trajectory and gate track must be aligned")
    alpha = np.asarray(alpha, dtype=float)
    before = (gp[:-1] - p[:-1]) @ alpha
    after = (gp[:-1] - p[1:]) @ alpha
    hits = np.nonzero(before * after <= 0.0)[0]
    if hits.size == 0:
        return TrajectoryVerdict(Verdict.NOT_REACHED)
    i = int(hits[0]) + 1
    err = float(np.linalg.norm(p[i] - gp[i]))
    return TrajectoryVerdict(Verdict.SUCCESS if err < epsilon else Verdict.FAILURE, i, err)


def reward(states, gate_states, verdict: TrajectoryVerdict, t_p: float,
           cfg: RewardConfig, t_horizon: float, dt: float) -> float:
    p = _positions(states)
    gp = _positions(gate_states)
    t = np.arange(1, len(p)) * dt
    dist2 = np.sum((p[1:] - gp[1:]) ** 2, axis=1)
    if verdict.crossed:
        psi = np.exp(-cfg.varrho * (t - t_p) ** 2)
        r = -float(psi @ dist2) - t_p
        if verdict.verdict is Verdict.FAILURE:
            r -= cfg.omega
        return r
    psi = np.exp(-cfg.varrho * (t - t_horizon) ** 2)
    return -float(psi @ dist2)


def em_update(lams, rewards, zeta: float, min_sigma: float = 1e-3,
              variance: str = "ml") -> tuple[float, float]:
    """Closed-form refit of the Gaussian with soft-max reward weights.

    ``variance="ml"`` returns the weighted-likelihood maximizer
    (``sum w (l - mu)^2 / sum w``); ``"unbiased"`` divides by
    ``((sum w)^2 - sum w^2) / sum w`` instead.
    """
    lams = np.asarray(lams, dtype=float)
    r = np.asarray(rewards, dtype=float)
    if lams.size < 2 or lams.shape != r.shape:
        raise ValueError("need at least two (lambda, reward) pairs")
    w = np.exp(zeta * (r - r.max()))
    sw = w.sum()
    mu = float(w @ lams / sw)
    ss = float(w @ (lams - mu) ** 2)
    if variance == "ml":
        denom = sw
    elif variance == "unbiased":
        denom = (sw * sw - float(w @ w)) / sw
    else:
        raise ValueError(f"unknown variance mode {variance!r}")
    if not denom > 0.0 or ss <= 0.0:
        return mu, min_sigma
    return mu, max(float(np.sqrt(ss / denom)), min_sigma)


@dataclass
class SearchResult:
    lam: float
    t_p: float
    policy: GaussianPolicy
    solution: MpcSolution
    reward: float
    trace: list[dict] = field(default_factory=list)
    n_solves: int = 0


def write_trace(trace: list[dict], path, append: bool = False) -> None:
    """Per-iteration search trace (mu, sigma, best reward, best t) as CSV."""
    cols = ["iteration", "mu", "sigma", "best_reward", "best_t"]
    with open(path, "a" if append else "w", newline="") as fh:
        out = csv.DictWriter(fh, fieldnames=cols)
        if not append or fh.tell() == 0:
            out.writeheader()
        out.writerows(trace)


class SearchFailure(RuntimeError):
    pass


GateForecast = Callable[[np.ndarray], np.ndarray]


class CandidateSweep:
    """Solve and score the MPC at every candidate traversal time for a given lambda.

    Every solve starts from the same warm start, so the score is a
    deterministic function of ``(lambda, t_p)``.
    """

    def __init__(self, x0: DroneState, gate_now: GateObservation, forecast,
                 x_target: DroneState, candidate_times, mpc_cfg: MpcConfig,
                 reward_cfg: RewardConfig, alpha=(1.0, 0.0, 0.0),
                 warm_start: np.ndarray | None = None):
        H, d = mpc_cfg.horizon, mpc_cfg.dt
        grid = np.arange(H + 1) * d
        track = forecast if isinstance(forecast, np.ndarray) else forecast(grid)
        self.track = np.asarray(track, dtype=float)
        if self.track.shape[0] != H + 1:
            raise ValueError("gate forecast must cover every horizon step")
        self.times = np.asarray(candidate_times, dtype=float)
        idx = np.rint(self.times / d).astype(int)
        if np.any(idx < 0) or np.any(idx > H):
            raise ValueError("candidate times must lie within the horizon")
        self.preds = [GateObservation.from_vector(self.track[i]) for i in idx]
        self.x0, self.gate_now, self.x_target = x0, gate_now, x_target
        self.mpc_cfg, self.reward_cfg = mpc_cfg, reward_cfg
        self.alpha = np.asarray(alpha, dtype=float)
        self.warm_start = warm_start
        self.n_solves = 0

    def score(self, sol: MpcSolution, t_p: float) -> tuple[float, TrajectoryVerdict]:
        v = classify(sol.states, self.track, self.alpha, self.reward_cfg.epsilon)
        r = reward(sol.states, self.track, v, t_p, self.reward_cfg,
                   self.mpc_cfg.t_horizon, self.mpc_cfg.dt)
        return r, v

    def __call__(self, lam: float) -> tuple[float, float, MpcSolution | None]:
        """Best ``(reward, t_p, solution)`` over candidate times."""
        best = (-np.inf, float("nan"), None)
        for t_j, pred in zip(self.times, self.preds):
            req = MpcRequest(self.x0, self.gate_now, pred, float(t_j), self.x_target, float(lam))
            try:
                sol = solve(req, self.mpc_cfg, self.warm_start)
            except SolverError:
                continue
            self.n_solves += 1
            r, _ = self.score(sol, float(t_j))
            if r > best[0]:
                best = (r, float(t_j), sol)
        return best


def search(
    x0: DroneState,
    gate_now: GateObservation,
    forecast: GateForecast | np.ndarray,
    x_target: DroneState,
    cfg: SearchConfig,
    mpc_cfg: MpcConfig,
    reward_cfg: RewardConfig,
    policy0: GaussianPolicy,
    rng: np.random.Generator,
    alpha=(1.0, 0.0, 0.0),
    warm_start: np.ndarray | None = None,
) -> SearchResult:
    """Learn (lambda, t_p) for the current tick.

    ``forecast`` maps offsets (seconds) to predicted gate observation vectors
    ``(n, 6)``; an array of shape ``(H+1, 6)`` sampled on the horizon grid is
    also accepted.
    """
    sweep = CandidateSweep(x0, gate_now, forecast, x_target, cfg.candidate_times,
                           mpc_cfg, reward_cfg, alpha, warm_start)
    policy = GaussianPolicy(policy0.mu, policy0.sigma)
    trace = []
    for it in range(cfg.max_iters):
        lams = policy.sample(rng, cfg.n_samples)
        results = [sweep(lam) for lam in lams]
        rewards = np.array([r[0] for r in results])
        ok = np.isfinite(rewards)
        if not ok.any():
            raise SearchFailure("every MPC solve failed")
        if ok.sum() < 2:
            mu, sigma = float(lams[ok][0]), cfg.min_sigma
        else:
            mu, sigma = em_update(lams[ok], rewards[ok], reward_cfg.zeta, cfg.min_sigma,
                                  cfg.variance)
        b = int(np.argmax(np.where(ok, rewards, -np.inf)))
        trace.append({"iteration": it, "mu": mu, "sigma": sigma,
                      "best_reward": float(rewards[b]), "best_t": results[b][1]})
        shift = abs(mu - policy.mu)
        policy = GaussianPolicy(mu, sigma)
        if shift < cfg.mu_tol:
            break
    lam_star = float(np.clip(policy.mu, 0.0, 1.0))
    r_star, t_star, sol_star = sweep(lam_star)
    if sol_star is None:
        raise SearchFailure("every MPC solve failed at the final lambda")
    return SearchResult(lam_star, t_star, policy, sol_star, float(r_star), trace,
                        sweep.n_solves)
