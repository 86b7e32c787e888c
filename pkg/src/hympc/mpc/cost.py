"""Hybrid follow/pass cost terms, evaluated directly on a candidate trajectory.

These are the readable reference for what the solver minimizes; the solver
itself works on the packed form built in :mod:`hympc.mpc.solver`.
"""
from __future__ import annotations

import numpy as np

from ..core_math import IDENTITY_QUAT
from ..dynamics import DroneState, GateObservation


def gate_reference_embed(obs: GateObservation) -> DroneState:
    """Gate center pose as a level drone state."""
    return DroneState(obs.center, obs.center_vel, IDENTITY_QUAT)


def temporal_weight(t, anchor: float, eta: float, scale: float = 1.0):
    """``eta * exp(-((t - anchor) / scale)**2)``."""
    t = np.asarray(t, dtype=float)
    return eta * np.exp(-(((t - anchor) / scale) ** 2))


def state_error(x: np.ndarray, ref: np.ndarray) -> np.ndarray:
    """``x - ref`` with the reference quaternion moved to the hemisphere of ``x``."""
    ref = np.array(ref, dtype=float)
    if ref[6:10] @ x[6:10] < 0.0:
        ref[6:10] *= -1.0
    return x - ref


def _quad(e: np.ndarray, diag: np.ndarray) -> float:
    return float(np.sum(diag * e * e))


def control_cost(U: np.ndarray, weights, g: float) -> float:
    du = np.asarray(U, dtype=float) - np.array([g, 0.0, 0.0, 0.0])
    return float(np.sum(weights.q_u * du * du))


def cost_follow(X, U, req, weights, d: float, g: float, constant_weight: bool = False) -> float:
    """Control regularization plus temporally weighted attraction to the current gate pose."""
    X = np.asarray(X, dtype=float)
    ref = gate_reference_embed(req.gate_now).to_vector()
    t_f = (len(X) - 1) * d if req.t_f is None else req.t_f
    total = control_cost(U, weights, g)
    for t, x in enumerate(X):
        xi = weights.eta if constant_weight else temporal_weight(
            t * d, t_f, weights.eta, weights.time_scale)
        total += xi * _quad(state_error(x, ref), weights.q_f)
    return total


def cost_pass(X, U, req, weights, d: float, g: float, constant_weight: bool = False) -> float:
    """Attraction to the predicted gate pose around ``t_p`` plus a terminal target term."""
    X = np.asarray(X, dtype=float)
    ref = gate_reference_embed(req.gate_pred).to_vector()
    total = control_cost(U, weights, g)
    for t, x in enumerate(X[:-1]):
        xi = weights.eta if constant_weight else temporal_weight(
            t * d, req.t_p, weights.eta, weights.time_scale)
        total += xi * _quad(state_error(x, ref), weights.q_p)
    total += _quad(state_error(X[-1], req.x_target.to_vector()), weights.q_g)
    return total


def hybrid_cost(X, U, req, weights, d: float, g: float, constant_weight: bool = False) -> float:
    lam = req.lam
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must lie in [0, 1]")
    return (lam * cost_follow(X, U, req, weights, d, g, constant_weight)
            + (1.0 - lam) * cost_pass(X, U, req, weights, d, g, constant_weight))
