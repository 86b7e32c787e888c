"""Drone point-mass/attitude model and the hidden swinging-gate simulator.

The drone state vector is ``[p(3), v(3), q(4)]``; the control vector is
``[c, wx, wy, wz]`` (mass-normalized collective thrust and body rates).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core_math import (
    IDENTITY_QUAT,
    quat_derivative,
    quat_normalize,
    quat_rotate,
    rk4_step,
)

NX = 10
NU = 4
QUAT = slice(6, 10)
GRAVITY = 9.81


@dataclass
class DroneState:
    p: np.ndarray = field(default_factory=lambda: np.zeros(3))
    v: np.ndarray = field(default_factory=lambda: np.zeros(3))
    q: np.ndarray = field(default_factory=lambda: IDENTITY_QUAT.copy())

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float).copy()
        self.v = np.asarray(self.v, dtype=float).copy()
        self.q = quat_normalize(self.q)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.p, self.v, self.q])

    @classmethod
    def from_vector(cls, x) -> "DroneState":
        x = np.asarray(x, dtype=float)
        if x.shape != (10,):
            raise ValueError("drone state vector must have 10 entries")
        return cls(x[0:3], x[3:6], x[6:10])


@dataclass
class ControlInput:
    c: float
    omega: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def to_vector(self) -> np.ndarray:
        return np.array([self.c, *self.omega], dtype=float)

    @classmethod
    def from_vector(cls, u) -> "ControlInput":
        return cls(float(u[0]), np.asarray(u[1:4], dtype=float).copy())


@dataclass
class DroneLimits:
    c_min: float = 2.0
    c_max: float = 20.0
    omega_max: float = 6.0
    g: float = GRAVITY
    sim_c_max: float | None = None  # plant-side thrust cap; None means c_max

    def __post_init__(self):
        if not 0 <= self.c_min < self.c_max:
            raise ValueError("need 0 <= c_min < c_max")
        if self.omega_max <= 0:
            raise ValueError("omega_max must be positive")
        if self.sim_c_max is None:
            self.sim_c_max = self.c_max

    @property
    def lower(self) -> np.ndarray:
        w = self.omega_max
        return np.array([self.c_min, -w, -w, -w])

    @property
    def upper(self) -> np.ndarray:
        w = self.omega_max
        return np.array([self.c_max, w, w, w])


@dataclass
class GateState:
    theta: float
    theta_dot: float = 0.0


@dataclass
class GateGeometry:
    pivot: np.ndarray = field(default_factory=lambda: np.array([2.0, 0.0, 3.0]))
    arm_length: float = 2.0
    height: float = 0.8
    width: float = 1.0
    alpha: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0]))

    def __post_init__(self):
        self.pivot = np.asarray(self.pivot, dtype=float)
        self.alpha = np.asarray(self.alpha, dtype=float)
        if self.arm_length <= 0:
            raise ValueError("arm length must be positive")
        self.alpha = self.alpha / np.linalg.norm(self.alpha)


@dataclass
class GateObservation:
    center: np.ndarray
    center_vel: np.ndarray

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.center, self.center_vel])

    @classmethod
    def from_vector(cls, o) -> "GateObservation":
        o = np.asarray(o, dtype=float)
        return cls(o[0:3].copy(), o[3:6].copy())


def drone_derivative(x: np.ndarray, u: np.ndarray, g: float = GRAVITY) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    q = x[QUAT]
    acc = quat_rotate(q, np.array([0.0, 0.0, u[0]]))
    acc[2] -= g
    return np.concatenate([x[3:6], acc, quat_derivative(q, u[1:4])])


def drone_step_euler(x: np.ndarray, u: np.ndarray, d: float, g: float = GRAVITY) -> np.ndarray:
    """Forward-Euler step followed by quaternion renormalization (the MPC model)."""
    if d <= 0:
        raise ValueError("step size must be positive")
    out = np.asarray(x, dtype=float) + d * drone_derivative(x, u, g)
    out[QUAT] = quat_normalize(out[QUAT])
    return out


def drone_step_rk4(x: np.ndarray, u: np.ndarray, d: float, g: float = GRAVITY) -> np.ndarray:
    """Plant-side integration used as simulation ground truth."""
    return rk4_step(lambda s, a: drone_derivative(s, a, g), x, u, d, quat_slice=QUAT)


def _pendulum_rate(s: np.ndarray, g: float, arm: float, damping: float) -> np.ndarray:
    return np.array([s[1], -(g / arm) * np.sin(s[0]) - damping * s[1]])


def gate_step(
    s: GateState,
    d: float,
    arm_length: float = 2.0,
    g: float = GRAVITY,
    damping: float = 0.0,
) -> GateState:
    """RK4 step of the (optionally damped) pendulum ``θ'' = -(g/L) sin θ - b θ'``."""
    out = rk4_step(
        lambda y, _: _pendulum_rate(y, g, arm_length, damping),
        np.array([s.theta, s.theta_dot]),
        None,
        d,
    )
    return GateState(float(out[0]), float(out[1]))


def gate_energy(s: GateState, arm_length: float = 2.0, g: float = GRAVITY) -> float:
    return 0.5 * arm_length**2 * s.theta_dot**2 - g * arm_length * np.cos(s.theta)


def gate_observe(s: GateState, geo: GateGeometry) -> GateObservation:
    L = geo.arm_length
    st, ct = np.sin(s.theta), np.cos(s.theta)
    center = geo.pivot + L * np.array([0.0, st, -ct])
    vel = L * s.theta_dot * np.array([0.0, ct, st])
    return GateObservation(center, vel)


def apply_plant_limits(u, limits: DroneLimits) -> np.ndarray:
    """Clamp a control to what the (possibly degraded) plant can deliver."""
    if isinstance(u, ControlInput):
        u = u.to_vector()
    u = np.array(u, dtype=float)
    u[0] = min(max(u[0], limits.c_min), limits.sim_c_max)
    u[1:4] = np.clip(u[1:4], -limits.omega_max, limits.omega_max)
    return u
