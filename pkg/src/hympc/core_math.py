"""Quaternion algebra and fixed-step integrators.

Quaternions are scalar-first ``(w, x, y, z)`` numpy arrays with the Hamilton
product. Vectors are plain length-3 arrays.
"""
from __future__ import annotations

from typing import Callable

import numpy as np

IDENTITY_QUAT = np.array([1.0, 0.0, 0.0, 0.0])


class IntegrationError(ArithmeticError):
    """Raised when a state derivative evaluates to a non-finite value."""


def quat_normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    n = np.sqrt(q @ q)
    if not (np.isfinite(n) and n > 0.0):
        raise ValueError("cannot normalize a zero or non-finite quaternion")
    return q / n


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_from_axis_angle(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    s = np.sin(0.5 * angle)
    return np.array([np.cos(0.5 * angle), *(s * axis)])


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    """Body-to-inertial rotation matrix of a unit quaternion."""
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate ``v`` from the body frame into the inertial frame: q ⊙ v."""
    w = q[0]
    u = np.asarray(q[1:], dtype=float)
    v = np.asarray(v, dtype=float)
    t = 2.0 * np.cross(u, v)
    return v + w * t + np.cross(u, t)


def omega_matrix(omega: np.ndarray) -> np.ndarray:
    """4x4 skew matrix with ``omega_matrix(w) @ q == q ⊗ (0, w)``."""
    wx, wy, wz = omega
    return np.array([
        [0.0, -wx, -wy, -wz],
        [wx, 0.0, wz, -wy],
        [wy, -wz, 0.0, wx],
        [wz, wy, -wx, 0.0],
    ])


def quat_derivative(q: np.ndarray, omega: np.ndarray) -> np.ndarray:
    """Kinematic rate ½·Λ(ω)·q for body rates ``omega``."""
    return 0.5 * omega_matrix(omega) @ np.asarray(q, dtype=float)


def rk4_step(
    f: Callable[[np.ndarray, np.ndarray], np.ndarray],
    x: np.ndarray,
    u: np.ndarray,
    d: float,
    quat_slice: slice | None = None,
) -> np.ndarray:
    """One classical Runge-Kutta step of ``x' = f(x, u)`` over ``d`` seconds.

    If ``quat_slice`` is given that sub-block is renormalized afterwards.
    """
    if d <= 0:
        raise ValueError("step size must be positive")
    x = np.asarray(x, dtype=float)
    k1 = f(x, u)
    k2 = f(x + 0.5 * d * k1, u)
    k3 = f(x + 0.5 * d * k2, u)
    k4 = f(x + d * k3, u)
    incr = (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
    if not np.all(np.isfinite(incr)):
        raise IntegrationError("non-finite state derivative")
    out = x + d * incr
    if quat_slice is not None:
        out[quat_slice] = quat_normalize(out[quat_slice])
    return out
