"""Pure-numpy MPC kernels.

Mirrors ``_kernels.pyx`` operation for operation; used when the compiled
extension is unavailable and as the reference the extension is tested
against.

Problem layout shared by both backends:

``refs`` (K, 10), ``qdiag`` (K, 10), ``w`` (K, H+1)
    K quadratic reference terms; stage ``t`` adds
    ``w[k, t] * sum_i qdiag[k, i] * (x_t[i] - refs[k, i])**2`` where the
    quaternion part of the reference is sign-flipped onto the hemisphere of
    ``x_t``.
``u_ref`` (4,), ``qu`` (4,)
    Control regularization ``sum_i qu[i] * (u_t[i] - u_ref[i])**2`` for
    ``t < H``.
"""
from __future__ import annotations

import numpy as np

NX = 10
NU = 4

BACKEND = "python"


def _step(x, u, d, g):
    p, v, q = x[0:3], x[3:6], x[6:10]
    qw, qx, qy, qz = q
    c, wx, wy, wz = u
    acc = np.array([
        2.0 * c * (qx * qz + qw * qy),
        2.0 * c * (qy * qz - qw * qx),
        c * (1.0 - 2.0 * (qx * qx + qy * qy)) - g,
    ])
    qdot = 0.5 * np.array([
        -wx * qx - wy * qy - wz * qz,
        wx * qw + wz * qy - wy * qz,
        wy * qw - wz * qx + wx * qz,
        wz * qw + wy * qx - wx * qy,
    ])
    out = np.empty(NX)
    out[0:3] = p + d * v
    out[3:6] = v + d * acc
    qt = q + d * qdot
    out[6:10] = qt / np.sqrt(qt @ qt)
    return out


def _step_jac(x, u, d, g):
    """Next state and its Jacobians ``A = dx+/dx`` and ``B = dx+/du``."""
    q = x[6:10]
    qw, qx, qy, qz = q
    c, wx, wy, wz = u
    fx = np.zeros((NX, NX))
    fu = np.zeros((NX, NU))
    fx[0:3, 3:6] = np.eye(3)
    fx[3:6, 6:10] = 2.0 * c * np.array([
        [qy, qz, qw, qx],
        [-qx, -qw, qz, qy],
        [0.0, -2.0 * qx, -2.0 * qy, 0.0],
    ])
    fu[3:6, 0] = [
        2.0 * (qx * qz + qw * qy),
        2.0 * (qy * qz - qw * qx),
        1.0 - 2.0 * (qx * qx + qy * qy),
    ]
    fx[6:10, 6:10] = 0.5 * np.array([
        [0.0, -wx, -wy, -wz],
        [wx, 0.0, wz, -wy],
        [wy, -wz, 0.0, wx],
        [wz, wy, -wx, 0.0],
    ])
    fu[6:10, 1:4] = 0.5 * np.array([
        [-qx, -qy, -qz],
        [qw, -qz, qy],
        [qz, qw, -qx],
        [-qy, qx, qw],
    ])
    A = np.eye(NX) + d * fx
    B = d * fu
    xn = _step(x, u, d, g)
    # renormalization: dq/dqt = (I - q q^T) / |qt|
    qt = q + d * (fx[6:10, 6:10] @ q)
    nrm = np.sqrt(qt @ qt)
    qn = xn[6:10]
    P = (np.eye(4) - np.outer(qn, qn)) / nrm
    A[6:10, :] = P @ A[6:10, :]
    B[6:10, :] = P @ B[6:10, :]
    return xn, A, B


def rollout(x0, U, d, g):
    x0 = np.asarray(x0, dtype=float)
    U = np.asarray(U, dtype=float)
    H = U.shape[0]
    X = np.empty((H + 1, NX))
    X[0] = x0
    for t in range(H):
        X[t + 1] = _step(X[t], U[t], d, g)
    return X


def _aligned(refs, x):
    r = refs.copy()
    flip = r[:, 6:10] @ x[6:10] < 0.0
    r[flip, 6:10] *= -1.0
    return r


def _stage_state(x, t, refs, qdiag, w, derivs):
    r = _aligned(refs, x)
    e = x[None, :] - r
    wq = w[:, t:t + 1] * qdiag
    cost = float(np.sum(wq * e * e))
    if not derivs:
        return cost
    lx = 2.0 * np.sum(wq * e, axis=0)
    lxx = 2.0 * np.sum(wq, axis=0)
    return cost, lx, lxx


def trajectory_cost(X, U, refs, qdiag, w, u_ref, qu):
    H = U.shape[0]
    du = U - u_ref
    total = float(np.sum(qu * du * du))
    for t in range(H + 1):
        total += _stage_state(X[t], t, refs, qdiag, w, False)
    return total


def cost(x0, U, d, g, refs, qdiag, w, u_ref, qu):
    X = rollout(x0, U, d, g)
    return trajectory_cost(X, U, refs, qdiag, w, u_ref, qu)


def gradient(x0, U, d, g, refs, qdiag, w, u_ref, qu):
    """Cost and its exact gradient w.r.t. ``U`` by reverse-mode sweep."""
    U = np.asarray(U, dtype=float)
    H = U.shape[0]
    X = np.empty((H + 1, NX))
    X[0] = x0
    As = np.empty((H, NX, NX))
    Bs = np.empty((H, NX, NU))
    for t in range(H):
        X[t + 1], As[t], Bs[t] = _step_jac(X[t], U[t], d, g)
    total = 0.0
    grad = np.empty((H, NU))
    c, lam, _ = _stage_state(X[H], H, refs, qdiag, w, True)
    total += c
    for t in range(H - 1, -1, -1):
        du = U[t] - u_ref
        total += float(np.sum(qu * du * du))
        grad[t] = 2.0 * qu * du + Bs[t].T @ lam
        c, lx, _ = _stage_state(X[t], t, refs, qdiag, w, True)
        total += c
        lam = lx + As[t].T @ lam
    return total, grad


def _proj_grad_norm(U, G, lo, hi):
    return float(np.max(np.abs(np.clip(U - G, lo, hi) - U)))


def solve(x0, U0, d, g, lo, hi, refs, qdiag, w, u_ref, qu,
          max_iter=50, tol=1e-4, rtol=0.0, armijo=1e-4, max_halvings=12):
    """Box-constrained single-shooting solve.

    Each iteration tries a Gauss-Newton step from a Riccati sweep over the
    linearized Euler dynamics (with clamped controls treated as fixed), and
    falls back to a projected-gradient step if that fails to decrease the
    cost. Both use Armijo backtracking with step halving.

    Stops when the projected-gradient inf-norm drops below ``tol``
    (converged), after ``max_iter`` iterations, when no step decreases the
    cost, or when an accepted step improves the cost by less than
    ``rtol * |cost|``.

    Returns ``(U, X, cost, iterations, converged, history, pg_history)``;
    ``history`` holds the cost before the first and after every iteration,
    ``pg_history`` the projected-gradient inf-norm at each linearization.
    """
    x0 = np.asarray(x0, dtype=float)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    U = np.clip(np.asarray(U0, dtype=float), lo, hi)
    H = U.shape[0]
    X = rollout(x0, U, d, g)
    J = trajectory_cost(X, U, refs, qdiag, w, u_ref, qu)
    if not np.isfinite(J):
        raise FloatingPointError("non-finite initial cost")
    history = [J]
    pg_history = []
    converged = False
    it = 0
    As = np.empty((H, NX, NX))
    Bs = np.empty((H, NX, NU))
    lxs = np.empty((H + 1, NX))
    lxxs = np.empty((H + 1, NX))
    while True:
        # linearize and gradient
        for t in range(H):
            _, As[t], Bs[t] = _step_jac(X[t], U[t], d, g)
        for t in range(H + 1):
            _, lxs[t], lxxs[t] = _stage_state(X[t], t, refs, qdiag, w, True)
        G = np.empty((H, NU))
        lam = lxs[H]
        for t in range(H - 1, -1, -1):
            G[t] = 2.0 * qu * (U[t] - u_ref) + Bs[t].T @ lam
            lam = lxs[t] + As[t].T @ lam
        pg = _proj_grad_norm(U, G, lo, hi)
        pg_history.append(pg)
        if pg < tol:
            converged = True
            break
        if it >= max_iter:
            break
        it += 1
        accepted = False

        # Gauss-Newton step
        ks = np.zeros((H, NU))
        Ks = np.zeros((H, NU, NX))
        Vx = lxs[H].copy()
        Vxx = np.diag(lxxs[H])
        dV = 0.0
        ok = True
        for t in range(H - 1, -1, -1):
            A, B = As[t], Bs[t]
            Qx = lxs[t] + A.T @ Vx
            Qu = 2.0 * qu * (U[t] - u_ref) + B.T @ Vx
            VB = Vxx @ B
            VA = Vxx @ A
            Qxx = np.diag(lxxs[t]) + A.T @ VA
            Quu = np.diag(2.0 * qu) + B.T @ VB
            Qux = B.T @ VA
            free = ~(((U[t] >= hi) & (Qu < 0.0)) | ((U[t] <= lo) & (Qu > 0.0)))
            k = np.zeros(NU)
            K = np.zeros((NU, NX))
            if free.any():
                Qff = Quu[np.ix_(free, free)]
                try:
                    Lc = np.linalg.cholesky(Qff)
                except np.linalg.LinAlgError:
                    ok = False
                    break
                rhs = np.concatenate([Qu[free][:, None], Qux[free]], axis=1)
                sol = np.linalg.solve(Lc.T, np.linalg.solve(Lc, rhs))
                k[free] = -sol[:, 0]
                K[free] = -sol[:, 1:]
            ks[t], Ks[t] = k, K
            dV += k @ Qu
            Vx = Qx + K.T @ (Quu @ k) + K.T @ Qu + Qux.T @ k
            Vxx = Qxx + K.T @ Quu @ K + K.T @ Qux + Qux.T @ K
            Vxx = 0.5 * (Vxx + Vxx.T)
        if ok and dV < 0.0:
            alpha = 1.0
            for _ in range(max_halvings):
                Xn = np.empty_like(X)
                Un = np.empty_like(U)
                Xn[0] = x0
                for t in range(H):
                    un = U[t] + alpha * ks[t] + Ks[t] @ (Xn[t] - X[t])
                    Un[t] = np.minimum(np.maximum(un, lo), hi)
                    Xn[t + 1] = _step(Xn[t], Un[t], d, g)
                Jn = trajectory_cost(Xn, Un, refs, qdiag, w, u_ref, qu)
                if np.isfinite(Jn) and Jn <= J + armijo * alpha * dV:
                    accepted = True
                    break
                alpha *= 0.5

        # projected-gradient fallback
        if not accepted:
            alpha = 1.0 / max(1.0, float(np.max(np.abs(G))))
            for _ in range(max_halvings + 8):
                Un = np.minimum(np.maximum(U - alpha * G, lo), hi)
                Xn = rollout(x0, Un, d, g)
                Jn = trajectory_cost(Xn, Un, refs, qdiag, w, u_ref, qu)
                if np.isfinite(Jn) and Jn <= J - armijo * float(np.sum(G * (U - Un))) and Jn < J:
                    accepted = True
                    break
                alpha *= 0.5
        if not accepted:
            history.append(J)
            break
        small = J - Jn <= rtol * abs(J)
        U, X, J = Un, Xn, Jn
        history.append(J)
        if small:
            break
    return U, X, J, it, converged, np.array(history), np.array(pg_history)
