# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled MPC kernels: Euler rollout, hybrid quadratic cost, adjoint
gradient, and the box-constrained Gauss-Newton solver.

Same problem layout and results as ``_kernels_py`` (see its docstring).
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, isfinite
from libc.string cimport memset, memcpy

cnp.import_array()

DEF NX = 10
DEF NU = 4

BACKEND = "cython"


cdef inline void _deriv_parts(const double* x, const double* u, double g,
                              double* acc, double* qdot) noexcept nogil:
    cdef double qw = x[6], qx = x[7], qy = x[8], qz = x[9]
    cdef double c = u[0], wx = u[1], wy = u[2], wz = u[3]
    acc[0] = 2.0 * c * (qx * qz + qw * qy)
    acc[1] = 2.0 * c * (qy * qz - qw * qx)
    acc[2] = c * (1.0 - 2.0 * (qx * qx + qy * qy)) - g
    qdot[0] = 0.5 * (-wx * qx - wy * qy - wz * qz)
    qdot[1] = 0.5 * (wx * qw + wz * qy - wy * qz)
    qdot[2] = 0.5 * (wy * qw - wz * qx + wx * qz)
    qdot[3] = 0.5 * (wz * qw + wy * qx - wx * qy)


cdef inline double _step(const double* x, const double* u, double d, double g,
                         double* out) noexcept nogil:
    """Euler step into ``out``; returns the pre-normalization quaternion norm."""
    cdef double acc[3]
    cdef double qdot[4]
    cdef double qt[4]
    cdef double nrm
    cdef int i
    _deriv_parts(x, u, g, acc, qdot)
    for i in range(3):
        out[i] = x[i] + d * x[3 + i]
        out[3 + i] = x[3 + i] + d * acc[i]
    for i in range(4):
        qt[i] = x[6 + i] + d * qdot[i]
    nrm = sqrt(qt[0] * qt[0] + qt[1] * qt[1] + qt[2] * qt[2] + qt[3] * qt[3])
    for i in range(4):
        out[6 + i] = qt[i] / nrm
    return nrm


cdef void _step_jac(const double* x, const double* u, double d, double g,
                    double* xn, double* A, double* B) noexcept nogil:
    """A is row-major NX x NX, B row-major NX x NU."""
    cdef double qw = x[6], qx = x[7], qy = x[8], qz = x[9]
    cdef double c = u[0], wx = u[1], wy = u[2], wz = u[3]
    cdef double fq[3][4]
    cdef double om[4][4]
    cdef double gq[4][3]
    cdef double P[4][4]
    cdef double tmpA[4][NX]
    cdef double tmpB[4][NU]
    cdef double nrm, s
    cdef int i, j, m

    nrm = _step(x, u, d, g, xn)

    memset(A, 0, NX * NX * sizeof(double))
    memset(B, 0, NX * NU * sizeof(double))
    for i in range(NX):
        A[i * NX + i] = 1.0
    for i in range(3):
        A[i * NX + 3 + i] = d

    fq[0][0] = qy; fq[0][1] = qz; fq[0][2] = qw; fq[0][3] = qx
    fq[1][0] = -qx; fq[1][1] = -qw; fq[1][2] = qz; fq[1][3] = qy
    fq[2][0] = 0.0; fq[2][1] = -2.0 * qx; fq[2][2] = -2.0 * qy; fq[2][3] = 0.0
    for i in range(3):
        for j in range(4):
            A[(3 + i) * NX + 6 + j] = d * 2.0 * c * fq[i][j]
    B[3 * NU] = d * 2.0 * (qx * qz + qw * qy)
    B[4 * NU] = d * 2.0 * (qy * qz - qw * qx)
    B[5 * NU] = d * (1.0 - 2.0 * (qx * qx + qy * qy))

    om[0][0] = 0.0; om[0][1] = -wx; om[0][2] = -wy; om[0][3] = -wz
    om[1][0] = wx; om[1][1] = 0.0; om[1][2] = wz; om[1][3] = -wy
    om[2][0] = wy; om[2][1] = -wz; om[2][2] = 0.0; om[2][3] = wx
    om[3][0] = wz; om[3][1] = wy; om[3][2] = -wx; om[3][3] = 0.0
    gq[0][0] = -qx; gq[0][1] = -qy; gq[0][2] = -qz
    gq[1][0] = qw; gq[1][1] = -qz; gq[1][2] = qy
    gq[2][0] = qz; gq[2][1] = qw; gq[2][2] = -qx
    gq[3][0] = -qy; gq[3][1] = qx; gq[3][2] = qw

    # unnormalized quaternion rows of A and B
    for i in range(4):
        for j in range(NX):
            tmpA[i][j] = 0.0
        for j in range(4):
            tmpA[i][6 + j] = (1.0 if i == j else 0.0) + d * 0.5 * om[i][j]
        tmpB[i][0] = 0.0
        for j in range(3):
            tmpB[i][1 + j] = d * 0.5 * gq[i][j]

    for i in range(4):
        for j in range(4):
            P[i][j] = ((1.0 if i == j else 0.0) - xn[6 + i] * xn[6 + j]) / nrm
    for i in range(4):
        for j in range(NX):
            s = 0.0
            for m in range(4):
                s += P[i][m] * tmpA[m][j]
            A[(6 + i) * NX + j] = s
        for j in range(NU):
            s = 0.0
            for m in range(4):
                s += P[i][m] * tmpB[m][j]
            B[(6 + i) * NU + j] = s


cdef double _stage_state(const double* x, int t, int K, int Hp1,
                         const double* refs, const double* qdiag, const double* w,
                         double* lx, double* lxx) noexcept nogil:
    """State cost at stage t; fills lx/lxx (diagonal) when non-NULL."""
    cdef double total = 0.0, wt, sgn, dot, e, wq
    cdef int k, i
    if lx != NULL:
        for i in range(NX):
            lx[i] = 0.0
            lxx[i] = 0.0
    for k in range(K):
        wt = w[k * Hp1 + t]
        if wt == 0.0:
            continue
        dot = 0.0
        for i in range(4):
            dot += refs[k * NX + 6 + i] * x[6 + i]
        sgn = -1.0 if dot < 0.0 else 1.0
        for i in range(NX):
            if i < 6:
                e = x[i] - refs[k * NX + i]
            else:
                e = x[i] - sgn * refs[k * NX + i]
            wq = wt * qdiag[k * NX + i]
            total += wq * e * e
            if lx != NULL:
                lx[i] += 2.0 * wq * e
                lxx[i] += 2.0 * wq
    return total


cdef double _control_cost(const double* u, const double* u_ref, const double* qu) noexcept nogil:
    cdef double total = 0.0, e
    cdef int i
    for i in range(NU):
        e = u[i] - u_ref[i]
        total += qu[i] * e * e
    return total


cdef double _traj_cost(const double* X, const double* U, int H, int K,
                       const double* refs, const double* qdiag, const double* w,
                       const double* u_ref, const double* qu) noexcept nogil:
    cdef double total = 0.0
    cdef int t
    for t in range(H):
        total += _control_cost(&U[t * NU], u_ref, qu)
    for t in range(H + 1):
        total += _stage_state(&X[t * NX], t, K, H + 1, refs, qdiag, w, NULL, NULL)
    return total


cdef void _rollout(const double* x0, const double* U, int H, double d, double g,
                   double* X) noexcept nogil:
    cdef int t
    memcpy(X, x0, NX * sizeof(double))
    for t in range(H):
        _step(&X[t * NX], &U[t * NU], d, g, &X[(t + 1) * NX])


cdef int _cholesky(double* M, int n) noexcept nogil:
    """In-place lower Cholesky of an n x n row-major matrix; 0 on failure."""
    cdef int i, j, k
    cdef double s
    for j in range(n):
        s = M[j * n + j]
        for k in range(j):
            s -= M[j * n + k] * M[j * n + k]
        if not s > 0.0:
            return 0
        M[j * n + j] = sqrt(s)
        for i in range(j + 1, n):
            s = M[i * n + j]
            for k in range(j):
                s -= M[i * n + k] * M[j * n + k]
            M[i * n + j] = s / M[j * n + j]
    return 1


cdef void _chol_solve(const double* L, int n, double* b) noexcept nogil:
    cdef int i, k
    cdef double s
    for i in range(n):
        s = b[i]
        for k in range(i):
            s -= L[i * n + k] * b[k]
        b[i] = s / L[i * n + i]
    for i in range(n - 1, -1, -1):
        s = b[i]
        for k in range(i + 1, n):
            s -= L[k * n + i] * b[k]
        b[i] = s / L[i * n + i]


cdef inline double _clip(double v, double lo, double hi) noexcept nogil:
    if v < lo:
        return lo
    if v > hi:
        return hi
    return v


def _as_c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def rollout(x0, U, double d, double g):
    cdef double[::1] x0v = _as_c(x0)
    cdef double[:, ::1] Uv = _as_c(U)
    cdef int H = Uv.shape[0]
    X = np.empty((H + 1, NX))
    cdef double[:, ::1] Xv = X
    _rollout(&x0v[0], &Uv[0, 0], H, d, g, &Xv[0, 0])
    return X


def trajectory_cost(X, U, refs, qdiag, w, u_ref, qu):
    cdef double[:, ::1] Xv = _as_c(X)
    cdef double[:, ::1] Uv = _as_c(U)
    cdef double[:, ::1] rv = _as_c(refs)
    cdef double[:, ::1] qv = _as_c(qdiag)
    cdef double[:, ::1] wv = _as_c(w)
    cdef double[::1] urv = _as_c(u_ref)
    cdef double[::1] quv = _as_c(qu)
    return _traj_cost(&Xv[0, 0], &Uv[0, 0], Uv.shape[0], rv.shape[0],
                      &rv[0, 0], &qv[0, 0], &wv[0, 0], &urv[0], &quv[0])


def cost(x0, U, double d, double g, refs, qdiag, w, u_ref, qu):
    return trajectory_cost(rollout(x0, U, d, g), U, refs, qdiag, w, u_ref, qu)


cdef double _gradient(const double* x0, const double* U, int H, double d, double g, int K,
                      const double* refs, const double* qdiag, const double* w,
                      const double* u_ref, const double* qu,
                      double* X, double* As, double* Bs, double* lxs, double* lxxs,
                      double* G) noexcept nogil:
    """Linearize along the rollout of U and sweep the adjoint; returns the cost."""
    cdef int t, i, j
    cdef double total = 0.0, s
    cdef double lam[NX]
    cdef double lam2[NX]
    memcpy(X, x0, NX * sizeof(double))
    for t in range(H):
        _step_jac(&X[t * NX], &U[t * NU], d, g, &X[(t + 1) * NX],
                  &As[t * NX * NX], &Bs[t * NX * NU])
    for t in range(H + 1):
        total += _stage_state(&X[t * NX], t, K, H + 1, refs, qdiag, w,
                              &lxs[t * NX], &lxxs[t * NX])
    memcpy(lam, &lxs[H * NX], NX * sizeof(double))
    for t in range(H - 1, -1, -1):
        total += _control_cost(&U[t * NU], u_ref, qu)
        for j in range(NU):
            s = 2.0 * qu[j] * (U[t * NU + j] - u_ref[j])
            for i in range(NX):
                s += Bs[t * NX * NU + i * NU + j] * lam[i]
            G[t * NU + j] = s
        for j in range(NX):
            s = lxs[t * NX + j]
            for i in range(NX):
                s += As[t * NX * NX + i * NX + j] * lam[i]
            lam2[j] = s
        memcpy(lam, lam2, NX * sizeof(double))
    return total


def gradient(x0, U, double d, double g, refs, qdiag, w, u_ref, qu):
    """Cost and its exact gradient w.r.t. ``U`` by reverse-mode sweep."""
    cdef double[::1] x0v = _as_c(x0)
    cdef double[:, ::1] Uv = _as_c(U)
    cdef double[:, ::1] rv = _as_c(refs)
    cdef double[:, ::1] qv = _as_c(qdiag)
    cdef double[:, ::1] wv = _as_c(w)
    cdef double[::1] urv = _as_c(u_ref)
    cdef double[::1] quv = _as_c(qu)
    cdef int H = Uv.shape[0]
    cdef double[:, ::1] X = np.empty((H + 1, NX))
    cdef double[::1] As = np.empty(H * NX * NX)
    cdef double[::1] Bs = np.empty(H * NX * NU)
    cdef double[:, ::1] lxs = np.empty((H + 1, NX))
    cdef double[:, ::1] lxxs = np.empty((H + 1, NX))
    G = np.empty((H, NU))
    cdef double[:, ::1] Gv = G
    cdef double total = _gradient(&x0v[0], &Uv[0, 0], H, d, g, rv.shape[0],
                                  &rv[0, 0], &qv[0, 0], &wv[0, 0], &urv[0], &quv[0],
                                  &X[0, 0], &As[0], &Bs[0], &lxs[0, 0], &lxxs[0, 0], &Gv[0, 0])
    return total, G


cdef int _backward(int H, const double* U, const double* lo, const double* hi,
                   const double* As, const double* Bs, const double* lxs, const double* lxxs,
                   const double* u_ref, const double* qu,
                   double* ks, double* Ks, double* dV_out) noexcept nogil:
    """Riccati sweep; returns 0 if a reduced Hessian is not positive definite."""
    cdef double Vx[NX]
    cdef double Vxx[NX * NX]
    cdef double Qx[NX]
    cdef double Qu[NU]
    cdef double Qxx[NX * NX]
    cdef double Quu[NU * NU]
    cdef double Qux[NU * NX]
    cdef double VA[NX * NX]
    cdef double VB[NX * NU]
    cdef double Lf[NU * NU]
    cdef double rhs[NU]
    cdef double tmp[NX * NX]
    cdef int fidx[NU]
    cdef int nf, t, i, j, m, a, b
    cdef double s, dV = 0.0
    cdef const double* A
    cdef const double* B
    cdef double* k
    cdef double* Kt

    for i in range(NX):
        Vx[i] = lxs[H * NX + i]
        for j in range(NX):
            Vxx[i * NX + j] = lxxs[H * NX + i] if i == j else 0.0

    for t in range(H - 1, -1, -1):
        A = &As[t * NX * NX]
        B = &Bs[t * NX * NU]
        k = &ks[t * NU]
        Kt = &Ks[t * NU * NX]
        for i in range(NX):
            s = lxs[t * NX + i]
            for m in range(NX):
                s += A[m * NX + i] * Vx[m]
            Qx[i] = s
        for j in range(NU):
            s = 2.0 * qu[j] * (U[t * NU + j] - u_ref[j])
            for m in range(NX):
                s += B[m * NU + j] * Vx[m]
            Qu[j] = s
        for i in range(NX):
            for j in range(NX):
                s = 0.0
                for m in range(NX):
                    s += Vxx[i * NX + m] * A[m * NX + j]
                VA[i * NX + j] = s
            for j in range(NU):
                s = 0.0
                for m in range(NX):
                    s += Vxx[i * NX + m] * B[m * NU + j]
                VB[i * NU + j] = s
        for i in range(NX):
            for j in range(NX):
                s = lxxs[t * NX + i] if i == j else 0.0
                for m in range(NX):
                    s += A[m * NX + i] * VA[m * NX + j]
                Qxx[i * NX + j] = s
        for i in range(NU):
            for j in range(NU):
                s = 2.0 * qu[i] if i == j else 0.0
                for m in range(NX):
                    s += B[m * NU + i] * VB[m * NU + j]
                Quu[i * NU + j] = s
            for j in range(NX):
                s = 0.0
                for m in range(NX):
                    s += B[m * NU + i] * VA[m * NX + j]
                Qux[i * NX + j] = s

        nf = 0
        for j in range(NU):
            if not ((U[t * NU + j] >= hi[j] and Qu[j] < 0.0) or
                    (U[t * NU + j] <= lo[j] and Qu[j] > 0.0)):
                fidx[nf] = j
                nf += 1
        for j in range(NU):
            k[j] = 0.0
            for i in range(NX):
                Kt[j * NX + i] = 0.0
        if nf > 0:
            for a in range(nf):
                for b in range(nf):
                    Lf[a * nf + b] = Quu[fidx[a] * NU + fidx[b]]
            if not _cholesky(Lf, nf):
                return 0
            for a in range(nf):
                rhs[a] = Qu[fidx[a]]
            _chol_solve(Lf, nf, rhs)
            for a in range(nf):
                k[fidx[a]] = -rhs[a]
            for i in range(NX):
                for a in range(nf):
                    rhs[a] = Qux[fidx[a] * NX + i]
                _chol_solve(Lf, nf, rhs)
                for a in range(nf):
                    Kt[fidx[a] * NX + i] = -rhs[a]

        for j in range(NU):
            dV += k[j] * Qu[j]
        # Vx = Qx + K^T Quu k + K^T Qu + Qux^T k
        for i in range(NX):
            s = Qx[i]
            for j in range(NU):
                s += Kt[j * NX + i] * Qu[j] + Qux[j * NX + i] * k[j]
                for m in range(NU):
                    s += Kt[j * NX + i] * Quu[j * NU + m] * k[m]
            Vx[i] = s
        # Vxx = Qxx + K^T Quu K + K^T Qux + Qux^T K
        for j in range(NU):
            for i in range(NX):
                s = 0.0
                for m in range(NU):
                    s += Quu[j * NU + m] * Kt[m * NX + i]
                tmp[j * NX + i] = s
        for i in range(NX):
            for j in range(NX):
                s = Qxx[i * NX + j]
                for m in range(NU):
                    s += (Kt[m * NX + i] * tmp[m * NX + j]
                          + Kt[m * NX + i] * Qux[m * NX + j]
                          + Qux[m * NX + i] * Kt[m * NX + j])
                Vxx[i * NX + j] = s
        for i in range(NX):
            for j in range(i + 1, NX):
                s = 0.5 * (Vxx[i * NX + j] + Vxx[j * NX + i])
                Vxx[i * NX + j] = s
                Vxx[j * NX + i] = s
    dV_out[0] = dV
    return 1


def solve(x0, U0, double d, double g, lo, hi, refs, qdiag, w, u_ref, qu,
          int max_iter=50, double tol=1e-4, double rtol=0.0, double armijo=1e-4,
          int max_halvings=12):
    """Box-constrained single-shooting solve; see ``_kernels_py.solve``."""
    cdef double[::1] x0v = _as_c(x0)
    cdef double[::1] lov = _as_c(lo)
    cdef double[::1] hiv = _as_c(hi)
    cdef double[:, ::1] rv = _as_c(refs)
    cdef double[:, ::1] qv = _as_c(qdiag)
    cdef double[:, ::1] wv = _as_c(w)
    cdef double[::1] urv = _as_c(u_ref)
    cdef double[::1] quv = _as_c(qu)
    cdef int K = rv.shape[0]
    U_arr = np.clip(_as_c(U0), np.asarray(lo, float), np.asarray(hi, float))
    cdef double[:, ::1] U = U_arr
    cdef int H = U.shape[0]
    X_arr = np.empty((H + 1, NX))
    Xn_arr = np.empty((H + 1, NX))
    Un_arr = np.empty((H, NU))
    cdef double[:, ::1] X = X_arr
    cdef double[:, ::1] Xn = Xn_arr
    cdef double[:, ::1] Un = Un_arr
    cdef double[::1] As = np.empty(H * NX * NX)
    cdef double[::1] Bs = np.empty(H * NX * NU)
    cdef double[:, ::1] lxs = np.empty((H + 1, NX))
    cdef double[:, ::1] lxxs = np.empty((H + 1, NX))
    cdef double[:, ::1] G = np.empty((H, NU))
    cdef double[::1] ks = np.zeros(H * NU)
    cdef double[::1] Ks = np.zeros(H * NU * NX)
    history = []
    pg_history = []
    cdef double J, Jn = 0.0, alpha, pg, dV, dec, gmax, un
    cdef int it = 0, t, j, i, h, accepted, ok, converged = 0, small

    _rollout(&x0v[0], &U[0, 0], H, d, g, &X[0, 0])
    J = _traj_cost(&X[0, 0], &U[0, 0], H, K, &rv[0, 0], &qv[0, 0], &wv[0, 0], &urv[0], &quv[0])
    if not isfinite(J):
        raise FloatingPointError("non-finite initial cost")
    history.append(J)
    while True:
        with nogil:
            _gradient(&x0v[0], &U[0, 0], H, d, g, K, &rv[0, 0], &qv[0, 0], &wv[0, 0],
                      &urv[0], &quv[0], &X[0, 0], &As[0], &Bs[0], &lxs[0, 0], &lxxs[0, 0],
                      &G[0, 0])
            pg = 0.0
            gmax = 0.0
            for t in range(H):
                for j in range(NU):
                    un = fabs(_clip(U[t, j] - G[t, j], lov[j], hiv[j]) - U[t, j])
                    if un > pg:
                        pg = un
                    if fabs(G[t, j]) > gmax:
                        gmax = fabs(G[t, j])
        pg_history.append(pg)
        if pg < tol:
            converged = 1
            break
        if it >= max_iter:
            break
        it += 1
        accepted = 0
        with nogil:
            ok = _backward(H, &U[0, 0], &lov[0], &hiv[0], &As[0], &Bs[0], &lxs[0, 0],
                           &lxxs[0, 0], &urv[0], &quv[0], &ks[0], &Ks[0], &dV)
            if ok and dV < 0.0:
                alpha = 1.0
                for h in range(max_halvings):
                    memcpy(&Xn[0, 0], &x0v[0], NX * sizeof(double))
                    for t in range(H):
                        for j in range(NU):
                            un = U[t, j] + alpha * ks[t * NU + j]
                            for i in range(NX):
                                un += Ks[t * NU * NX + j * NX + i] * (Xn[t, i] - X[t, i])
                            Un[t, j] = _clip(un, lov[j], hiv[j])
                        _step(&Xn[t, 0], &Un[t, 0], d, g, &Xn[t + 1, 0])
                    Jn = _traj_cost(&Xn[0, 0], &Un[0, 0], H, K, &rv[0, 0], &qv[0, 0],
                                    &wv[0, 0], &urv[0], &quv[0])
                    if isfinite(Jn) and Jn <= J + armijo * alpha * dV:
                        accepted = 1
                        break
                    alpha *= 0.5
            if not accepted:
                alpha = 1.0 / (gmax if gmax > 1.0 else 1.0)
                for h in range(max_halvings + 8):
                    dec = 0.0
                    for t in range(H):
                        for j in range(NU):
                            Un[t, j] = _clip(U[t, j] - alpha * G[t, j], lov[j], hiv[j])
                            dec += G[t, j] * (U[t, j] - Un[t, j])
                    _rollout(&x0v[0], &Un[0, 0], H, d, g, &Xn[0, 0])
                    Jn = _traj_cost(&Xn[0, 0], &Un[0, 0], H, K, &rv[0, 0], &qv[0, 0],
                                    &wv[0, 0], &urv[0], &quv[0])
                    if isfinite(Jn) and Jn <= J - armijo * dec and Jn < J:
                        accepted = 1
                        break
                    alpha *= 0.5
        if not accepted:
            history.append(J)
            break
        small = J - Jn <= rtol * fabs(J)
        U[:, :] = Un
        X[:, :] = Xn
        J = Jn
        history.append(J)
        if small:
            break
    return U_arr, X_arr, J, it, bool(converged), np.array(history), np.array(pg_history)
