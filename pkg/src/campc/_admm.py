"""Compiled inner loop of the operator-splitting QP iteration."""

import numpy as np
from numba import njit


@njit(cache=True)
def admm_sweeps(A, b, Kinv, g, x, z, y, atw, dy, rho, sigma, alpha, n_iter):  # pragma: no cover
    """Run ``n_iter`` relaxed ADMM iterations in place on the scaled problem

        minimize 0.5 x'Hx + g'x  subject to  A x <= b

    with splitting ``z = A x``. ``Kinv`` is the inverse of ``H + sigma I + rho A'A``
    and ``atw`` holds ``A'(rho z - y)`` for the current iterate; it is kept
    up to date so that each iteration makes a single pass over ``A``.
    ``dy`` receives the dual increment of the last iteration.
    """
    q, d = A.shape
    rhs = np.empty(d)
    xt = np.empty(d)
    inv_rho = 1.0 / rho
    for it in range(n_iter):
        for i in range(d):
            rhs[i] = sigma * x[i] - g[i] + atw[i]
        for i in range(d):
            s = 0.0
            for k in range(d):
                s += Kinv[i, k] * rhs[k]
            xt[i] = s
        for i in range(d):
            x[i] = alpha * xt[i] + (1.0 - alpha) * x[i]
            atw[i] = 0.0
        last = it == n_iter - 1
        for j in range(q):
            s = 0.0
            for k in range(d):
                s += A[j, k] * xt[k]
            zh = alpha * s + (1.0 - alpha) * z[j]
            v = zh + y[j] * inv_rho
            if v > b[j]:
                zn = b[j]
                yn = y[j] + rho * (zh - zn)
            else:
                zn = v
                yn = 0.0
            if last:
                dy[j] = yn - y[j]
            y[j] = yn
            z[j] = zn
            w = rho * zn - yn
            if w != 0.0:
                for k in range(d):
                    atw[k] += A[j, k] * w


@njit(cache=True)
def ruiz_equilibrate(H, A, iters):  # pragma: no cover
    """Ruiz equilibration of the KKT blocks: returns ``(D, E, DHD, EAD)`` with
    column scaling ``D`` and row scaling ``E`` (factors clipped to [1e-4, 1e4])."""
    d = H.shape[0]
    q = A.shape[0]
    D = np.ones(d)
    E = np.ones(q)
    Hs = H.copy()
    As = A.copy()
    col = np.empty(d)
    for _ in range(iters):
        for i in range(d):
            m = 0.0
            for k in range(d):
                v = abs(Hs[k, i])
                if v > m:
                    m = v
            col[i] = m
        for j in range(q):
            m = 0.0
            for i in range(d):
                v = abs(As[j, i])
                if v > col[i]:
                    col[i] = v
                if v > m:
                    m = v
            e = 1.0 / np.sqrt(min(max(m, 1e-4), 1e4))
            E[j] *= e
            for i in range(d):
                As[j, i] *= e
        for i in range(d):
            col[i] = 1.0 / np.sqrt(min(max(col[i], 1e-4), 1e4))
            D[i] *= col[i]
        for k in range(d):
            for i in range(d):
                Hs[k, i] *= col[k] * col[i]
        for j in range(q):
            for i in range(d):
                As[j, i] *= col[i]
    return D, E, Hs, As


@njit(cache=True)
def _eq_point(Hinv, z0, An, bn, W, nW):
    d = z0.shape[0]
    if nW == 0:
        return z0.copy(), np.zeros(0), np.zeros((d, 0))
    N = np.empty((d, nW))
    for r in range(nW):
        N[:, r] = An[W[r]]
    HN = Hinv @ N
    rhs = N.T @ z0
    for r in range(nW):
        rhs[r] -= bn[W[r]]
    lam = np.linalg.solve(N.T @ HN, rhs)
    return z0 - HN @ lam, lam, HN


@njit(cache=True)
def kkt_residuals(H, g, A, b, z, y):  # pragma: no cover
    """(stationarity, primal infeasibility, complementary slackness) ∞-norms
    of ``min 0.5 z'Hz + g'z s.t. Az <= b`` at ``(z, y)``, in one pass over ``A``."""
    d = z.shape[0]
    stat = H @ z + g
    prim = 0.0
    comp = 0.0
    for j in range(A.shape[0]):
        s = 0.0
        for k in range(d):
            s += A[j, k] * z[k]
        slack = b[j] - s
        if -slack > prim:
            prim = -slack
        yj = y[j]
        if yj != 0.0:
            c = abs(yj * slack)
            if c > comp:
                comp = c
            for k in range(d):
                stat[k] += A[j, k] * yj
    return np.abs(stat).max(), prim, comp


@njit(cache=True)
def dual_active_set(H, g, A, b, seed, max_steps, feas_tol):  # pragma: no cover
    """Goldfarb-Idnani iteration for ``min 0.5 z'Hz + g'z s.t. A z <= b``
    started from the independent, dual-feasible part of ``seed``. Rows are
    normalized internally.

    Returns ``(ok, z, duals)``; ``ok`` is false when a violated row cannot be
    satisfied (infeasible) or ``max_steps`` is exhausted.
    """
    q = A.shape[0]
    norms = np.empty(q)
    An = np.empty_like(A)
    bn = np.empty(q)
    for j in range(q):
        nrm = np.sqrt(A[j] @ A[j])
        if nrm == 0.0:
            nrm = 1.0
        norms[j] = nrm
        An[j] = A[j] / nrm
        bn[j] = b[j] / nrm
    Hinv = np.linalg.inv(H)
    z0 = -(Hinv @ g)
    duals = np.zeros(q)
    d = z0.shape[0]
    W = np.empty(d, np.int64)
    nW = 0
    Qb = np.zeros((d, d))
    for s in range(seed.shape[0]):
        if nW == d:
            break
        j = seed[s]
        v = An[j].copy()
        for r in range(nW):
            v -= (Qb[r] @ An[j]) * Qb[r]
        nv = np.sqrt(v @ v)
        if nv > 1e-6:
            Qb[nW] = v / nv
            W[nW] = j
            nW += 1
    z, lam, HN = _eq_point(Hinv, z0, An, bn, W, nW)
    while nW > 0 and lam.min() < 0.0:
        k = np.argmin(lam)
        for r in range(k, nW - 1):
            W[r] = W[r + 1]
        nW -= 1
        z, lam, HN = _eq_point(Hinv, z0, An, bn, W, nW)

    for _ in range(max_steps):
        viol = An @ z - bn
        jmax = np.argmax(viol)
        if viol[jmax] <= feas_tol:
            for r in range(nW):
                duals[W[r]] = lam[r] / norms[W[r]]
            return True, z, duals
        a = An[jmax].copy()
        lam_j = 0.0
        while True:
            Ha = Hinv @ a
            if nW > 0:
                N = np.empty((d, nW))
                for r in range(nW):
                    N[:, r] = An[W[r]]
                HN = Hinv @ N
                r_ = np.linalg.solve(N.T @ HN, HN.T @ a)
                dz = HN @ r_ - Ha
            else:
                r_ = np.zeros(0)
                dz = -Ha
            curv = -(a @ dz)
            t2 = np.inf
            if nW < d and curv > 1e-10 * (a @ Ha):
                t2 = (a @ z - bn[jmax]) / curv
            t1 = np.inf
            k = -1
            for r in range(nW):
                if r_[r] > 1e-14:
                    ratio = lam[r] / r_[r]
                    if ratio < t1:
                        t1 = ratio
                        k = r
            t = min(t1, t2)
            if not np.isfinite(t):
                return False, z, duals
            if np.isfinite(t2):
                z = z + t * dz
            lam = lam - t * r_
            lam_j += t
            if t2 <= t1:
                W[nW] = jmax
                lam = np.append(lam, lam_j)
                nW += 1
                break
            for r in range(k, nW - 1):
                W[r] = W[r + 1]
            lam = np.concatenate((lam[:k], lam[k + 1:]))
            nW -= 1
    return False, z, duals


@njit(cache=True)
def kkt_inverse(Hs, gram, sigma, rho):  # pragma: no cover
    return np.linalg.inv(Hs + sigma * np.eye(Hs.shape[0]) + rho * gram)
