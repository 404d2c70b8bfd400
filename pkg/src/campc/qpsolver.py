"""Dense convex QP solver for the condensed MPC problems.

Problems have the form::

    minimize    0.5 z'Hz + g'z
    subject to  A z <= b

with ``H`` positive definite. The solver runs a relaxed ADMM iteration on a
Ruiz-equilibrated copy of the problem and periodically tries to *polish*: it
guesses the active set from the current iterate, refines it with a dual
active-set iteration on equality constrained KKT systems, and accepts the
polished point when its KKT residuals beat the iterate's. Optimality is always certified on the
unscaled problem.

A combinatorial oracle, :func:`brute_force_solve`, enumerates active sets of
small problems and is used to cross-check :func:`solve`.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from . import _admm
from ._admm import admm_sweeps, dual_active_set, kkt_inverse, ruiz_equilibrate
from .errors import ConfigError

OPTIMAL = "optimal"
PRIMAL_INFEASIBLE = "primal_infeasible"
MAX_ITER = "max_iter"


@dataclass
class QpSettings:
    """Solver knobs. ``tol`` bounds every KKT residual (∞-norm, unscaled)."""

    tol: float = 1e-8
    max_iter: int = 20_000
    act_tol: float = 1e-6
    scaling: bool = True
    scaling_iter: int = 10
    rho: float = 0.1
    sigma: float = 1e-6
    alpha: float = 1.6
    check_every: int = 25
    adaptive_rho: bool = True
    polish: bool = True
    polish_steps: int = 200
    eps_pinf: float = 1e-6


@dataclass(frozen=True, eq=False)
class QpProblem:
    H: NDArray[np.float64]
    g: NDArray[np.float64]
    A_ineq: NDArray[np.float64]
    b_ineq: NDArray[np.float64]

    def __post_init__(self):
        H = np.array(self.H, dtype=float, ndmin=2)
        g = np.array(self.g, dtype=float).ravel()
        d = g.size
        A = np.array(self.A_ineq, dtype=float).reshape(-1, d)
        b = np.array(self.b_ineq, dtype=float).ravel()
        if H.shape != (d, d):
            raise ConfigError(f"H must be {d}x{d}")
        if A.shape[0] != b.size:
            raise ConfigError("A_ineq and b_ineq row counts differ")
        if np.max(np.abs(H - H.T), initial=0.0) > 1e-10 * max(1.0, np.abs(H).max()):
            raise ConfigError("H must be symmetric")
        try:
            np.linalg.cholesky(H)
        except np.linalg.LinAlgError:
            raise ConfigError("H must be positive definite") from None
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "A_ineq", np.ascontiguousarray(A))
        object.__setattr__(self, "b_ineq", b)

    @property
    def n_var(self) -> int:
        return self.g.size

    @property
    def n_con(self) -> int:
        return self.b_ineq.size

    def objective(self, z) -> float:
        z = np.asarray(z, dtype=float)
        return float(0.5 * z @ self.H @ z + self.g @ z)


@dataclass
class QpSolution:
    z: NDArray[np.float64]
    duals: NDArray[np.float64]
    status: str
    iterations: int = 0
    solve_time: float = 0.0
    active_set: NDArray[np.intp] = field(default_factory=lambda: np.zeros(0, dtype=np.intp))
    residuals: tuple[float, float, float] = (np.inf, np.inf, np.inf)
    polished: bool = False

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


def _residuals(p: QpProblem, z, duals, Az=None) -> tuple[float, float, float]:
    if Az is None:
        Az = p.A_ineq @ z
    stat = p.H @ z + p.g + p.A_ineq.T @ duals
    slack = p.b_ineq - Az
    prim = np.max(-slack, initial=0.0)
    comp = np.max(np.abs(duals * slack), initial=0.0)
    return float(np.max(np.abs(stat), initial=0.0)), float(max(prim, 0.0)), float(comp)


def _kkt(p: QpProblem, z, duals) -> tuple[float, float, float]:
    # compiled single-pass twin of _residuals, used inside the solve loop
    st, pr, co = _admm.kkt_residuals(p.H, p.g, p.A_ineq, p.b_ineq, z, duals)
    return float(st), float(pr), float(co)


def kkt_residuals(p: QpProblem, s: QpSolution) -> tuple[float, float, float]:
    """(stationarity, primal infeasibility, complementary slackness), ∞-norms."""
    z = np.asarray(s.z, dtype=float)
    duals = np.asarray(s.duals, dtype=float)
    if z.shape != (p.n_var,) or duals.shape != (p.n_con,):
        raise ConfigError("solution dimensions do not match the problem")
    return _residuals(p, z, duals)


def _ruiz(H, g, A, iters):
    D, E, Hs, As = ruiz_equilibrate(H, A, iters)
    gs = D * g
    c = 1.0 / np.clip(max(np.abs(Hs).max(axis=0).mean(), np.abs(gs).max(initial=0.0)), 1e-4, 1e4)
    return D, E, c, c * Hs, c * gs, As


def _polish(p: QpProblem, seed: NDArray[np.intp], max_steps: int, feas_tol: float = 1e-10):
    """Exact solve by a dual active-set iteration seeded with ``seed`` rows.

    The seed (ordered by decreasing dual estimate) is pruned to a linearly
    independent set with nonnegative multipliers; the Goldfarb-Idnani
    iteration then adds the most violated row until none is violated, dropping
    rows whose multipliers would turn negative. Near-parallel facets, which
    make a plain equality solve on the guessed rows inconsistent, are handled
    by the dependent-row (pure dual) step. Returns ``None`` on failure.
    """
    ok, z, duals = dual_active_set(p.H, p.g, p.A_ineq, p.b_ineq, seed.astype(np.int64), max_steps, feas_tol)
    return (z, duals) if ok else None


def _unconstrained(p: QpProblem, t0: float) -> QpSolution:
    z = -np.linalg.solve(p.H, p.g)
    duals = np.zeros(0)
    return QpSolution(z, duals, OPTIMAL, 0, time.perf_counter() - t0, residuals=_residuals(p, z, duals))


def solve(p: QpProblem, warm: QpSolution | None = None, settings: QpSettings | None = None) -> QpSolution:
    """Solve ``p``; ``warm`` seeds the primal iterate and, when its length
    matches, the dual iterate."""
    s = settings or QpSettings()
    t0 = time.perf_counter()
    d, q = p.n_var, p.n_con
    if q == 0:
        return _unconstrained(p, t0)

    if s.scaling:
        D, E, c, Hs, gs, As = _ruiz(p.H, p.g, p.A_ineq, s.scaling_iter)
    else:
        D, E, c, Hs, gs, As = np.ones(d), np.ones(q), 1.0, p.H.copy(), p.g.copy(), p.A_ineq.copy()
    As = np.ascontiguousarray(As)
    bs = E * p.b_ineq

    x = np.zeros(d)
    y = np.zeros(q)
    if warm is not None:
        x = np.asarray(warm.z, dtype=float) / D
        if warm.duals is not None and np.shape(warm.duals) == (q,):
            y = c * np.asarray(warm.duals, dtype=float) / E
    z = np.minimum(As @ x, bs)
    dy = np.zeros(q)
    rho = s.rho
    gram = As.T @ As
    def factor(rho):
        return kkt_inverse(Hs, gram, s.sigma, rho)

    Kinv = factor(rho)
    atw = As.T @ (rho * z - y)

    best_z, best_y, best_res, polished = None, None, (np.inf,) * 3, False
    last_tried = None
    status = MAX_ITER
    it = 0

    def try_polish():
        nonlocal best_z, best_y, best_res, polished, last_tried
        active = np.flatnonzero(bs - z < y)
        key = active.tobytes()
        if key == last_tried:
            return False
        last_tried = key
        seed = active[np.argsort(-(y[active] * E[active]), kind="stable")] if len(active) > 1 else active
        out = _polish(p, seed, s.polish_steps + 2 * len(seed))
        if out is None:
            return False
        zp, yp = out
        res = _kkt(p, zp, yp)
        if max(res) < max(best_res):
            best_z, best_y, best_res, polished = zp, yp, res, True
        return max(res) <= s.tol

    if warm is not None and s.polish and np.any(y):
        if try_polish():
            status = OPTIMAL

    while status != OPTIMAL and it < s.max_iter:
        n = min(s.check_every, s.max_iter - it)
        admm_sweeps(As, bs, Kinv, gs, x, z, y, atw, dy, rho, s.sigma, s.alpha, n)
        it += n

        xu = D * x
        yu = E * y / c
        if s.polish and try_polish():
            status = OPTIMAL
            break
        res = _kkt(p, xu, yu)
        if max(res) < max(best_res):
            best_z, best_y, best_res, polished = xu, yu, res, False
        if max(res) <= s.tol:
            status = OPTIMAL
            break

        dyp = np.maximum(dy, 0.0)
        nrm = dyp.max()
        if nrm > 1e-14:
            if np.abs(As.T @ dyp).max() <= s.eps_pinf * nrm and bs @ dyp < -s.eps_pinf * nrm:
                status = PRIMAL_INFEASIBLE
                best_z, best_y = xu, yu
                break

        if s.adaptive_rho:
            Asx = As @ x
            Asy = As.T @ y
            Hx = Hs @ x
            pr = np.abs(Asx - z).max() / max(np.abs(Asx).max(), np.abs(z).max(), 1e-30)
            du = np.abs(Hx + gs + Asy).max() / max(np.abs(Hx).max(), np.abs(Asy).max(), np.abs(gs).max(), 1e-30)
            if pr > 0 and du > 0:
                new_rho = float(np.clip(rho * np.sqrt(pr / du), 1e-6, 1e6))
                if new_rho > 5 * rho or new_rho < rho / 5:
                    rho = new_rho
                    Kinv = factor(rho)
                    atw = As.T @ (rho * z - y)

    zf, yf = best_z, best_y
    if status == PRIMAL_INFEASIBLE:
        res = _residuals(p, zf, yf)
    else:
        res = best_res
    active = np.flatnonzero(np.abs(p.A_ineq @ zf - p.b_ineq) <= s.act_tol)
    return QpSolution(
        z=zf,
        duals=yf,
        status=status,
        iterations=it,
        solve_time=time.perf_counter() - t0,
        active_set=active,
        residuals=res,
        polished=polished and status == OPTIMAL,
    )


def brute_force_solve(p: QpProblem, feas_tol: float = 1e-9) -> QpSolution:
    """Exhaustive active-set enumeration (oracle for small problems only).

    Every subset of at most ``n_var`` rows is tried as the active set; the
    equality-constrained KKT system is solved, candidates violating primal
    feasibility or dual sign are discarded, and the cheapest survivor wins.
    """
    d, q = p.n_var, p.n_con
    if q > 20 or d > 6:
        raise ConfigError("brute force limited to q <= 20 and d <= 6")
    t0 = time.perf_counter()
    best = None
    tried = 0
    for k in range(0, min(d, q) + 1):
        for act in itertools.combinations(range(q), k):
            tried += 1
            act = np.array(act, dtype=np.intp)
            Aa = p.A_ineq[act]
            if k and np.linalg.matrix_rank(Aa) < k:
                continue
            K = np.block([[p.H, Aa.T], [Aa, np.zeros((k, k))]])
            try:
                sol = np.linalg.solve(K, np.concatenate([-p.g, p.b_ineq[act]]))
            except np.linalg.LinAlgError:
                continue
            z, lam = sol[:d], sol[d:]
            scale = 1.0 + np.abs(p.b_ineq).max(initial=0.0)
            if np.any(p.A_ineq @ z - p.b_ineq > feas_tol * scale) or np.any(lam < -feas_tol * (1 + np.abs(lam).max(initial=0))):
                continue
            obj = p.objective(z)
            if best is None or obj < best[0] - 1e-14:
                duals = np.zeros(q)
                duals[act] = np.maximum(lam, 0.0)
                best = (obj, z, duals)
    if best is None:
        return QpSolution(np.full(d, np.nan), np.zeros(q), PRIMAL_INFEASIBLE, tried, time.perf_counter() - t0)
    _, z, duals = best
    return QpSolution(
        z, duals, OPTIMAL, tried, time.perf_counter() - t0,
        active_set=np.flatnonzero(np.abs(p.A_ineq @ z - p.b_ineq) <= 1e-9),
        residuals=_residuals(p, z, duals),
    )
