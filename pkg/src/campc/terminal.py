"""Terminal ingredients: LQR gain/cost and a positively invariant terminal set.

The terminal set is the maximal positively invariant set of the closed loop
``x+ = (A - BK) x`` inside ``X ∩ {x : -Kx ∈ U}``, built by the usual
preimage iteration. It is invariant under ``u = -Kx`` and therefore
controlled invariant for the plant with input set ``U``.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .errors import CampcError, ConfigError
from .ltimodel import LtiModel
from .polytope import DEFAULT_TOL, Polytope, remove_redundant, support

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class TerminalIngredients:
    K: NDArray[np.float64]
    P_lqr: NDArray[np.float64]
    X_T: Polytope


def riccati_residual(model: LtiModel, Q, R, P) -> float:
    A, B = model.A, model.B
    BtPA = B.T @ P @ A
    rhs = Q + A.T @ P @ A - BtPA.T @ np.linalg.solve(R + B.T @ P @ B, BtPA)
    return float(np.abs(P - rhs).max())


def solve_dare(model: LtiModel, Q, R, tol: float = 1e-12, max_iter: int = 100_000) -> tuple[NDArray, NDArray]:
    """Discrete Riccati equation by fixed-point iteration of the Riccati map.

    Returns ``(K, P)`` with the control law ``u = -K x``.
    """
    A, B = model.A, model.B
    Q = np.array(Q, dtype=float, ndmin=2)
    R = np.array(R, dtype=float, ndmin=2)
    P = Q.copy()
    for _ in range(max_iter):
        BtPA = B.T @ P @ A
        # a diverging iteration overflows; that is caught by the finiteness test below
        with np.errstate(over="ignore", invalid="ignore"):
            P_next = Q + A.T @ P @ A - BtPA.T @ np.linalg.solve(R + B.T @ P @ B, BtPA)
        P_next = 0.5 * (P_next + P_next.T)
        if not np.all(np.isfinite(P_next)):
            break
        step = np.abs(P_next - P).max()
        P = P_next
        if step <= tol:
            K = np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
            return K, P
    raise CampcError("Riccati iteration did not converge; (A, B) may not be stabilizable")


def _input_rows(K: NDArray, U: Polytope) -> Polytope:
    # -K x ∈ U  <=>  (-C_u K) x <= b_u; zero rows are vacuous unless b_u < 0
    C = -U.C @ K
    zero = np.all(C == 0.0, axis=1)
    if np.any(U.b[zero] < 0):
        raise ConfigError("input set excludes u = 0 in a direction K cannot reach")
    return Polytope(C[~zero], U.b[~zero])


def max_invariant_set(
    model: LtiModel,
    K: NDArray,
    X: Polytope,
    U: Polytope,
    max_iter: int = 1000,
    tol: float = DEFAULT_TOL,
) -> Polytope:
    """Maximal positively invariant set of ``x+ = (A - BK) x`` in ``X ∩ {-Kx ∈ U}``.

    Iterates ``Ω_{t+1} = Ω_t ∩ {x : H (A-BK)^{t+1} x <= h}`` where ``(H, h)``
    describe the initial set; only rows that cut the current set are added,
    and the iteration stops once a full sweep adds nothing.
    """
    A_cl = model.A - model.B @ K
    if np.max(np.abs(np.linalg.eigvals(A_cl))) >= 1.0:
        raise ConfigError("closed loop A - BK is not Schur stable")
    base = remove_redundant(X.intersect(_input_rows(K, U)), tol)
    H, h = base.C, base.b
    C_cur, b_cur = H.copy(), h.copy()
    M = np.eye(model.n)
    converged = False
    for t in range(1, max_iter + 1):
        M = A_cl @ M
        cand = H @ M
        added = 0
        for r, hr in zip(cand, h):
            nrm = np.linalg.norm(r)
            if nrm == 0.0:
                if hr < 0:
                    raise ConfigError("invariant set is empty")
                continue
            if support(C_cur, b_cur, r) > hr + tol * nrm:
                added += 1
                C_cur = np.vstack([C_cur, r])
                b_cur = np.append(b_cur, hr)
        if not added:
            converged = True
            log.debug("invariant set converged after %d sweeps", t)
            break
        if t % 20 == 0:
            P = remove_redundant(Polytope(C_cur, b_cur), tol)
            C_cur, b_cur = P.C, P.b
    if not converged:
        warnings.warn(f"invariant set iteration stopped after {max_iter} sweeps without convergence")
    return remove_redundant(Polytope(C_cur, b_cur), tol)


def check_invariance(
    model: LtiModel,
    K: NDArray,
    S: Polytope,
    n_samples: int,
    U: Polytope | None = None,
    seed: int = 0,
    tol: float = DEFAULT_TOL,
) -> tuple[bool, NDArray | None]:
    """Sampling-based one-step invariance check of ``S`` under ``u = -Kx``.

    Samples are drawn uniformly from ``S`` by rejection from its bounding box.
    Returns ``(ok, witness)`` where ``witness`` is a sample that leaves ``S``
    (or violates ``U``) when ``ok`` is false.
    """
    lb, ub = S.bounding_box()
    rng = np.random.default_rng(seed)
    pts = np.empty((0, S.dim))
    while len(pts) < n_samples:
        cand = rng.uniform(lb, ub, size=(max(2 * n_samples, 64), S.dim))
        pts = np.vstack([pts, cand[S.contains(cand)]])
    pts = pts[:n_samples]
    A_cl = model.A - model.B @ K
    nxt = pts @ A_cl.T
    bad = ~S.contains(nxt, tol)
    if U is not None:
        bad |= ~U.contains(-pts @ K.T, tol)
    if np.any(bad):
        return False, pts[np.flatnonzero(bad)[0]]
    return True, None


def certify_subset(inner: Polytope, outer: Polytope, tol: float = DEFAULT_TOL) -> NDArray[np.intp]:
    """Rows of ``outer`` not implied by ``inner`` (empty array ⇔ inner ⊆ outer)."""
    bad = [j for j, (c, bj) in enumerate(zip(outer.C, outer.b)) if support(inner.C, inner.b, c) > bj + tol]
    return np.array(bad, dtype=np.intp)


def synthesize_terminal(
    model: LtiModel,
    X: Polytope,
    U: Polytope,
    Q_gain,
    R_gain,
    base: Polytope | None = None,
    max_rounds: int = 10,
) -> TerminalIngredients:
    """LQR gain plus invariant terminal set inside ``X``.

    The invariant-set iteration runs on ``base`` (default ``X`` itself); a
    compact base with few rows keeps the iteration cheap when ``X`` has many
    facets. Rows of ``X`` the result still violates are added to the base and
    the iteration repeated, so the returned set is certified to lie in ``X``.
    """
    K, P = solve_dare(model, Q_gain, R_gain)
    work = X if base is None else base
    for round_ in range(max_rounds):
        X_T = max_invariant_set(model, K, work, U)
        bad = certify_subset(X_T, X)
        log.info("terminal set round %d: %d rows, %d uncovered X rows", round_, X_T.n_rows, len(bad))
        if not len(bad):
            return TerminalIngredients(K, P, X_T)
        work = work.intersect(X.row_subset(bad))
    raise CampcError("terminal set could not be certified inside X")
