"""Delta sets: norm balls that, intersected with a reduced constraint set, are
guaranteed to stay inside the full state constraint set.

A ball is placed inside the *complement* polytope ``X_c`` (the rows the reduced
set does not carry). Since every row of ``X`` is either in the reduced set or in
``X_c``, ``X_r ∩ ball ⊆ X``. The largest admissible radius follows from the
support function of the ball: ``max_{|d| <= r} C_j d = r * ||C_j||_*``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Literal

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.optimize import linprog

from .errors import ConfigError, InvariantBreach
from .ltimodel import LtiModel
from .polytope import DEFAULT_TOL, Polytope
from .reduction import complement_indices, horizon_indices, selection_mask

log = logging.getLogger(__name__)

Norm = Literal["inf", "2"]
RADIUS_CAP = 1e6


@dataclass(frozen=True, eq=False)
class DeltaSet:
    """Ball ``{z : ||z - center||_norm <= radius}``; radius 0 is the singleton."""

    center: NDArray[np.float64]
    radius: float
    norm: Norm = "inf"

    def __post_init__(self):
        if self.radius < 0:
            raise ConfigError("radius must be nonnegative")
        if self.norm not in ("inf", "2"):
            raise ConfigError(f"unsupported norm {self.norm!r}")
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))

    def contains(self, z: ArrayLike, tol: float = DEFAULT_TOL):
        d = np.asarray(z, dtype=float) - self.center
        ord_ = np.inf if self.norm == "inf" else 2
        return np.linalg.norm(d, ord=ord_, axis=-1) <= self.radius + tol

    def as_polytope(self) -> Polytope:
        """The ∞-ball as 2n box rows (x_i <= c_i + r, -x_i <= -c_i + r)."""
        if self.norm != "inf":
            raise ConfigError("only infinity-norm delta sets have a linear description")
        c, r = self.center, self.radius
        return Polytope.from_box(c - r, c + r)


@dataclass(frozen=True, eq=False)
class DeltaTube:
    """Delta sets for stages 1..N-1 of the next problem."""

    sets: tuple[DeltaSet, ...]

    def __len__(self):
        return len(self.sets)

    def __iter__(self):
        return iter(self.sets)

    def __getitem__(self, i):
        return self.sets[i]

    @property
    def radii(self) -> NDArray:
        return np.array([d.radius for d in self.sets])


def _dual_norms(C: NDArray, norm: Norm) -> NDArray:
    return np.abs(C).sum(axis=1) if norm == "inf" else np.linalg.norm(C, axis=1)


def max_ball_radius(center: ArrayLike, Xc: Polytope, norm: Norm = "inf", cap: float = RADIUS_CAP) -> float:
    """Largest ``r <= cap`` with ``ball(center, r) ⊆ Xc``; 0 if ``center`` violates ``Xc``."""
    center = np.asarray(center, dtype=float)
    if center.shape != (Xc.dim,):
        raise ConfigError("center dimension mismatch")
    if Xc.n_rows == 0:
        return float(cap)
    r = np.min(Xc.slack(center) / _dual_norms(Xc.C, norm))
    return float(min(max(r, 0.0), cap))


def _radii(centers: NDArray, Xc_C: NDArray, Xc_b: NDArray, norm: Norm, cap: float) -> NDArray:
    if Xc_C.shape[0] == 0:
        return np.full(len(centers), float(cap))
    r = ((Xc_b - centers @ Xc_C.T) / _dual_norms(Xc_C, norm)).min(axis=1)
    return np.clip(r, 0.0, cap)


def build_tube(
    plan: ArrayLike,
    X: Polytope,
    margins: ArrayLike,
    norm: Norm = "inf",
    per_stage: bool = False,
    cap: float = RADIUS_CAP,
    tol: float = DEFAULT_TOL,
    exact: bool = False,
) -> DeltaTube:
    """Delta sets centered at ``plan[1:]`` (the previous plan's states 2..N).

    With ``per_stage=False`` every ball is fitted against the complement of the
    rows selected at all of stages 2..N; otherwise each ball is fitted against
    the complement of its own center's selection.

    ``exact=True`` (union mode only) fits against the rows selected at *no*
    stage instead. That is enough when the reduced set carries the union of the
    selections, and it avoids zero radii at stages that rest on a row selected
    elsewhere in the plan but not everywhere.
    """
    plan = np.atleast_2d(np.asarray(plan, dtype=float))
    if len(plan) < 2:
        raise ConfigError("plan must contain at least two states")
    inside = X.contains(plan, tol)
    if not np.all(inside):
        bad = int(np.flatnonzero(~inside)[0]) + 1
        raise InvariantBreach(f"plan state {bad} lies outside X")
    centers = plan[1:]
    if per_stage:
        mask = selection_mask(centers, X, margins)
        radii = np.empty(len(centers))
        for i, c in enumerate(centers):
            comp = ~mask[i]
            radii[i] = _radii(c[None], X.C[comp], X.b[comp], norm, cap)[0]
    else:
        stages = range(2, len(plan) + 1)
        if exact:
            comp = np.setdiff1d(np.arange(X.n_rows), horizon_indices(plan, X, margins, stages))
        else:
            comp = complement_indices(plan, X, margins, stages)
        radii = _radii(centers, X.C[comp], X.b[comp], norm, cap)
    return DeltaTube(tuple(DeltaSet(c, float(r), norm) for c, r in zip(centers, radii)))


def min_violation_input(x: ArrayLike, model: LtiModel, U: Polytope, X: Polytope) -> tuple[NDArray, float]:
    """Input in ``U`` minimizing the worst violation of ``X`` by ``A x + B u``.

    Returns ``(u, t)`` with ``t`` the optimal worst-row value of ``C(Ax+Bu) - b``
    (negative when the successor can be placed strictly inside ``X``).
    """
    x = np.asarray(x, dtype=float)
    m = model.m
    free = X.C @ (model.A @ x) - X.b
    CB = X.C @ model.B
    # variables (u, t): minimize t subject to CB u - t <= -free, U rows, t >= -1
    A_ub = np.block([[CB, -np.ones((X.n_rows, 1))], [U.C, np.zeros((U.n_rows, 1))]])
    b_ub = np.concatenate([-free, U.b])
    c = np.zeros(m + 1)
    c[-1] = 1.0
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=[(None, None)] * m + [(-1.0, None)], method="highs")
    if res.status != 0:
        raise ConfigError(f"one-step feasibility program failed: {res.message}")
    return res.x[:m], float(res.x[-1])


def delta_for_scheme_a(
    x: ArrayLike,
    model: LtiModel,
    U: Polytope,
    X: Polytope,
    margins: ArrayLike,
    candidate_input: ArrayLike | None = None,
    norm: Norm = "inf",
    cap: float = RADIUS_CAP,
    tol: float = DEFAULT_TOL,
) -> tuple[NDArray, DeltaSet]:
    """Admissible input ``ū`` and the ball around ``f(x, ū)`` for the first stage.

    ``candidate_input`` (typically the time-shifted previous plan) is used if it
    is admissible and keeps the successor in ``X``; otherwise a one-step
    minimum-violation LP supplies ``ū``.
    """
    x = np.asarray(x, dtype=float)
    ubar = None
    if candidate_input is not None:
        cand = np.atleast_1d(np.asarray(candidate_input, dtype=float))
        if U.contains(cand, tol) and X.contains(model.step(x, cand), tol):
            ubar = cand
    if ubar is None:
        ubar, worst = min_violation_input(x, model, U, X)
        if worst > tol:
            raise ConfigError(
                f"no admissible input keeps the successor in X (worst violation {worst:.3g}); "
                "X is not controlled invariant at this state"
            )
        log.debug("scheme A: fallback input %s (worst row value %.3g)", ubar, worst)
    center = model.step(x, ubar)
    comp = ~selection_mask(x, X, margins)[0]
    r = _radii(center[None], X.C[comp], X.b[comp], norm, cap)[0]
    return ubar, DeltaSet(center, float(r), norm)
