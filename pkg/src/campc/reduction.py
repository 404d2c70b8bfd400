"""Safety margins and adaptive selection of the state constraints that enter
the online problem.

A row ``j`` is selected at state ``x`` when ``x`` violates the tightened
("safety") version of that row, ``C_j x > b_j - alpha_j``. The reduced set
keeps only selected rows, so it always contains the original set.
"""

from __future__ import annotations

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import ConfigError
from .polytope import IndexSet, Polytope


def uniform_margins(X: Polytope, distance: float) -> NDArray:
    """Margins that tighten every facet of ``X`` by the same Euclidean distance."""
    if not distance > 0:
        raise ConfigError("margin distance must be positive")
    return distance * np.linalg.norm(X.C, axis=1)


def _check_margins(X: Polytope, margins) -> NDArray:
    margins = np.asarray(margins, dtype=float)
    if margins.shape != (X.n_rows,):
        raise ConfigError("one margin per row of X expected")
    if np.any(margins < 0):
        raise ConfigError("margins must be nonnegative")
    return margins


def selection_mask(states: ArrayLike, X: Polytope, margins: ArrayLike) -> NDArray[np.bool_]:
    """Boolean (k, n_rows) matrix: row ``j`` selected at state ``k``."""
    margins = _check_margins(X, margins)
    states = np.atleast_2d(np.asarray(states, dtype=float))
    if states.shape[1] != X.dim:
        raise ConfigError("state dimension mismatch")
    return states @ X.C.T > X.b - margins


def select_indices(x: ArrayLike, X: Polytope, margins: ArrayLike) -> IndexSet:
    x = np.asarray(x, dtype=float)
    if x.shape != (X.dim,):
        raise ConfigError("state dimension mismatch")
    return np.flatnonzero(selection_mask(x, X, margins)[0])


def _stage_rows(plan, stages) -> NDArray:
    plan = np.atleast_2d(np.asarray(plan, dtype=float))
    stages = np.asarray(list(stages), dtype=np.intp)
    if stages.size == 0:
        raise ConfigError("empty stage range")
    if stages.min() < 1 or stages.max() > len(plan):
        raise ConfigError(f"stages must lie in 1..{len(plan)}")
    return plan[stages - 1]


def horizon_indices(plan: ArrayLike, X: Polytope, margins: ArrayLike, stages) -> IndexSet:
    """Union of the per-stage selections over ``stages`` (1-based positions in ``plan``).

    Intersecting the per-stage reduced sets keeps every row selected anywhere.
    """
    mask = selection_mask(_stage_rows(plan, stages), X, margins)
    return np.flatnonzero(mask.any(axis=0))


def complement_indices(plan: ArrayLike, X: Polytope, margins: ArrayLike, stages) -> IndexSet:
    """All rows except those selected at *every* stage.

    This is larger than the exact complement of :func:`horizon_indices`; the
    rows selected at some but not all stages end up on both sides.
    """
    mask = selection_mask(_stage_rows(plan, stages), X, margins)
    return np.flatnonzero(~mask.all(axis=0))
