"""Halfspace polytopes ``{x : C x <= b}`` and the geometric primitives used
throughout the package.

Everything here works on the halfspace representation only. Linear programs
(support functions, redundancy checks) are delegated to HiGHS through
:func:`scipy.optimize.linprog`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.optimize import linprog

from .errors import ConfigError, EmptySetError

DEFAULT_TOL = 1e-9

IndexSet = NDArray[np.intp]
"""Sorted, duplicate-free array of 0-based row indices into a parent polytope."""


def as_index_set(idx: ArrayLike, n_rows: int | None = None) -> IndexSet:
    """Normalize ``idx`` to a sorted unique index array, range-checked if
    ``n_rows`` is given."""
    out = np.unique(np.asarray(idx, dtype=np.intp).ravel())
    if n_rows is not None and out.size and (out[0] < 0 or out[-1] >= n_rows):
        raise IndexError(f"row index out of range [0, {n_rows})")
    return out


@dataclass(frozen=True, eq=False)
class Polytope:
    """The set ``{x : C x <= b}``.

    A polytope with zero rows is the whole space. Zero rows of ``C`` are
    rejected: they are either vacuous or make the set empty, and both cases
    are almost always a construction bug upstream.
    """

    C: NDArray[np.float64]
    b: NDArray[np.float64]

    def __post_init__(self):
        C = np.array(self.C, dtype=float, ndmin=2)
        b = np.array(self.b, dtype=float).ravel()
        if C.ndim != 2:
            raise ConfigError("C must be a matrix")
        if C.shape[0] != b.shape[0]:
            raise ConfigError(f"C has {C.shape[0]} rows but b has {b.shape[0]} entries")
        if C.shape[0] and np.any(np.all(C == 0.0, axis=1)):
            raise ConfigError("zero row in C")
        C.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "b", b)

    @classmethod
    def whole_space(cls, n: int) -> Polytope:
        return cls(np.zeros((0, n)), np.zeros(0))

    @classmethod
    def from_box(cls, lb: ArrayLike, ub: ArrayLike) -> Polytope:
        """Axis-aligned box ``lb <= x <= ub``; rows ordered (x1 <= ub1, -x1 <= -lb1, x2 <= ...)."""
        lb = np.asarray(lb, dtype=float).ravel()
        ub = np.asarray(ub, dtype=float).ravel()
        n = lb.size
        C = np.zeros((2 * n, n))
        b = np.empty(2 * n)
        for i in range(n):
            C[2 * i, i] = 1.0
            C[2 * i + 1, i] = -1.0
            b[2 * i] = ub[i]
            b[2 * i + 1] = -lb[i]
        return cls(C, b)

    @property
    def dim(self) -> int:
        return self.C.shape[1]

    @property
    def n_rows(self) -> int:
        return self.C.shape[0]

    def __repr__(self):
        return f"Polytope(dim={self.dim}, rows={self.n_rows})"

    def _check_point(self, x) -> NDArray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise ConfigError(f"point has dimension {x.shape[-1]}, polytope has {self.dim}")
        return x

    def slack(self, x: ArrayLike) -> NDArray:
        """``b - C x`` (row-wise; accepts a batch of points as rows of ``x``)."""
        x = self._check_point(x)
        return self.b - x @ self.C.T

    def contains(self, x: ArrayLike, tol: float = DEFAULT_TOL) -> bool | NDArray[np.bool_]:
        """True iff ``C_j x <= b_j + tol`` for every row. Vectorized over leading axes."""
        s = self.slack(x)
        if s.shape[-1] == 0:
            return True if s.ndim == 1 else np.ones(s.shape[:-1], dtype=bool)
        ok = np.all(s >= -tol, axis=-1)
        return bool(ok) if ok.ndim == 0 else ok

    def row_subset(self, idx: ArrayLike) -> Polytope:
        idx = np.asarray(idx, dtype=np.intp).ravel()
        if idx.size and (idx.min() < 0 or idx.max() >= self.n_rows):
            raise IndexError(f"row index out of range [0, {self.n_rows})")
        return Polytope(self.C[idx], self.b[idx])

    def tighten(self, margins: ArrayLike) -> Polytope:
        """Shift every offset inwards: ``{x : C x <= b - margins}``."""
        margins = np.broadcast_to(np.asarray(margins, dtype=float), self.b.shape)
        if np.any(margins < 0):
            raise ConfigError("margins must be nonnegative")
        return Polytope(self.C, self.b - margins)

    def intersect(self, other: Polytope) -> Polytope:
        if other.dim != self.dim:
            raise ConfigError("dimension mismatch")
        return Polytope(np.vstack([self.C, other.C]), np.concatenate([self.b, other.b]))

    def linear_map_preimage(self, M: ArrayLike) -> Polytope:
        """``{x : M x in self}``."""
        M = np.asarray(M, dtype=float)
        return Polytope(self.C @ M, self.b)

    def support(self, direction: ArrayLike) -> float:
        """``max { d.x : x in P }``; ``+inf`` when unbounded in ``direction``."""
        return support(self.C, self.b, direction)

    def is_empty(self) -> bool:
        if self.n_rows == 0:
            return False
        res = _lp(np.zeros(self.dim), self.C, self.b)
        return res.status == 2

    def bounding_box(self) -> tuple[NDArray, NDArray]:
        """Per-coordinate bounds from 2n support evaluations."""
        eye = np.eye(self.dim)
        ub = np.array([self.support(e) for e in eye])
        lb = -np.array([self.support(-e) for e in eye])
        if not (np.all(np.isfinite(ub)) and np.all(np.isfinite(lb))):
            raise ConfigError("polytope is unbounded")
        return lb, ub

    def remove_redundant(self, tol: float = DEFAULT_TOL) -> Polytope:
        return remove_redundant(self, tol)

    def normalized(self) -> Polytope:
        """Same set with unit 2-norm rows."""
        nrm = np.linalg.norm(self.C, axis=1)
        return Polytope(self.C / nrm[:, None], self.b / nrm)


def _lp(c, A_ub, b_ub):
    return linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=[(None, None)] * len(c), method="highs")


def support(C: NDArray, b: NDArray, direction: ArrayLike) -> float:
    """Support function of ``{x : C x <= b}`` in ``direction``."""
    d = np.asarray(direction, dtype=float)
    if C.shape[0] == 0:
        return 0.0 if not np.any(d) else np.inf
    res = _lp(-d, C, b)
    if res.status == 2:
        raise EmptySetError("support of an empty polytope")
    if res.status == 3:
        return np.inf
    if res.status != 0:
        raise RuntimeError(f"LP failed: {res.message}")
    return -res.fun


def remove_redundant(P: Polytope, tol: float = DEFAULT_TOL) -> Polytope:
    """Drop rows implied by the others.

    Rows are first normalized and exact duplicates collapsed; then each row is
    tested in turn against the rows still retained. A row is dropped when its
    maximum over the remaining rows does not exceed its offset by more than
    ``tol``, so the returned point set differs from ``P`` by at most ``tol``
    (in row-normalized units).
    """
    if P.n_rows == 0:
        return P
    if P.is_empty():
        raise EmptySetError("cannot prune an empty polytope")
    Q = P.normalized()
    # collapse duplicate normals (to ~1e-12), keeping the tightest offset
    _, group = np.unique(np.round(Q.C, 12), axis=0, return_inverse=True)
    group = group.ravel()
    best = {}
    for j, (g, bj) in enumerate(zip(group, Q.b)):
        if g not in best or bj < Q.b[best[g]]:
            best[g] = j
    rows = np.sort(np.fromiter(best.values(), dtype=np.intp))
    C, b = Q.C[rows], Q.b[rows]

    keep = np.ones(len(b), dtype=bool)
    for j in range(len(b)):
        keep[j] = False
        if not keep.any():
            keep[j] = True
            continue
        h = support(C[keep], b[keep], C[j])
        if h > b[j] + tol:
            keep[j] = True
    return Polytope(C[keep], b[keep])


def tangent_facets(
    center: ArrayLike,
    semi_axes: ArrayLike,
    rotation: float,
    count: int,
) -> Polytope:
    """Outer polygonal approximation of an ellipse by ``count`` tangent lines.

    Line ``j`` touches the ellipse at parameter angle ``2*pi*j/count``; the
    ellipse interior satisfies every row. Rows have unit 2-norm normals, so a
    uniform offset shift tightens the set by a uniform distance.
    """
    if count < 3:
        raise ConfigError("need at least 3 facets")
    center = np.asarray(center, dtype=float).ravel()
    a, bb = np.asarray(semi_axes, dtype=float).ravel()
    if a <= 0 or bb <= 0:
        raise ConfigError("semi-axes must be positive")
    theta = 2.0 * np.pi * np.arange(count) / count
    rot = np.array([[np.cos(rotation), -np.sin(rotation)], [np.sin(rotation), np.cos(rotation)]])
    points = (rot @ np.vstack([a * np.cos(theta), bb * np.sin(theta)])).T + center
    normals = (rot @ np.vstack([np.cos(theta) / a, np.sin(theta) / bb])).T
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    return Polytope(normals, np.einsum("ij,ij->i", normals, points))


def inscribed_facets(
    center: ArrayLike,
    semi_axes: ArrayLike,
    rotation: float,
    count: int,
) -> Polytope:
    """Inner polygonal approximation of an ellipse with ``count`` rows.

    The tangent polygon is shrunk about the center by ``cos(pi/count)``; its
    vertices then lie on or inside the ellipse, so the polygon is contained in
    the ellipse (and in any tangent approximation of it).
    """
    outer = tangent_facets(center, semi_axes, rotation, count)
    c0 = outer.C @ np.asarray(center, dtype=float).ravel()
    return Polytope(outer.C, c0 + (outer.b - c0) * np.cos(np.pi / count))


def boundary_polyline(P: Polytope, interior: ArrayLike, n_rays: int = 720) -> NDArray:
    """Points on the boundary of a bounded 2D polytope, by ray casting from an
    interior point (used for plotting only)."""
    c = np.asarray(interior, dtype=float)
    ang = np.linspace(0.0, 2.0 * np.pi, n_rays + 1)
    dirs = np.column_stack([np.cos(ang), np.sin(ang)])
    proj = dirs @ P.C.T
    slack = P.b - P.C @ c
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(proj > 1e-14, slack / proj, np.inf)
    r = t.min(axis=1)
    return c + r[:, None] * dirs
