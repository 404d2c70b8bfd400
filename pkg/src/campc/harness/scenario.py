"""Scenario definitions, generators and the on-disk bundle format.

A bundle is a directory holding ``manifest.txt`` (``key = value`` lines) and
one CSV file per matrix. Matrices are written with 17 significant digits so a
bundle round-trips bit for bit.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from ..controller import MpcConfig
from ..errors import ConfigError
from ..ltimodel import CostWeights, LtiModel, double_integrator
from ..polytope import Polytope, inscribed_facets, tangent_facets
from ..qpsolver import QpSettings
from ..reduction import uniform_margins
from ..terminal import TerminalIngredients, synthesize_terminal

log = logging.getLogger(__name__)

# (center, semi_axes, rotation) of the two ellipses whose tangent polygons form X
FLAGSHIP_ELLIPSES = (
    ((0.4, 0.0), (5.5, 1.2), 0.0),
    ((-0.4, 0.0), (5.5, 1.2), 0.2),
)
FLAGSHIP_X0 = (-4.2, -0.3)
TERMINAL_BASE_FACETS = 60


@dataclass
class Scenario:
    name: str
    model: LtiModel
    X: Polytope
    U: Polytope
    cfg: MpcConfig
    x0: NDArray
    steps: int = 150
    seed: int = 0
    terminal: TerminalIngredients | None = None
    ellipses: tuple = ()
    facets_per_ellipse: int = 0
    terminal_weights: tuple[NDArray, NDArray] | None = None

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float)
        if self.X.dim != self.model.n or self.x0.shape != (self.model.n,):
            raise ConfigError("scenario dimensions do not match the model")
        if self.steps < 0:
            raise ConfigError("steps must be nonnegative")
        if not self.X.contains(self.x0):
            raise ConfigError(f"x0 = {self.x0} lies outside X")

    def with_scheme(self, scheme: str) -> Scenario:
        return replace(self, cfg=replace(self.cfg, scheme=scheme))


def ellipse_corpus(ellipses, facets_per_ellipse: int) -> Polytope:
    """Intersection of the tangent polygons of several ellipses."""
    if facets_per_ellipse < 3:
        raise ConfigError("need at least 3 facets per ellipse")
    parts = [tangent_facets(c, ax, rot, facets_per_ellipse) for c, ax, rot in ellipses]
    return Polytope(np.vstack([p.C for p in parts]), np.concatenate([p.b for p in parts]))


def flagship_terminal(model, X, U, ellipses, Q_gain, R_gain, base_facets=TERMINAL_BASE_FACETS):
    # the invariant-set iteration runs on small inscribed polygons of the
    # ellipses; synthesize_terminal then certifies the result against all of X
    base = None
    for c, ax, rot in ellipses:
        P = inscribed_facets(c, ax, rot, base_facets)
        base = P if base is None else base.intersect(P)
    return synthesize_terminal(model, X, U, Q_gain, R_gain, base=base)


def gen_flagship(
    seed: int = 0,
    facets_per_ellipse: int = 500,
    steps: int = 150,
    with_terminal: bool = True,
    ellipses=FLAGSHIP_ELLIPSES,
    x0=FLAGSHIP_X0,
) -> Scenario:
    """Double integrator steered from ``x0`` through a lens-shaped region cut
    out by two polygonal ellipses, horizon 15, ``|u| <= 0.5``.

    The terminal gain uses a heavy input weight (R = 1000) so that its
    invariant set is large enough to be reached from ``x0`` within the
    horizon; the MPC stage and terminal weights stay at identity.
    """
    model = double_integrator(0.1)
    X = ellipse_corpus(ellipses, facets_per_ellipse)
    U = Polytope.from_box([-0.5], [0.5])
    weights = CostWeights(np.eye(2), np.eye(1), np.eye(2))
    cfg = MpcConfig(N=15, weights=weights, scheme="ca_terminal", margin_distance=0.1)
    Q_gain, R_gain = np.eye(2), np.array([[1000.0]])
    X_s = X.tighten(uniform_margins(X, cfg.margin_distance))
    for pt in (np.asarray(x0, dtype=float), np.zeros(2)):
        if X_s.slack(pt).min() < 0.05:
            raise ConfigError(f"generated X does not contain {pt} with the required slack")
    terminal = flagship_terminal(model, X, U, ellipses, Q_gain, R_gain) if with_terminal else None
    return Scenario(
        "flagship", model, X, U, cfg, np.asarray(x0, dtype=float), steps, seed,
        terminal, tuple(ellipses), facets_per_ellipse, (Q_gain, R_gain),
    )


def gen_invariant_box(seed: int = 0, steps: int = 200, horizon: int = 10) -> Scenario:
    """Fully actuated 2-state plant on a box whose input set is large enough to
    hold any state in place, so the box is controlled invariant."""
    rng = np.random.default_rng(seed)
    theta = rng.uniform(-0.4, 0.4)
    rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    A = rng.uniform(0.9, 1.1) * rot
    model = LtiModel(A, np.eye(2))
    half = rng.uniform(1.0, 3.0, size=2)
    X = Polytope.from_box(-half, half)
    corners = np.array([[sx * half[0], sy * half[1]] for sx in (-1, 1) for sy in (-1, 1)])
    # u = (I - A) x keeps x fixed; the box must allow it at every corner
    u_max = 1.2 * np.abs(corners @ (np.eye(2) - A).T).max(axis=0) + 0.05
    U = Polytope.from_box(-u_max, u_max)
    weights = CostWeights(np.eye(2), 0.1 * np.eye(2), np.eye(2))
    cfg = MpcConfig(N=horizon, weights=weights, scheme="ca_invariant", margin_distance=0.1)
    x0 = half * rng.uniform(0.7, 0.95, size=2) * rng.choice([-1.0, 1.0], size=2)
    return Scenario(f"invariant_box_{seed}", model, X, U, cfg, x0, steps, seed)


# -- bundle I/O ---------------------------------------------------------------


def _write_matrix(path: Path, M) -> None:
    np.savetxt(path, np.atleast_2d(np.asarray(M, dtype=float)), fmt="%.17g", delimiter=",")


def _read_matrix(path: Path) -> NDArray:
    return np.atleast_2d(np.loadtxt(path, delimiter=",", dtype=float, ndmin=2))


def write_bundle(sc: Scenario, directory) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    s = sc.cfg.solver
    manifest = {
        "name": sc.name,
        "n": sc.model.n,
        "m": sc.model.m,
        "N": sc.cfg.N,
        "scheme": sc.cfg.scheme,
        "margin_distance": repr(sc.cfg.margin_distance),
        "delta_norm": sc.cfg.delta_norm,
        "per_stage_reduction": int(sc.cfg.per_stage_reduction),
        "exact_complement": int(sc.cfg.exact_complement),
        "solver_tol": repr(s.tol),
        "solver_max_iter": s.max_iter,
        "steps": sc.steps,
        "seed": sc.seed,
        "state_rows": sc.X.n_rows,
        "has_terminal": int(sc.terminal is not None),
        "facets_per_ellipse": sc.facets_per_ellipse,
    }
    for i, (c, ax, rot) in enumerate(sc.ellipses):
        manifest[f"ellipse_{i}"] = " ".join(repr(float(v)) for v in (*c, *ax, rot))
    with open(d / "manifest.txt", "w") as fh:
        fh.write("# scenario bundle; matrices are CSV files in this directory\n")
        for k, v in manifest.items():
            fh.write(f"{k} = {v}\n")
    mats = {
        "A": sc.model.A, "B": sc.model.B, "X_C": sc.X.C, "X_b": sc.X.b, "U_C": sc.U.C, "U_b": sc.U.b,
        "Q": sc.cfg.weights.Q, "R": sc.cfg.weights.R, "P_T": sc.cfg.weights.P_T, "x0": sc.x0,
    }
    if sc.terminal is not None:
        mats.update(K=sc.terminal.K, P_lqr=sc.terminal.P_lqr, XT_C=sc.terminal.X_T.C, XT_b=sc.terminal.X_T.b)
    for k, M in mats.items():
        _write_matrix(d / f"{k}.csv", M)
    return d


def read_manifest(path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"malformed manifest line: {line!r}")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def read_bundle(directory) -> Scenario:
    d = Path(directory)
    if not (d / "manifest.txt").exists():
        raise ConfigError(f"{d} is not a scenario bundle (no manifest.txt)")
    man = read_manifest(d / "manifest.txt")
    try:
        n, m = int(man["n"]), int(man["m"])
        mat = lambda k: _read_matrix(d / f"{k}.csv")
        vec = lambda k: mat(k).ravel()
        model = LtiModel(mat("A").reshape(n, n), mat("B").reshape(n, m))
        X = Polytope(mat("X_C").reshape(-1, n), vec("X_b"))
        U = Polytope(mat("U_C").reshape(-1, m), vec("U_b"))
        weights = CostWeights(mat("Q").reshape(n, n), mat("R").reshape(m, m), mat("P_T").reshape(n, n))
        solver = QpSettings(tol=float(man.get("solver_tol", 1e-8)), max_iter=int(man.get("solver_max_iter", 20000)))
        cfg = MpcConfig(
            N=int(man["N"]),
            weights=weights,
            scheme=man.get("scheme", "ca_terminal"),
            margin_distance=float(man["margin_distance"]),
            delta_norm=man.get("delta_norm", "inf"),
            per_stage_reduction=bool(int(man.get("per_stage_reduction", 0))),
            exact_complement=bool(int(man.get("exact_complement", 0))),
            solver=solver,
        )
        terminal = None
        if int(man.get("has_terminal", 0)):
            X_T = Polytope(mat("XT_C").reshape(-1, n), vec("XT_b"))
            terminal = TerminalIngredients(mat("K").reshape(m, n), mat("P_lqr").reshape(n, n), X_T)
        ellipses = []
        i = 0
        while f"ellipse_{i}" in man:
            cx, cy, a, b, rot = (float(v) for v in man[f"ellipse_{i}"].split())
            ellipses.append(((cx, cy), (a, b), rot))
            i += 1
        return Scenario(
            man.get("name", d.name), model, X, U, cfg, vec("x0"),
            int(man.get("steps", 150)), int(man.get("seed", 0)), terminal,
            tuple(ellipses), int(man.get("facets_per_ellipse", 0)),
        )
    except (KeyError, OSError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid scenario bundle {d}: {exc}") from exc
