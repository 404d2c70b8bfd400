"""Receding-horizon controllers: full MPC (with or without terminal set) and
the two constraint-adaptive schemes.

``ca_invariant`` needs a controlled invariant ``X``: at state ``x`` it keeps
the rows selected at ``x`` over the whole horizon and adds a delta box at the
first stage. ``ca_terminal`` works with a terminal set instead and is
parameterized by the previous optimal plan: the rows selected along that plan
plus one delta box per stage replace ``X``.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .delta import DeltaSet, Norm, build_tube, delta_for_scheme_a
from .errors import ConfigError, ControllerError, InvariantBreach, StartupError
from .ltimodel import CostWeights, LtiModel, build_prediction, condensed_cost, stack_constraints
from .polytope import Polytope
from .qpsolver import QpProblem, QpSettings, QpSolution, solve
from .reduction import horizon_indices, select_indices, selection_mask, uniform_margins
from .terminal import TerminalIngredients

log = logging.getLogger(__name__)

SCHEMES = ("full", "full_terminal", "ca_invariant", "ca_terminal")
PLAN_TOL = 1e-8


@dataclass
class MpcConfig:
    N: int
    weights: CostWeights
    scheme: str = "ca_terminal"
    margin_distance: float = 0.1
    delta_norm: Norm = "inf"
    per_stage_reduction: bool = False
    # fit union-mode delta sets against rows selected nowhere in the plan, instead
    # of against all rows not selected everywhere
    exact_complement: bool = False
    solver: QpSettings = field(default_factory=QpSettings)
    radius_cap: float = 1e6

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.N < 1 or (self.scheme == "ca_terminal" and self.N < 2):
            raise ConfigError("horizon too short for the chosen scheme")
        if not self.margin_distance > 0:
            raise ConfigError("margin distance must be positive")
        if self.delta_norm != "inf":
            raise ConfigError("only infinity-norm delta sets can be embedded in the QP")


@dataclass
class ControllerState:
    """Previous optimal plan ``x*_{1..N}``, the ``N-1`` inputs linking its
    consecutive states, and the primal guess for the next solve."""

    prev_plan: NDArray | None = None
    prev_inputs: NDArray | None = None
    warm: QpSolution | None = None


@dataclass
class StepDiagnostics:
    u_applied: NDArray
    qp_rows_total: int
    qp_state_rows: int
    selected_fraction: float
    solve_time: float
    build_time: float
    qp_status: str
    iterations: int
    min_tube_radius: float
    cost_value: float


@dataclass
class _Built:
    problem: QpProblem
    const: float
    state_rows: int
    fraction: float
    min_radius: float = np.nan


class MpcController:
    """Stateful receding-horizon controller for one scheme."""

    def __init__(
        self,
        model: LtiModel,
        X: Polytope,
        U: Polytope,
        cfg: MpcConfig,
        terminal: TerminalIngredients | None = None,
    ):
        cfg.weights.check(model)
        if X.dim != model.n or U.dim != model.m:
            raise ConfigError("constraint sets do not match the model dimensions")
        if cfg.scheme in ("full_terminal", "ca_terminal") and terminal is None:
            raise ConfigError(f"scheme {cfg.scheme} needs terminal ingredients")
        self.model, self.X, self.U, self.cfg, self.terminal = model, X, U, cfg, terminal
        self.pred = build_prediction(model, cfg.N)
        self.cost = condensed_cost(self.pred, cfg.weights)
        self.margins = uniform_margins(X, cfg.margin_distance)
        self.state = ControllerState()

    # -- problem construction -------------------------------------------------

    def _problem(self, x, stage_sets, terminal_set, extra_first=None):
        H, g, const = self.cost.at(x)
        A, b = stack_constraints(self.pred, x, stage_sets, terminal_set, self.U, extra_first)
        return QpProblem(H, g, A, b), const

    def _build_full(self, x, with_terminal: bool) -> _Built:
        N = self.cfg.N
        term = self.terminal.X_T if with_terminal else self.X
        p, const = self._problem(x, [self.X] * (N - 1), term)
        n_stages = N - 1 if with_terminal else N
        return _Built(p, const, self.X.n_rows * n_stages, 1.0)

    def _build_ca_invariant(self, x) -> tuple[_Built, NDArray, DeltaSet]:
        N = self.cfg.N
        cand = None if self.state.warm is None else self.state.warm.z[: self.model.m]
        ubar, delta = delta_for_scheme_a(
            x, self.model, self.U, self.X, self.margins, cand, self.cfg.delta_norm, self.cfg.radius_cap
        )
        J = select_indices(x, self.X, self.margins)
        Xr = self.X.row_subset(J)
        p, const = self._problem(x, [Xr] * (N - 1), Xr, extra_first=delta.as_polytope())
        built = _Built(p, const, len(J) * N, len(J) / self.X.n_rows, delta.radius)
        return built, ubar, delta

    def _build_ca_terminal(self, x) -> _Built:
        plan = self.state.prev_plan
        if plan is None:
            raise ControllerError("ca_terminal needs a previous plan; run startup() first")
        N, X = self.cfg.N, self.X
        tube = build_tube(
            plan, X, self.margins, self.cfg.delta_norm, self.cfg.per_stage_reduction, self.cfg.radius_cap, PLAN_TOL,
            exact=self.cfg.exact_complement,
        )
        if self.cfg.per_stage_reduction:
            mask = selection_mask(plan[1:], X, self.margins)
            reduced = [X.row_subset(np.flatnonzero(row)) for row in mask]
        else:
            J = horizon_indices(plan, X, self.margins, range(2, N + 1))
            reduced = [X.row_subset(J)] * (N - 1)
        stage_sets = [Xr.intersect(d.as_polytope()) for Xr, d in zip(reduced, tube)]
        p, const = self._problem(x, stage_sets, self.terminal.X_T)
        state_rows = sum(Xr.n_rows for Xr in reduced)
        return _Built(p, const, state_rows, state_rows / (X.n_rows * (N - 1)), float(tube.radii.min()))

    def build_full(self, x_k: ArrayLike) -> QpProblem:
        """Full problem; the terminal stage uses ``X_T`` for ``full_terminal``
        and ``ca_terminal`` controllers, ``X`` otherwise."""
        x_k = np.asarray(x_k, dtype=float)
        if not self.X.contains(x_k):
            log.warning("building the full problem at a state outside X")
        with_terminal = self.terminal is not None and self.cfg.scheme != "full"
        return self._build_full(x_k, with_terminal).problem

    def build_ca_invariant(self, x_k: ArrayLike) -> QpProblem:
        return self._build_ca_invariant(np.asarray(x_k, dtype=float))[0].problem

    def build_ca_terminal(self, x_k: ArrayLike) -> QpProblem:
        return self._build_ca_terminal(np.asarray(x_k, dtype=float)).problem

    # -- startup and stepping ---------------------------------------------------

    def _in_S(self, plan: NDArray) -> bool:
        return bool(np.all(self.X.contains(plan, PLAN_TOL)) and self.terminal.X_T.contains(plan[-1], PLAN_TOL))

    def startup(self, x0: ArrayLike) -> ControllerState:
        """Find an initial plan ``(x0, x_2, ..., x_N)`` that is dynamically
        consistent, stays in ``X`` and ends in ``X_T``.

        Inside ``X_T`` the terminal controller supplies the plan. Otherwise the
        full terminal-set problem is solved at ``x0`` and its predicted states,
        prefixed with ``x0``, are used; if the state before last is not yet in
        ``X_T``, the problem is re-solved with the terminal set imposed one
        stage earlier.
        """
        x0 = np.asarray(x0, dtype=float)
        if x0.shape != (self.model.n,):
            raise StartupError("x0 dimension mismatch")
        if not self.X.contains(x0):
            raise StartupError(f"x0 = {x0} lies outside X")
        if self.terminal is None:
            raise StartupError("startup needs a terminal set")
        N, K, X_T = self.cfg.N, self.terminal.K, self.terminal.X_T
        self.startup_time = 0.0

        if X_T.contains(x0):
            plan = np.empty((N, self.model.n))
            inputs = np.empty((N, self.model.m))
            x = x0
            for i in range(N):
                plan[i] = x
                inputs[i] = -K @ x
                x = self.model.step(x, inputs[i])
            U0 = inputs.ravel()
        else:
            U0 = None
            for early in (False, True):
                stage_sets = [self.X] * (N - 1)
                if early and N >= 2:
                    stage_sets[-1] = self.X.intersect(X_T)
                p, _ = self._problem(x0, stage_sets, X_T)
                sol = solve(p, settings=self.cfg.solver)
                self.startup_time += sol.solve_time
                if not sol.optimal:
                    raise StartupError(f"startup problem at x0 = {x0} is {sol.status}")
                states = self.pred.states(x0, sol.z)
                plan = np.vstack([x0, states[:-1]])
                if self._in_S(plan):
                    U0 = sol.z
                    break
            if U0 is None:
                raise StartupError("could not construct an initial plan ending in X_T")
        if not self._in_S(plan):
            raise StartupError("initial plan fails the membership certificate")
        self.state = ControllerState(plan, U0.reshape(N, -1)[:-1], QpSolution(U0.copy(), None, "guess"))
        return self.state

    def _tail_input(self, x_last: NDArray, u_last: NDArray) -> NDArray:
        if self.terminal is not None and self.cfg.scheme in ("full_terminal", "ca_terminal"):
            return -self.terminal.K @ x_last
        return u_last

    def control_step(self, x_k: ArrayLike) -> tuple[NDArray, StepDiagnostics]:
        """Solve the scheme's problem at ``x_k`` and return ``u*_{0|k}``."""
        x = np.asarray(x_k, dtype=float)
        scheme = self.cfg.scheme
        t0 = time.perf_counter()
        if scheme == "ca_terminal":
            plan = self.state.prev_plan
            if plan is not None and np.abs(plan[0] - x).max() > 1e-9 * (1.0 + np.abs(x).max()):
                log.warning("measured state departs from the planned one; guarantees assume x_k = x*_{1|k-1}")
            built = self._build_ca_terminal(x)
        elif scheme == "ca_invariant":
            if not self.X.contains(x):
                raise ControllerError(f"state {x} outside X")
            built = self._build_ca_invariant(x)[0]
        else:
            built = self._build_full(x, scheme == "full_terminal")
        build_time = time.perf_counter() - t0

        sol = solve(built.problem, self.state.warm, self.cfg.solver)
        N, m = self.cfg.N, self.model.m
        diag = StepDiagnostics(
            u_applied=sol.z[:m].copy(),
            qp_rows_total=built.problem.n_con,
            qp_state_rows=built.state_rows,
            selected_fraction=built.fraction,
            solve_time=sol.solve_time,
            build_time=build_time,
            qp_status=sol.status,
            iterations=sol.iterations,
            min_tube_radius=built.min_radius,
            cost_value=built.problem.objective(sol.z) + built.const if sol.optimal else np.nan,
        )
        if not sol.optimal:
            raise ControllerError(f"QP {sol.status} at x = {x} (scheme {scheme})", diag)

        U = sol.z.reshape(N, m)
        plan = self.pred.states(x, sol.z)
        if scheme == "ca_terminal" and not self._in_S(plan):
            raise InvariantBreach("new plan left the admissible trajectory set", diag)
        tail = self._tail_input(plan[-1], U[-1])
        guess = np.concatenate([U[1:].ravel(), np.atleast_1d(tail)])
        self.state = ControllerState(plan, U[1:], QpSolution(guess, None, "guess"))
        return diag.u_applied, diag
