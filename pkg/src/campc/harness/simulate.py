"""Closed-loop simulation and the full-vs-reduced comparison."""

from __future__ import annotations

import gc
import logging
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from ..controller import MpcController, StepDiagnostics
from ..errors import ConfigError, ControllerError, InvariantBreach, StartupError
from ..qpsolver import QpProblem, solve
from .scenario import Scenario

log = logging.getLogger(__name__)

MEMBERSHIP_TOL = 1e-9
_warmed_up = False


def warm_up() -> None:
    """Solve one tiny QP so compiled kernels are loaded before any timing."""
    global _warmed_up
    if _warmed_up:
        return
    p = QpProblem(np.eye(2) * 2.0, np.array([-4.0, 1.0]), np.array([[1.0, 0.0], [0.0, -1.0]]), np.array([1.0, 1.0]))
    solve(p)
    _warmed_up = True


@dataclass
class SimLog:
    scheme: str
    x: NDArray  # (steps, n): state at which each control was computed
    u: NDArray  # (steps, m)
    x_final: NDArray
    stage_cost: NDArray
    qp_rows_total: NDArray
    qp_state_rows: NDArray
    selected_fraction: NDArray
    solve_time: NDArray
    build_time: NDArray
    iterations: NDArray
    min_tube_radius: NDArray
    statuses: list[str] = field(default_factory=list)
    startup_time: float = 0.0

    def __len__(self):
        return len(self.x)

    @property
    def states(self) -> NDArray:
        """All realized states ``x_0..x_steps``."""
        return np.vstack([self.x, self.x_final[None]])

    @property
    def total_cost(self) -> float:
        return float(self.stage_cost.sum())


def run_closed_loop(sc: Scenario, scheme: str | None = None, x0=None, steps: int | None = None) -> SimLog:
    """Simulate the plant under the scenario's controller (or ``scheme``)."""
    warm_up()
    if scheme is not None:
        sc = sc.with_scheme(scheme)
    scheme = sc.cfg.scheme
    x = sc.x0 if x0 is None else np.asarray(x0, dtype=float)
    steps = sc.steps if steps is None else steps
    if not sc.X.contains(x):
        raise ConfigError(f"initial state {x} lies outside X")
    ctrl = MpcController(sc.model, sc.X, sc.U, sc.cfg, sc.terminal)
    startup_time = 0.0
    if scheme == "ca_terminal":
        ctrl.startup(x)
        startup_time = ctrl.startup_time

    n, m = sc.model.n, sc.model.m
    xs, us = np.empty((steps, n)), np.empty((steps, m))
    diags: list[StepDiagnostics] = []
    w = sc.cfg.weights
    # collector pauses would otherwise land inside timed solves
    gc_was_enabled = gc.isenabled()
    gc.disable()
    try:
        for k in range(steps):
            xs[k] = x
            try:
                u, diag = ctrl.control_step(x)
            except ControllerError as exc:
                raise type(exc)(f"step {k}: {exc}", exc.diagnostics) from exc
            us[k] = u
            diags.append(diag)
            x = sc.model.step(x, u)
            if not sc.X.contains(x, MEMBERSHIP_TOL):
                raise InvariantBreach(f"step {k}: successor {x} violates X", diag)
    finally:
        if gc_was_enabled:
            gc.enable()

    def col(name, dtype=float):
        return np.array([getattr(d, name) for d in diags], dtype=dtype)

    return SimLog(
        scheme=scheme,
        x=xs,
        u=us,
        x_final=x,
        stage_cost=np.array([w.stage_cost(xs[k], us[k]) for k in range(steps)]),
        qp_rows_total=col("qp_rows_total", int),
        qp_state_rows=col("qp_state_rows", int),
        selected_fraction=col("selected_fraction"),
        solve_time=col("solve_time"),
        build_time=col("build_time"),
        iterations=col("iterations", int),
        min_tube_radius=col("min_tube_radius"),
        statuses=[d.qp_status for d in diags],
        startup_time=startup_time,
    )


@dataclass
class ComparisonReport:
    max_state_deviation_inf: float
    closed_loop_cost_full: float
    closed_loop_cost_ca: float
    cost_ratio: float
    mean_speedup: float
    median_speedup: float
    mean_constraint_fraction: float
    max_constraint_fraction: float
    min_constraint_fraction: float
    mean_solve_time_full: float
    mean_solve_time_ca: float
    ca_startup_time: float
    steps: int

    def lines(self) -> list[str]:
        return [f"{k} = {v!r}" for k, v in self.__dict__.items()]


def compare_logs(full: SimLog, ca: SimLog) -> ComparisonReport:
    if len(full) != len(ca):
        raise ConfigError("logs have different lengths")
    dev = float(np.abs(full.states - ca.states).max()) if len(full) else 0.0
    speed = full.solve_time / ca.solve_time if len(full) else np.array([np.nan])
    frac = ca.selected_fraction if len(ca) else np.array([np.nan])
    c_full, c_ca = full.total_cost, ca.total_cost
    return ComparisonReport(
        max_state_deviation_inf=dev,
        closed_loop_cost_full=c_full,
        closed_loop_cost_ca=c_ca,
        cost_ratio=c_ca / c_full if c_full > 0 else 1.0,
        mean_speedup=float(np.mean(speed)),
        median_speedup=float(np.median(speed)),
        mean_constraint_fraction=float(np.mean(frac)),
        max_constraint_fraction=float(np.max(frac)),
        min_constraint_fraction=float(np.min(frac)),
        mean_solve_time_full=float(np.mean(full.solve_time)) if len(full) else np.nan,
        mean_solve_time_ca=float(np.mean(ca.solve_time)) if len(ca) else np.nan,
        ca_startup_time=ca.startup_time,
        steps=len(full),
    )


def compare(sc: Scenario, full_scheme: str = "full_terminal", ca_scheme: str = "ca_terminal"):
    """Run both controllers from the same ``x0`` (sequentially, so timings do
    not interfere) and return ``(report, full_log, ca_log)``."""
    full = run_closed_loop(sc, full_scheme)
    ca = run_closed_loop(sc, ca_scheme)
    return compare_logs(full, ca), full, ca


def sample_startup_feasible(sc: Scenario, count: int, seed: int = 0, max_tries: int = 10_000) -> NDArray:
    """Rejection-sample ``count`` states of ``X`` from which startup succeeds."""
    rng = np.random.default_rng(seed)
    lb, ub = sc.X.bounding_box()
    ctrl = MpcController(sc.model, sc.X, sc.U, sc.with_scheme("ca_terminal").cfg, sc.terminal)
    out = []
    for _ in range(max_tries):
        x = rng.uniform(lb, ub)
        if not sc.X.contains(x):
            continue
        try:
            ctrl.startup(x)
        except StartupError:
            continue
        out.append(x)
        if len(out) == count:
            return np.array(out)
    raise ConfigError(f"found only {len(out)} startup-feasible states in {max_tries} draws")
