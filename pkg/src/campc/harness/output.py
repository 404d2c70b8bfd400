"""CSV and SVG artifacts for simulation logs and comparison reports."""

from __future__ import annotations

import csv
import logging
from pathlib import Path

import matplotlib
import numpy as np
from matplotlib.backends.backend_svg import FigureCanvasSVG
from matplotlib.figure import Figure

from ..polytope import Polytope, boundary_polyline
from .scenario import Scenario
from .simulate import ComparisonReport, SimLog

log = logging.getLogger(__name__)

# solve_time and build_time vary run to run; every other column is deterministic
TIMING_COLUMNS = ("solve_time_seconds", "build_time_seconds")


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.17g" % float(v)


def log_columns(sim: SimLog) -> list[str]:
    n = sim.x.shape[1]
    m = sim.u.shape[1]
    return (
        ["k"]
        + [f"x_{i}" for i in range(n)]
        + [f"u_{i}" for i in range(m)]
        + [
            "stage_cost", "qp_rows_total", "qp_state_rows", "selected_fraction",
            "solve_time_seconds", "build_time_seconds", "solver_iterations", "min_tube_radius",
        ]
    )


def log_rows(sim: SimLog):
    for k in range(len(sim)):
        yield (
            [k]
            + list(sim.x[k])
            + list(sim.u[k])
            + [
                sim.stage_cost[k], int(sim.qp_rows_total[k]), int(sim.qp_state_rows[k]), sim.selected_fraction[k],
                sim.solve_time[k], sim.build_time[k], int(sim.iterations[k]), sim.min_tube_radius[k],
            ]
        )


def write_csv(obj: SimLog | ComparisonReport, path) -> Path:
    """Write a log (header plus one row per step) or a report (``metric,value``
    rows). Floats carry 17 significant digits."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if isinstance(obj, SimLog):
            w.writerow(log_columns(obj))
            for row in log_rows(obj):
                w.writerow([_fmt(v) for v in row])
        elif isinstance(obj, ComparisonReport):
            w.writerow(["metric", "value"])
            for k, v in obj.__dict__.items():
                w.writerow([k, _fmt(v)])
        else:
            raise TypeError(f"cannot write {type(obj).__name__} as CSV")
    return path


def read_log_csv(path, scheme: str | None = None) -> SimLog:
    """Rebuild a log from its CSV. The final state is not stored, so it is
    taken equal to the last logged one."""
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path} is empty")
    header, body = rows[0], rows[1:]
    data = np.array(body, dtype=float).reshape(len(body), len(header))
    col = {h: data[:, i] for i, h in enumerate(header)}
    n = sum(h.startswith("x_") for h in header)
    m = sum(h.startswith("u_") for h in header)
    x = np.column_stack([col[f"x_{i}"] for i in range(n)]) if n else np.empty((len(body), 0))
    u = np.column_stack([col[f"u_{i}"] for i in range(m)]) if m else np.empty((len(body), 0))
    x = x.reshape(len(body), n)
    u = u.reshape(len(body), m)
    return SimLog(
        scheme=scheme or path.stem,
        x=x,
        u=u,
        x_final=x[-1] if len(body) else np.zeros(n),
        stage_cost=col["stage_cost"],
        qp_rows_total=col["qp_rows_total"].astype(int),
        qp_state_rows=col["qp_state_rows"].astype(int),
        selected_fraction=col["selected_fraction"],
        solve_time=col["solve_time_seconds"],
        build_time=col["build_time_seconds"],
        iterations=col["solver_iterations"].astype(int),
        min_tube_radius=col["min_tube_radius"],
    )


# -- SVG -----------------------------------------------------------------------


def _save(fig: Figure, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    FigureCanvasSVG(fig)
    # fixed salt and no date keep the output byte-stable for fixed input
    with matplotlib.rc_context({"svg.hashsalt": "campc", "svg.fonttype": "path"}):
        fig.savefig(path, format="svg", metadata={"Date": None})
    return path


def _outline(ax, P: Polytope, interior, **kw):
    pts = boundary_polyline(P, interior)
    ax.plot(pts[:, 0], pts[:, 1], **kw)


def phase_plot(logs: list[SimLog], sc: Scenario | None, path) -> Path:
    fig = Figure(figsize=(7, 4))
    ax = fig.add_subplot(1, 1, 1)
    if sc is not None and sc.X.dim == 2:
        inner = sc.x0 if sc.X.contains(sc.x0) else np.zeros(2)
        _outline(ax, sc.X, inner, color="0.3", lw=1.0, label="X")
        if sc.terminal is not None and sc.terminal.X_T.contains(np.zeros(2)):
            _outline(ax, sc.terminal.X_T, np.zeros(2), color="tab:green", lw=1.0, ls="--", label="terminal set")
    styles = [dict(color="tab:blue", lw=2.5, alpha=0.6), dict(color="tab:red", lw=1.0, ls="--")]
    for sim, st in zip(logs, styles):
        if len(sim):
            xs = sim.states
            ax.plot(xs[:, 0], xs[:, 1], marker=".", ms=3, label=sim.scheme, **st)
    ax.set_xlabel("x_1")
    ax.set_ylabel("x_2")
    ax.set_title("closed-loop state trajectory")
    if ax.get_legend_handles_labels()[0]:
        ax.legend(loc="best", fontsize=8)
    return _save(fig, Path(path))


def series_plot(logs: list[SimLog], path) -> Path:
    fig = Figure(figsize=(7, 5))
    ax1 = fig.add_subplot(2, 1, 1)
    ax2 = fig.add_subplot(2, 1, 2, sharex=ax1)
    for sim in logs:
        if len(sim):
            k = np.arange(len(sim))
            ax1.plot(k, 100.0 * sim.selected_fraction, label=sim.scheme)
            ax2.semilogy(k, sim.solve_time, label=f"{sim.scheme} solve time [s]")
    if len(logs) == 2 and len(logs[0]) and len(logs[0]) == len(logs[1]):
        k = np.arange(len(logs[0]))
        ax2.semilogy(k, logs[0].solve_time / logs[1].solve_time, color="k", lw=1.0, label="speedup")
    ax2.set_yscale("log")
    ax1.set_ylabel("constraints kept [%]")
    ax2.set_ylabel("time [s] / speedup")
    ax2.set_xlabel("step")
    for ax in (ax1, ax2):
        if ax.get_legend_handles_labels()[0]:
            ax.legend(loc="best", fontsize=8)
    return _save(fig, Path(path))


def emit_svg(logs, sc: Scenario | None, out_dir, stem: str = "") -> list[Path]:
    """Phase plot (2D states only) and time-series plot for one or two logs.

    With two logs the first is taken as the reference for the speedup trace.
    """
    if isinstance(logs, SimLog):
        logs = [logs]
    logs = list(logs)
    if not 1 <= len(logs) <= 2:
        raise ValueError("emit_svg takes one or two logs")
    out = Path(out_dir)
    prefix = f"{stem}_" if stem else ""
    paths = []
    n = logs[0].x.shape[1]
    if n == 2:
        paths.append(phase_plot(logs, sc, out / f"{prefix}trajectory.svg"))
    else:
        log.info("state dimension %d: skipping the phase plot", n)
    paths.append(series_plot(logs, out / f"{prefix}constraints_time.svg"))
    return paths
