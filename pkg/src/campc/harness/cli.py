"""Command-line entry point.

Exit codes: 0 success, 1 controller or solver failure, 2 bad configuration or
usage. Summaries go to stdout, artifacts to files under ``--out``.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from ..controller import SCHEMES
from ..errors import CampcError, ConfigError, ControllerError
from .output import emit_svg, read_log_csv, write_csv
from .scenario import gen_flagship, gen_invariant_box, read_bundle, write_bundle
from .simulate import compare, run_closed_loop

EXIT_OK, EXIT_CONTROLLER, EXIT_CONFIG = 0, 1, 2


def _x0(text: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.replace(",", " ").split()])
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad state {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="campc", description="Constraint-adaptive MPC experiments.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a scenario bundle")
    g.add_argument("--kind", choices=("flagship", "invariant_box"), default="flagship")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--facets", type=int, default=500, help="facets per ellipse (flagship)")
    g.add_argument("--out", type=Path, default=Path("."), help="parent directory of the bundle")

    def scenario_args(p):
        p.add_argument("--scenario", type=Path, required=True, help="scenario bundle directory")
        p.add_argument("--out", type=Path, default=Path("."), help="output directory")
        p.add_argument("--seed", type=int, default=None, help="accepted for symmetry; bundles fix the seed")
        p.add_argument("--steps", type=int, default=None)
        p.add_argument("--x0", type=_x0, default=None, help="initial state, e.g. '-4.2,-0.3'")
        p.add_argument(
            "--exact-complement", action="store_true",
            help="fit delta sets against rows selected nowhere in the plan (default: not selected everywhere)",
        )

    r = sub.add_parser("run", help="closed-loop run with one scheme")
    scenario_args(r)
    r.add_argument("--scheme", choices=SCHEMES, default=None)

    c = sub.add_parser("compare", help="full_terminal versus ca_terminal")
    scenario_args(c)

    p = sub.add_parser("plot", help="SVG plots from one or two log CSVs")
    p.add_argument("--scenario", type=Path, default=None, help="bundle used to draw the constraint sets")
    p.add_argument("--log", type=Path, action="append", required=True, help="log CSV (repeat for two)")
    p.add_argument("--out", type=Path, default=Path("."))
    return ap


def _cmd_gen(a) -> int:
    if a.kind == "flagship":
        sc = gen_flagship(seed=a.seed, facets_per_ellipse=a.facets)
    else:
        sc = gen_invariant_box(seed=a.seed)
    d = write_bundle(sc, a.out / sc.name)
    print(f"wrote {sc.name} bundle to {d} ({sc.X.n_rows} state rows, x0 = {sc.x0.tolist()})")
    return EXIT_OK


def _load(a):
    sc = read_bundle(a.scenario)
    if a.x0 is not None:
        if a.x0.shape != sc.x0.shape:
            raise ConfigError(f"--x0 needs {sc.model.n} values")
        if not sc.X.contains(a.x0):
            raise ConfigError(f"--x0 {a.x0.tolist()} lies outside X")
        sc.x0 = a.x0
    if a.steps is not None:
        if a.steps < 0:
            raise ConfigError("--steps must be nonnegative")
        sc.steps = a.steps
    if a.exact_complement:
        sc = replace(sc, cfg=replace(sc.cfg, exact_complement=True))
    return sc


def _cmd_run(a) -> int:
    sc = _load(a)
    sim = run_closed_loop(sc, a.scheme)
    path = write_csv(sim, a.out / f"{sim.scheme}.csv")
    print(f"scheme {sim.scheme}: {len(sim)} steps, closed-loop cost {sim.total_cost:.6g}")
    if len(sim):
        print(
            f"final state {sim.x_final.tolist()}, mean solve time {np.mean(sim.solve_time):.3e} s, "
            f"mean constraint fraction {np.mean(sim.selected_fraction):.4f}"
        )
    print(f"log written to {path}")
    return EXIT_OK


def _cmd_compare(a) -> int:
    sc = _load(a)
    report, full, ca = compare(sc)
    a.out.mkdir(parents=True, exist_ok=True)
    write_csv(full, a.out / "full_terminal.csv")
    write_csv(ca, a.out / "ca_terminal.csv")
    write_csv(report, a.out / "report.csv")
    (a.out / "report.txt").write_text("\n".join(report.lines()) + "\n")
    emit_svg([full, ca], sc, a.out)
    print("\n".join(report.lines()))
    print(f"artifacts written to {a.out}")
    return EXIT_OK


def _cmd_plot(a) -> int:
    if len(a.log) > 2:
        raise ConfigError("plot takes at most two logs")
    sc = read_bundle(a.scenario) if a.scenario is not None else None
    try:
        logs = [read_log_csv(p) for p in a.log]
    except (OSError, KeyError, ValueError) as exc:
        raise ConfigError(f"cannot read log: {exc}") from exc
    for path in emit_svg(logs, sc, a.out):
        print(f"wrote {path}")
    return EXIT_OK


COMMANDS = {"gen": _cmd_gen, "run": _cmd_run, "compare": _cmd_compare, "plot": _cmd_plot}


def main(argv=None) -> int:
    ap = build_parser()
    try:
        a = ap.parse_args(argv)
    except SystemExit as exc:  # argparse: 0 for --help, 2 for usage errors
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[a.command](a)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ControllerError as exc:
        print(f"controller error: {exc}", file=sys.stderr)
        d = getattr(exc, "diagnostics", None)
        if d is not None:
            print(f"diagnostics: status={d.qp_status} iterations={d.iterations} rows={d.qp_rows_total}", file=sys.stderr)
        return EXIT_CONTROLLER
    except CampcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONTROLLER


if __name__ == "__main__":
    sys.exit(main())
