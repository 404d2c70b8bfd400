"""Scenarios, closed-loop simulation, comparison reports, output and CLI."""

from .scenario import Scenario, gen_flagship, gen_invariant_box, read_bundle, write_bundle
from .simulate import ComparisonReport, SimLog, compare, run_closed_loop
from .output import emit_svg, read_log_csv, write_csv
