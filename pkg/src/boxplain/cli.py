"""Command-line surface: explain / bounds / bench / verify subcommands.

All output is CSV on stdout.  Exit codes: 0 success, 2 input error,
3 solver failure.
"""

from __future__ import annotations

import argparse
import csv
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .box import AttributeAssignment, box_propagate
from .engine import (MODE_BASELINE, MODE_IMPROVED, EngineConfig, Explainer,
                     compute_tight_bounds, verify_explanation)
from .model import ModelFormatError, load_model_file
from .simplex import SolverFailure

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_SOLVER = 3


@dataclass(frozen=True)
class InstanceSet:
    rows: np.ndarray  # (m, width)
    labels: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return self.rows.shape[0]


class InputError(ValueError):
    pass


def ingest_csv(path) -> InstanceSet:
    """Numeric instance rows, one per line.

    A first line in which no cell parses as a number is taken as a header
    and skipped; a partially numeric line is data with a bad cell.
    """
    rows = []
    width = None
    first_data_line = True
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        for lineno, cells in enumerate(reader, start=1):
            cells = [c.strip() for c in cells if c.strip() != ""]
            if not cells:
                continue
            parsed = []
            bad_col = None
            for col, cell in enumerate(cells):
                try:
                    parsed.append(float(cell))
                except ValueError:
                    if bad_col is None:
                        bad_col = col
            if bad_col is not None:
                if first_data_line and not parsed:
                    first_data_line = False  # header row
                    continue
                raise InputError(
                    f"{path}: line {lineno}, column {bad_col + 1}: "
                    f"non-numeric value {cells[bad_col]!r}")
            first_data_line = False
            if width is None:
                width = len(parsed)
            elif len(parsed) != width:
                raise InputError(
                    f"{path}: line {lineno}: expected {width} values, "
                    f"got {len(parsed)}")
            rows.append(parsed)
    data = np.array(rows, dtype=np.float64) if rows else np.zeros((0, width or 0))
    return InstanceSet(data)


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _check_width(instances: InstanceSet, net) -> None:
    if len(instances) and instances.rows.shape[1] != net.input_dim:
        raise InputError(
            f"instances have {instances.rows.shape[1]} columns, "
            f"model expects {net.input_dim}")


def _parse_order(text: Optional[str], n: int) -> Optional[tuple]:
    if text is None or text == "asc":
        return None
    try:
        order = tuple(int(tok) for tok in text.split(","))
    except ValueError:
        raise InputError(f"--order must be 'asc' or a comma list, got {text!r}")
    if sorted(order) != list(range(n)):
        raise InputError(f"--order must be a permutation of 0..{n - 1}")
    return order


def _build_config(args, n: int) -> EngineConfig:
    return EngineConfig(
        tight_bounds_mode=args.tight_bounds,
        order=_parse_order(getattr(args, "order", None), n),
        feas_tol=args.tolerance,
        time_budget_ms=args.time_budget_ms,
    )


def _explain_many(explainer: Explainer, instances: InstanceSet, mode: str, jobs: int):
    rows = instances.rows
    if jobs > 1 and len(instances) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(lambda r: explainer.explain(r, mode), rows))
    return [explainer.explain(row, mode) for row in rows]


def cmd_explain(args) -> int:
    net, domain = load_model_file(args.model)
    instances = ingest_csv(args.instances)
    _check_width(instances, net)
    config = _build_config(args, net.input_dim)
    explainer = Explainer(net, domain, config)
    writer = csv.writer(sys.stdout)
    writer.writerow(["instance", "predicted_class", "kept_indices", "decisions",
                     "total_time_s", "solver_time_s", "solver_calls",
                     "box_shortcut_hits"])
    results = _explain_many(explainer, instances, args.mode, args.jobs)
    for idx, (explanation, stats) in enumerate(results):
        decisions = ";".join(f"{i}:{d.value}"
                             for i, d in sorted(explanation.decisions.items()))
        writer.writerow([
            idx, explanation.target,
            ";".join(str(i) for i in explanation.kept_indices),
            decisions, _fmt(stats.total_time), _fmt(stats.solver_time),
            stats.solver_calls, stats.box_shortcut_hits,
        ])
    return EXIT_OK


def cmd_bounds(args) -> int:
    net, domain = load_model_file(args.model)
    tight = compute_tight_bounds(net, domain, args.tight_bounds)
    boxed = box_propagate(net, AttributeAssignment.all_free(net.input_dim), domain)
    writer = csv.writer(sys.stdout)
    writer.writerow(["layer", "neuron", "tight_lb", "tight_ub", "box_lb", "box_ub"])
    for l in range(len(net.hidden_layers)):
        for j in range(net.hidden_widths[l]):
            writer.writerow([l + 1, j,
                             _fmt(float(tight.pre_lo[l][j])),
                             _fmt(float(tight.pre_hi[l][j])),
                             _fmt(float(boxed.pre_lo[l][j])),
                             _fmt(float(boxed.pre_hi[l][j]))])
    out_layer = len(net.layers)
    for j in range(net.class_count):
        writer.writerow([out_layer, j,
                         _fmt(float(tight.out_lo[j])), _fmt(float(tight.out_hi[j])),
                         _fmt(float(boxed.out_lo[j])), _fmt(float(boxed.out_hi[j]))])
    return EXIT_OK


def cmd_bench(args) -> int:
    net, domain = load_model_file(args.model)
    instances = ingest_csv(args.instances)
    _check_width(instances, net)
    config = _build_config(args, net.input_dim)
    writer = csv.writer(sys.stdout)
    writer.writerow(["exp_s_baseline", "exp_s_ours", "solver_s_baseline",
                     "solver_s_ours", "pct_bounds_tightened",
                     "pct_bin_vars_removed_before", "pct_bin_vars_removed_ours",
                     "box_shortcut_hits", "solver_calls_baseline",
                     "solver_calls_ours"])
    if not len(instances):
        return EXIT_OK
    explainer = Explainer(net, domain, config)
    base_runs = _explain_many(explainer, instances, MODE_BASELINE, args.jobs)
    ours_runs = _explain_many(explainer, instances, MODE_IMPROVED, args.jobs)
    for (base_exp, _), (ours_exp, _) in zip(base_runs, ours_runs):
        if base_exp.kept_indices != ours_exp.kept_indices:
            raise SolverFailure("baseline and improved explanations diverge")
    base_stats = [s for _, s in base_runs]
    ours_stats = [s for _, s in ours_runs]

    def pooled_pct(num_attr, den_attr):
        num = sum(getattr(s, num_attr) for s in ours_stats)
        den = sum(getattr(s, den_attr) for s in ours_stats)
        return 100.0 * num / den if den else 0.0

    writer.writerow([
        _fmt(sum(s.total_time for s in base_stats)),
        _fmt(sum(s.total_time for s in ours_stats)),
        _fmt(sum(s.solver_time for s in base_stats)),
        _fmt(sum(s.solver_time for s in ours_stats)),
        _fmt(pooled_pct("tightened_count", "neurons_counted")),
        _fmt(pooled_pct("removed_before_count", "binaries_counted")),
        _fmt(pooled_pct("removed_ours_count", "binaries_counted")),
        sum(s.box_shortcut_hits for s in ours_stats),
        sum(s.solver_calls for s in base_stats),
        sum(s.solver_calls for s in ours_stats),
    ])
    return EXIT_OK


def cmd_verify(args) -> int:
    net, domain = load_model_file(args.model)
    instances = ingest_csv(args.instances)
    _check_width(instances, net)
    config = _build_config(args, net.input_dim)
    explainer = Explainer(net, domain, config)
    writer = csv.writer(sys.stdout)
    writer.writerow(["instance", "predicted_class", "kept_indices",
                     "sufficiency_ok", "minimality_ok", "unverified"])
    rng = np.random.default_rng(args.seed)
    for idx, row in enumerate(instances.rows):
        explanation, _ = explainer.explain(row, args.mode)
        report = verify_explanation(net, row, explanation, domain,
                                    samples=args.samples, rng=rng,
                                    base_problem=explainer.base_problem)
        writer.writerow([
            idx, explanation.target,
            ";".join(str(i) for i in explanation.kept_indices),
            int(report.sufficiency_ok), int(report.minimality_ok),
            ";".join(str(i) for i in report.unverified),
        ])
    return EXIT_OK


def _add_common(sub, with_instances=True, with_mode=True) -> None:
    sub.add_argument("model", help="model JSON path")
    if with_instances:
        sub.add_argument("instances", help="instances CSV path")
    if with_mode:
        sub.add_argument("--mode", choices=[MODE_BASELINE, MODE_IMPROVED],
                         default=MODE_IMPROVED)
        sub.add_argument("--order", default=None,
                         help="'asc' or comma-separated attribute permutation")
    sub.add_argument("--tight-bounds", choices=["milp", "box"], default="milp")
    sub.add_argument("--seed", type=int, default=None)
    sub.add_argument("--jobs", type=int, default=1)
    sub.add_argument("--time-budget-ms", type=float, default=None)
    sub.add_argument("--tolerance", type=float, default=1e-6,
                     help="solver feasibility tolerance")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="boxplain",
        description="Minimal sufficient-attribute explanations for ReLU "
                    "classifiers, with exact solver checks.")
    subs = parser.add_subparsers(dest="command", required=True)
    _add_common(subs.add_parser("explain", help="one CSV row per instance"))
    _add_common(subs.add_parser("bounds", help="per-neuron tight and box bounds"),
                with_instances=False, with_mode=False)
    _add_common(subs.add_parser("bench", help="aggregate baseline-vs-improved row"))
    verify = subs.add_parser("verify", help="independently re-check explanations")
    _add_common(verify)
    verify.add_argument("--samples", type=int, default=1000)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"explain": cmd_explain, "bounds": cmd_bounds,
                "bench": cmd_bench, "verify": cmd_verify}
    try:
        return handlers[args.command](args)
    except (InputError, ModelFormatError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SolverFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
