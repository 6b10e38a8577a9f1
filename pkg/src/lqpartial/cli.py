"""Command-line entry point.

    lqpartial run <config> [--seed S] [--output DIR] [--no-figures]
    lqpartial check <config> [--seed S]
    lqpartial sweep <config> --param KEY --values v1,v2,... [--seed S] ...

`run` writes trajectory.csv, summary.csv and PNG figures next to them;
`check` executes the invariant suite and reports pass/fail counts;
`sweep` reruns the scenario over a list of values for one dotted config
key and collects a combined sweep.csv plus a figure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .checks import run_checks
from .config import load_config, override_key, scenario_from_dict
from .control import (
    solve_mu_1d,
    solve_Z_1d,
    value_function,
    value_t_derivative,
    value_t_derivative_gaussian,
)
from .errors import LqPartialError
from .harness import (
    Scenario,
    estimate_cost_physical,
    estimate_cost_reference,
    simulate_closed_loop,
)
from .model import GaussianDensity
from .offline import solve_gaussian_offline, solve_offline
from .report import (
    fmt,
    render_summary_figure,
    render_sweep_figure,
    render_trajectory_figure,
    write_summary_csv,
    write_trajectory_csv,
)


def _summary_rows(scenario: Scenario, offline):
    """Value-function comparison table: analytic route vs both estimators."""
    mu = solve_mu_1d(scenario.model, scenario.q0, offline, verify=False)
    analytic = value_function(scenario.q0, scenario.model, offline, mu)
    ref_mean, ref_se = estimate_cost_reference(scenario, offline)
    phys_mean, phys_se = estimate_cost_physical(scenario, offline)
    rows = [
        ("value_function", analytic, None, None),
        ("cost_reference", analytic, ref_mean, ref_se),
        ("cost_physical", analytic, phys_mean, phys_se),
    ]
    if isinstance(scenario.q0, GaussianDensity):
        z_field = solve_Z_1d(
            scenario.model, scenario.q0, offline, n_x=41, n_rho=21, verify=False
        )
        gauss = solve_gaussian_offline(
            scenario.model, scenario.grid, offline, scenario.q0.mean0, scenario.q0.cov0
        )
        primary = value_t_derivative(scenario.q0, scenario.model, offline, z_field)
        closed = value_t_derivative_gaussian(scenario.model, offline, gauss)
        rows.append(("value_t_derivative", closed, primary, None))
    return rows


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    scenario = scenario_from_dict(cfg)
    if args.seed is not None:
        scenario = replace(scenario, seed=args.seed)
    out_dir = Path(args.output or scenario.output_dir or ".")
    out_dir.mkdir(parents=True, exist_ok=True)

    offline = solve_offline(scenario.model, scenario.grid)
    record = simulate_closed_loop(scenario, replication_seed=0, offline=offline)
    rows = _summary_rows(scenario, offline)

    traj_path = write_trajectory_csv(record, out_dir / "trajectory.csv")
    summary_path = write_summary_csv(rows, out_dir / "summary.csv")
    written = [traj_path, summary_path]
    if not args.no_figures:
        written.append(render_trajectory_figure(record, out_dir / "trajectory.png"))
        written.append(render_summary_figure(rows, out_dir / "summary.png"))
    for path in written:
        print(f"wrote {path}")
    for quantity, analytic, estimate, stderr in rows:
        parts = [f"{quantity}:"]
        if analytic is not None:
            parts.append(f"analytic={analytic:.6f}")
        if estimate is not None:
            parts.append(f"estimate={estimate:.6f}")
        if stderr is not None:
            parts.append(f"stderr={stderr:.6f}")
        print("  " + " ".join(parts))
    return 0


def _cmd_check(args) -> int:
    cfg = load_config(args.config)
    scenario = scenario_from_dict(cfg)
    if args.seed is not None:
        scenario = replace(scenario, seed=args.seed)
    results = run_checks(scenario)
    for res in results:
        print(f"{'PASS' if res.passed else 'FAIL'}  {res.name}: {res.detail}")
    n_pass = sum(r.passed for r in results)
    print(f"{n_pass}/{len(results)} checks passed")
    return 0 if n_pass == len(results) else 1


def _parse_value(text: str):
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def _cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    values = [_parse_value(v) for v in args.values.split(",")]
    out_dir = Path(args.output or cfg.get("output", {}).get("dir", "."))
    out_dir.mkdir(parents=True, exist_ok=True)

    table = []
    for value in values:
        sub_cfg = override_key(cfg, args.param, value)
        scenario = scenario_from_dict(sub_cfg)
        if args.seed is not None:
            scenario = replace(scenario, seed=args.seed)
        offline = solve_offline(scenario.model, scenario.grid)
        for quantity, analytic, estimate, stderr in _summary_rows(scenario, offline):
            table.append((value, quantity, analytic, estimate, stderr))
        print(f"{args.param} = {value}: done")

    lines = ["param,value,quantity,analytic,estimate,stderr"]
    for value, quantity, analytic, estimate, stderr in table:
        lines.append(
            f"{args.param},{value},{quantity},{fmt(analytic)},{fmt(estimate)},{fmt(stderr)}"
        )
    sweep_path = out_dir / "sweep.csv"
    sweep_path.write_text("\n".join(lines) + "\n")
    print(f"wrote {sweep_path}")
    if not args.no_figures:
        fig_path = render_sweep_figure(args.param, values, table, out_dir / "sweep.png")
        print(f"wrote {fig_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lqpartial",
        description="Partial-information LQ control with general initial laws",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="simulate a scenario and write reports")
    p_run.add_argument("config")
    p_run.add_argument("--seed", type=int, default=None, help="override mc.seed")
    p_run.add_argument("--output", default=None, help="override output.dir")
    p_run.add_argument("--no-figures", action="store_true")
    p_run.set_defaults(func=_cmd_run)

    p_check = sub.add_parser("check", help="run the invariant suite")
    p_check.add_argument("config")
    p_check.add_argument("--seed", type=int, default=None)
    p_check.set_defaults(func=_cmd_check)

    p_sweep = sub.add_parser("sweep", help="rerun a scenario over parameter values")
    p_sweep.add_argument("config")
    p_sweep.add_argument("--param", required=True, help="dotted config key, e.g. model.T")
    p_sweep.add_argument("--values", required=True, help="comma-separated values")
    p_sweep.add_argument("--seed", type=int, default=None)
    p_sweep.add_argument("--output", default=None)
    p_sweep.add_argument("--no-figures", action="store_true")
    p_sweep.set_defaults(func=_cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except LqPartialError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
