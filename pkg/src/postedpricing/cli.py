"""Config-driven experiment runner.

Subcommands: solve, simulate, report, bounds, gap.  Exit codes: 0 success,
2 configuration error, 3 numeric failure.  Given the same config and seed,
every subcommand produces byte-identical output files.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .config import ConfigError, ExperimentConfig, parse_config
from .distributions import UndefinedVirtualCostError
from .exante import greedy_submodular, solve_additive, solve_symmetric
from .mechanism import market_size, menu_from_solution
from .simulate import (Instance, approximation_report, bounds_csv_lines,
                       bounds_table, correlation_gap_experiment,
                       gap_csv_lines, report_csv_lines)
from .values import AdditiveValue, SymmetricValue

SOLUTION_COLUMNS = "agent,quantile,price_lo,price_hi,prob_lo,expected_spend"


def _solve_from_config(cfg: ExperimentConfig):
    kind = cfg.solver_kind
    if kind == "auto":
        if isinstance(cfg.value, AdditiveValue):
            kind = "additive"
        elif isinstance(cfg.value, SymmetricValue) and len(set(cfg.dists)) == 1:
            kind = "symmetric"
        else:
            kind = "greedy"
    if kind == "additive":
        if not isinstance(cfg.value, AdditiveValue):
            raise ConfigError("additive solver needs an additive value function")
        return kind, solve_additive(cfg.dists, cfg.value.as_array(), cfg.budget,
                                    grid_size=cfg.grid)
    if kind == "symmetric":
        if not isinstance(cfg.value, SymmetricValue) or len(set(cfg.dists)) != 1:
            raise ConfigError("symmetric solver needs a symmetric value function "
                              "and one common distribution")
        return kind, solve_symmetric(cfg.dists[0], cfg.value, cfg.budget,
                                     grid_size=cfg.grid)
    return kind, greedy_submodular(cfg.dists, cfg.value, cfg.budget, m=cfg.m,
                                   samples=cfg.marginal_samples, seed=cfg.seed,
                                   noisy=cfg.noisy,
                                   appendix_schedule=cfg.appendix_schedule,
                                   grid_size=cfg.grid)


def solution_record(sol) -> str:
    lines = [SOLUTION_COLUMNS]
    for i, (q, lot) in enumerate(zip(sol.quantiles, sol.lotteries)):
        spend = lot.expected_spend
        lines.append(f"{i},{q:.12g},{lot.price_lo:.12g},{lot.price_hi:.12g},"
                     f"{lot.prob_lo:.12g},{spend:.12g}")
    return "\n".join(lines) + "\n"


def _write(out_dir: str, name: str, text: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, name)
    with open(path, "w") as fh:
        fh.write(text)
    return path


def cmd_solve(cfg: ExperimentConfig) -> int:
    kind, sol = _solve_from_config(cfg)
    menu = menu_from_solution(sol)
    k = market_size(menu, cfg.budget).k
    path = _write(cfg.out, "solution.csv", solution_record(sol))
    print(f"solver={kind} n={cfg.n} objective={sol.objective:.12g} "
          f"spend={sol.expected_spend:.12g} k={k:.12g}")
    print(f"wrote {path}")
    return 0


def _variant_for(cfg: ExperimentConfig) -> str:
    if cfg.mechanism_kind == "sequential":
        if not isinstance(cfg.value, AdditiveValue):
            raise ConfigError("sequential mechanism requires an additive value function")
        return "additive-sequential"
    if isinstance(cfg.value, SymmetricValue) and len(set(cfg.dists)) == 1:
        return "symmetric-oblivious"
    return "submodular-oblivious"


def cmd_simulate(cfg: ExperimentConfig, echo: bool = False) -> int:
    variant = _variant_for(cfg)
    instance = Instance(dists=cfg.dists, value=cfg.value, budget=cfg.budget,
                        label=f"config-n{cfg.n}")
    eps = None if cfg.epsilon == "auto" else cfg.epsilon
    report = approximation_report(instance, variant, trials=cfg.trials,
                                  seed=cfg.seed, epsilon=eps,
                                  n_orders=cfg.n_orders, grid_size=cfg.grid)
    path = _write(cfg.out, "report.csv", "\n".join(report_csv_lines([report])) + "\n")
    print(f"variant={variant} ratio={report.ratio:.6g} "
          f"bound={report.theoretical_bound:.6g} k={report.k:.6g}")
    if echo:
        for line in report_csv_lines([report]):
            print(line)
    print(f"wrote {path}")
    return 0


def _parse_k_list(text: str):
    try:
        ks = [float(tok) for tok in text.replace(",", " ").split()]
    except ValueError as exc:
        raise ConfigError(f"bad k list: {exc}") from None
    if not ks:
        raise ConfigError("empty k list")
    return ks


def cmd_bounds(k_text: str, out_dir: str) -> int:
    rows = bounds_table(_parse_k_list(k_text))
    path = _write(out_dir, "bounds.csv", "\n".join(bounds_csv_lines(rows)) + "\n")
    for line in bounds_csv_lines(rows):
        print(line)
    print(f"wrote {path}")
    return 0


def cmd_gap(k_text: str, n_factor: int, out_dir: str) -> int:
    rows = []
    for k in _parse_k_list(k_text):
        k = int(k)
        rows.append(correlation_gap_experiment(k, max(k * n_factor, k + 1)))
    path = _write(out_dir, "gap.csv", "\n".join(gap_csv_lines(rows)) + "\n")
    for line in gap_csv_lines(rows):
        print(line)
    print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="postedpricing",
        description="Posted-price mechanisms for budget-feasible procurement")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True, help="experiment config file")
        p.add_argument("--seed", type=int, default=None, help="override harness seed")
        p.add_argument("--out", default=None, help="override output directory")
        p.add_argument("--trials", type=int, default=None, help="override trial count")

    add_common(sub.add_parser("solve", help="compute the ex ante price menu"))
    add_common(sub.add_parser("simulate", help="run the mechanism and write report.csv"))
    add_common(sub.add_parser("report", help="simulate and echo the report row"))

    b = sub.add_parser("bounds", help="tabulate guarantee formulas over market sizes")
    b.add_argument("--k", required=True, help="comma-separated market sizes")
    b.add_argument("--out", default="out")

    g = sub.add_parser("gap", help="capped-cardinality correlation gap experiments")
    g.add_argument("--k", required=True, help="comma-separated cap sizes")
    g.add_argument("--n-factor", type=int, default=10,
                   help="agents per unit of cap size (default 10)")
    g.add_argument("--out", default="out")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "bounds":
            return cmd_bounds(args.k, args.out)
        if args.command == "gap":
            return cmd_gap(args.k, args.n_factor, args.out)
        cfg = parse_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.out is not None:
            cfg.out = args.out
        if args.trials is not None:
            if args.trials < 1:
                raise ConfigError("trials must be positive")
            cfg.trials = args.trials
        if args.command == "solve":
            return cmd_solve(cfg)
        if args.command == "simulate":
            return cmd_simulate(cfg)
        return cmd_simulate(cfg, echo=True)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, UndefinedVirtualCostError,
            FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
