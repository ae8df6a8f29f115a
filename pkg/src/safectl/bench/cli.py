"""Command line: run, sweep and report.

Exit codes: 0 success, 2 configuration or I/O error, 3 at least one run aborted
because its safe set was empty, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from ..errors import ConfigError, NumericalError
from ..metrics import greedy_comparator
from .io import emit_chart, emit_csv, emit_summary, read_summaries, summary_row, summary_table
from .noise import DEFAULT_PARAMS
from .runner import Problem, run_scenario
from .scenario import ALGORITHMS, load_scenario, parse_seeds

EXIT_OK, EXIT_CONFIG, EXIT_ABORT, EXIT_NUMERICAL = 0, 2, 3, 4


def _split(text, allowed, what):
    if text == "all":
        return list(allowed)
    items = [s.strip() for s in text.split(",") if s.strip()]
    for s in items:
        if s not in allowed:
            raise ConfigError(f"unknown {what} {s!r}; choose from {', '.join(allowed)}")
    return items


def run_one(cfg, seed, with_comparator):
    """One simulation, plus the hindsight comparator when requested."""
    log = run_scenario(cfg, seed)
    comp = None
    if with_comparator and log.aborted is None:
        prob = Problem(cfg)
        comp = greedy_comparator(log, prob.sys, prob.loss, prob.spec, cfg.W, cfg.comparator,
                                 prob.history_len())
        log.meta["regret"] = float(np.sum(log.loss) - np.sum(comp.loss))
    return log, comp


def _execute(jobs, n_workers):
    if n_workers <= 1:
        return [run_one(*j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n_workers) as pool:
        return list(pool.map(run_one, *zip(*jobs)))


def _base_config(args):
    cfg = load_scenario(args.scenario)
    kw = {}
    if getattr(args, "T", None) is not None:
        kw["T"] = args.T
    if args.literal_pendulum:
        kw["discretization"] = "literal"
    return cfg.with_(**kw) if kw else cfg


def _grid(args, cfg):
    algos = _split(args.algo, ALGORITHMS, "algorithm") if args.algo else [cfg.algorithm]
    noises = _split(args.noise, tuple(DEFAULT_PARAMS), "noise distribution") if args.noise else [cfg.noise]
    seeds = parse_seeds(args.seeds) if args.seeds else cfg.seeds
    return algos, noises, seeds


def _write_runs(results, out, stem):
    rows = []
    for log, comp in results:
        m = log.meta
        name = f"{m['scenario']}_{m['algorithm']}_{m['noise']}_T{log.meta['T']}_seed{log.seed}.csv"
        emit_csv(log, os.path.join(out, name), comp)
        rows.append(summary_row(log, comp))
    emit_summary(rows, os.path.join(out, f"summary_{stem}.csv"))
    return rows


def cmd_run(args) -> int:
    cfg = _base_config(args)
    algos, noises, seeds = _grid(args, cfg)
    out = args.out or cfg.out
    os.makedirs(out, exist_ok=True)
    jobs = [(cfg.with_(algorithm=a, noise=n), s, args.comparator or a == "greedy-oracle")
            for a in algos for n in noises for s in seeds]
    results = _execute(jobs, args.jobs)
    rows = _write_runs(results, out, f"run_{cfg.name}_T{cfg.T}_{'-'.join(algos)}")
    logs = [lg for lg, _ in results]
    for a in algos:
        mine = [lg for lg in logs if lg.meta["algorithm"] == a and lg.T > 0]
        if not mine:
            continue
        emit_chart(mine, "state-trajectory", os.path.join(out, f"{cfg.name}_{a}_state-trajectory.svg"))
        emit_chart(mine, "cumulative-loss", os.path.join(out, f"{cfg.name}_{a}_cumulative-loss.svg"))
    print(summary_table([dict(zip(("scenario", "algorithm", "noise", "seed", "T", "cumulative_loss",
                                   "safe"), map(str, r))) for r in rows]))
    return _abort_code(logs)


def cmd_sweep(args) -> int:
    cfg = _base_config(args)
    args.algo = args.algo or "safe-ogd,safe-ader"
    algos, noises, seeds = _grid(args, cfg)
    try:
        horizons = [int(h) for h in args.horizons.split(",") if h.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad horizon list {args.horizons!r}") from exc
    if not horizons or min(horizons) < 1:
        raise ConfigError("horizons must be positive integers")
    out = args.out or cfg.out
    os.makedirs(out, exist_ok=True)
    jobs = [(cfg.with_(algorithm=a, noise=n, T=T), s, True)
            for T in horizons for a in algos for n in noises for s in seeds]
    results = _execute(jobs, args.jobs)
    _write_runs(results, out, f"sweep_{cfg.name}_{'-'.join(algos)}")
    logs = [lg for lg, _ in results]
    ok = [lg for lg in logs if lg.aborted is None]
    if ok:
        emit_chart(ok, "regret-vs-T", os.path.join(out, f"{cfg.name}_regret-vs-T.svg"))
    print(f"{'algorithm':<14}{'noise':<13}{'T':>6}  {'regret/T':>12}  {'C_T/T':>10}")
    for a in algos:
        for n in noises:
            for T in horizons:
                sel = [(lg, c) for lg, c in results if lg.meta["algorithm"] == a
                       and lg.meta["noise"] == n and lg.T == T and c is not None]
                if not sel:
                    continue
                reg = np.mean([lg.meta["regret"] / T for lg, _ in sel])
                ct = np.mean([np.sum(np.linalg.norm(np.diff(c.u, axis=0), axis=1)) / T
                              for _, c in sel])
                print(f"{a:<14}{n:<13}{T:>6}  {reg:>12.6f}  {ct:>10.6f}")
    return _abort_code(logs)


def cmd_report(args) -> int:
    if not os.path.isdir(args.input):
        raise ConfigError(f"no such directory {args.input!r}")
    rows = read_summaries(args.input)
    if not rows:
        raise ConfigError(f"no summary CSV files in {args.input!r}")
    print(summary_table(rows))
    return EXIT_OK


def _abort_code(logs) -> int:
    aborted = [lg for lg in logs if lg.aborted]
    for lg in aborted:
        print(f"aborted: {lg.meta['algorithm']} {lg.meta['noise']} seed {lg.seed}: {lg.aborted}",
              file=sys.stderr)
    return EXIT_ABORT if aborted else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="safectl", description="Safe online control simulator")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--scenario", required=True, help="TOML file or built-in name (scalar, pendulum)")
        sp.add_argument("--seeds", help="'a..b' inclusive or comma list (default: from scenario)")
        sp.add_argument("--noise", help="comma list of distributions, or 'all'")
        sp.add_argument("--out", help="output directory (default: from scenario)")
        sp.add_argument("--literal-pendulum", action="store_true",
                        help="use the pendulum update without velocity carry-over")
        sp.add_argument("--jobs", type=int, default=1, help="parallel worker processes")

    r = sub.add_parser("run", help="simulate a scenario over seeds")
    common(r)
    r.add_argument("--algo", help=f"comma list from {', '.join(ALGORITHMS)}, or 'all'")
    r.add_argument("--T", type=int, help="override the horizon")
    r.add_argument("--comparator", action="store_true", help="also compute the hindsight comparator")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="regret over several horizons")
    common(s)
    s.add_argument("--algo", help="comma list (default: safe-ogd,safe-ader)")
    s.add_argument("--horizons", default="200,800,3200")
    s.set_defaults(func=cmd_sweep)

    rp = sub.add_parser("report", help="summarize the summary CSV files of a directory")
    rp.add_argument("--in", dest="input", required=True)
    rp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
