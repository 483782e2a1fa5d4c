"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 runtime error, 3 golden-check failure.
"""
from __future__ import annotations

import argparse
import csv
import itertools
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .rate_core import DemandStats, oracle_best_cut, total_rate
from .ranker import RankerState
from .simulator import (
    PRESETS,
    ConfigError,
    SimConfig,
    aggregate_replications,
    build_catalog,
    parse_config_file,
    resolve_delta,
    run_replications,
    write_aggregate,
    write_records,
)
from .workload import RatingsParseError, load_ratings_catalog, sample_demand, write_catalog

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_GOLDEN = 0, 1, 2, 3

# worked example: M = 1, requests at popularity ranks 310, 434, 177, 84, 165
GOLDEN_REQUESTS = (310, 434, 177, 84, 165)
GOLDEN_RATES = (4.9881, 4.9819, 4.9662, 4.9678, 4.9655)
GOLDEN_TOL = 1e-4

log = logging.getLogger("topcache.events")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_scenario_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--rounds", type=int)
    p.add_argument("--users", type=int)
    p.add_argument("--cache", type=float)
    p.add_argument("--delta", help="number in (0,1) or the literal 1/nK")
    p.add_argument("--history", type=int)
    p.add_argument("--method", type=int, choices=(1, 2))
    p.add_argument("--attack-period", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--policies", help="comma list of opm1,opm2,nsk,oracle")
    p.add_argument("--catalog", help="zipf:<n>:<s> | geom:<n>:<ratio> | ratings:<path> | catalog:<path>")
    p.add_argument("--replications", type=int)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--config", type=Path, help="key = value file; flags override it")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--out", type=Path, default=Path("results"))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="topcache", description="Coded caching with learned partial rankings.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="run policies against the oracle and write regret series")
    _add_scenario_flags(p)

    sub.add_parser("oracle-example", help="print and self-check the worked oracle example")

    p = sub.add_parser("rank-demo", help="run only the ranker and write partition sizes per round")
    p.add_argument("--rounds", type=int, default=200)
    p.add_argument("--users", type=int, default=3000)
    p.add_argument("--delta", default="1/nK")
    p.add_argument("--catalog", default="zipf:200:0.8")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=Path("partition_sizes.csv"))

    p = sub.add_parser("ingest", help="turn a ratings file into a catalog cache file")
    p.add_argument("ratings", type=Path)
    p.add_argument("--out", type=Path, default=Path("catalog.csv"))

    p = sub.add_parser("sweep", help="run one scenario over a grid of delta and/or history values")
    _add_scenario_flags(p)
    p.add_argument("--deltas", help="comma list, e.g. 0.9,0.1,1/nK")
    p.add_argument("--histories", help="comma list, e.g. 1,10,50")
    return parser


def resolve_config(args) -> SimConfig:
    """Defaults, then preset, then config file, then explicit flags."""
    config = SimConfig()
    if args.preset:
        config = config.with_overrides(**PRESETS[args.preset])
    if args.config:
        file_values = {k.replace("-", "_"): v for k, v in parse_config_file(args.config).items()}
        SimConfig.from_mapping(file_values)  # rejects unknown keys
        config = config.with_overrides(**file_values)
    flags = dict(
        rounds=args.rounds, users=args.users, cache=args.cache, delta=args.delta,
        history=args.history, method=args.method, attack_period=args.attack_period,
        seed=args.seed, policies=args.policies, catalog=args.catalog,
        replications=args.replications,
    )
    return config.with_overrides(**flags)


def _run_experiment(config: SimConfig, out: Path, workers: int, catalog=None) -> list:
    out.mkdir(parents=True, exist_ok=True)
    runs = run_replications(config, catalog, workers=workers)
    for r, records in enumerate(runs):
        write_records(records, out / f"run_seed{config.seed + r}.csv")
    agg = aggregate_replications(runs)
    write_aggregate(agg, out / "aggregate.csv")
    return agg


def _final_regret(agg) -> dict[str, float]:
    last_t = agg[-1].t
    return {row.policy: row.mean_cum_regret for row in agg if row.t == last_t}


def _attach_event_log(out: Path) -> logging.Handler:
    out.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(out / "events.log", mode="w")
    handler.setFormatter(logging.Formatter("%(levelname)s %(message)s"))
    log.addHandler(handler)
    log.setLevel(logging.INFO)
    return handler


def cmd_simulate(args) -> int:
    config = resolve_config(args)
    catalog = build_catalog(config.catalog)
    config.validate(catalog.n)
    handler = _attach_event_log(args.out)
    try:
        agg = _run_experiment(config, args.out, args.workers, catalog)
    finally:
        log.removeHandler(handler)
        handler.close()
    print(f"# N={catalog.n} K={config.users} M={config.cache:g} rounds={config.rounds} "
          f"replications={config.replications} delta={config.delta_value:.6g}")
    for policy, regret in _final_regret(agg).items():
        print(f"{policy}\t{regret:.6f}")
    return EXIT_OK


def _braces(items) -> str:
    return "{" + ",".join(map(str, items)) + "}"


def cmd_oracle_example(args) -> int:
    start = time.perf_counter()
    ranks = sorted(GOLDEN_REQUESTS)
    n_e = len(ranks)
    ok = True
    best = oracle_best_cut(ranks, 1, max(ranks))
    print(f"requests {_braces(GOLDEN_REQUESTS)}  M=1  sorted {_braces(ranks)}")
    print(f"{'popular requests':<28}{'rate':>10}{'expected':>10}")
    for h, (cut, expected) in enumerate(zip(ranks, GOLDEN_RATES), start=1):
        rate = total_rate(cut, 1, DemandStats(n_e, h))
        mark = " <- min" if cut == best.n2 else ""
        ok &= abs(rate - expected) <= GOLDEN_TOL
        print(f"{_braces(ranks[:h]):<28}{rate:>10.4f}{expected:>10.4f}{mark}")
    ok &= best.n2 == ranks[-1] and abs(best.rate - GOLDEN_RATES[-1]) <= GOLDEN_TOL
    print(f"best cut n2={best.n2} rate={best.rate:.4f}  ({time.perf_counter() - start:.3f}s)")
    if not ok:
        print("golden check FAILED", file=sys.stderr)
        return EXIT_GOLDEN
    return EXIT_OK


def cmd_rank_demo(args) -> int:
    catalog = build_catalog(args.catalog)
    delta = resolve_delta(args.delta, args.rounds, args.users)
    rng = np.random.default_rng(args.seed)
    state = RankerState(catalog.n, delta)
    rows = [[0, *state.partitioning.sizes.tolist()]]
    for t in range(1, args.rounds + 1):
        state.process_round(sample_demand(catalog, args.users, rng).counts(catalog.n))
        rows.append([t, *state.partitioning.sizes.tolist()])
    width = max(len(r) for r in rows) - 1
    args.out.parent.mkdir(parents=True, exist_ok=True)
    with args.out.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", *(f"block_{i}" for i in range(1, width + 1))])
        for r in rows:
            w.writerow(r + [0] * (width + 1 - len(r)))
    print(f"wrote {len(rows)} rows to {args.out}; final blocks: {len(rows[-1]) - 1}")
    return EXIT_OK


def cmd_ingest(args) -> int:
    catalog = load_ratings_catalog(args.ratings)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    write_catalog(catalog, args.out)
    print(f"{catalog.n} files, top popularity {catalog.popularity[0]:.6g}; wrote {args.out}")
    return EXIT_OK


def _split(text: str | None) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()] if text else []


def cmd_sweep(args) -> int:
    deltas, histories = _split(args.deltas), _split(args.histories)
    if not deltas and not histories:
        raise UsageError("sweep needs a non-empty --deltas and/or --histories grid")
    base = resolve_config(args)
    catalog = build_catalog(base.catalog)
    grid = list(itertools.product(deltas or [None], histories or [None]))
    summary = []
    handler = _attach_event_log(args.out)
    try:
        for delta, history in grid:
            config = base.with_overrides(delta=delta, history=history)
            config.validate(catalog.n)
            name = "_".join(f"{k}={v}" for k, v in (("delta", delta), ("history", history)) if v is not None)
            agg = _run_experiment(config, args.out / name.replace("/", "over"), args.workers, catalog)
            for policy, regret in _final_regret(agg).items():
                summary.append((config.delta, config.history, policy, regret))
    finally:
        log.removeHandler(handler)
        handler.close()
    with (args.out / "summary.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["delta", "history", "policy", "final_regret"])
        for d, h, p, r in summary:
            w.writerow([d, h, p, repr(r)])
    for d, h, p, r in summary:
        print(f"delta={d}\thistory={h}\t{p}\t{r:.6f}")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "oracle-example": cmd_oracle_example,
    "rank-demo": cmd_rank_demo,
    "ingest": cmd_ingest,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        print(f"topcache {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, RatingsParseError, ValueError) as exc:
        print(f"topcache {args.command}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
