"""Round loop, regret accounting, replication and result files."""
from __future__ import annotations

import csv
import logging
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .policies import POLICY_NAMES, make_policy, oracle_step
from .workload import (
    ATTACK,
    NORMAL,
    Catalog,
    attack_demand,
    geometric_catalog,
    is_attack_round,
    load_ratings_catalog,
    read_catalog,
    sample_demand,
    zipf_catalog,
)

__all__ = [
    "ConfigError",
    "SimConfig",
    "RoundRecord",
    "AggregateRow",
    "PRESETS",
    "resolve_delta",
    "build_catalog",
    "parse_config_file",
    "run",
    "run_replications",
    "cumulative_regret",
    "aggregate_replications",
    "write_records",
    "read_records",
    "write_aggregate",
    "read_aggregate",
    "RECORD_HEADER",
    "AGGREGATE_HEADER",
]

log = logging.getLogger("topcache.events")

RECORD_HEADER = ["t", "policy", "rate", "oracle_rate", "cum_regret", "n2", "num_partitions", "round_kind"]
AGGREGATE_HEADER = [
    "t", "policy", "mean_rate", "std_rate", "mean_oracle_rate",
    "mean_cum_regret", "std_cum_regret", "n_runs",
]


class ConfigError(ValueError):
    pass


_DELTA_NK = re.compile(r"^1/\(?\s*n\s*\*?\s*k\s*\)?$", re.IGNORECASE)


def resolve_delta(delta, rounds: int, users: int) -> float:
    """Numeric delta; the literal ``1/nK`` means ``1 / (rounds * users)``."""
    if isinstance(delta, str):
        text = delta.strip()
        if _DELTA_NK.match(text):
            value = 1.0 / (rounds * users)
        else:
            try:
                value = float(text)
            except ValueError:
                raise ConfigError(f"cannot parse delta {delta!r}") from None
    else:
        value = float(delta)
    if not 0.0 < value < 1.0:
        raise ConfigError(f"delta must lie in (0, 1), got {value}")
    return value


@dataclass(frozen=True)
class SimConfig:
    rounds: int = 1000
    users: int = 50
    cache: float = 10
    delta: float | str = 0.1
    history: int = 10
    method: int = 2
    attack_period: int = 0
    attack_phase: int = 0
    count_attacks: bool = True
    seed: int = 0
    replications: int = 20
    policies: tuple[str, ...] = ("opm1", "opm2", "nsk", "oracle")
    catalog: str = "zipf:1000:0.8"

    def validate(self, n: int | None = None) -> None:
        if self.rounds < 1:
            raise ConfigError("rounds must be >= 1")
        if self.users < 1:
            raise ConfigError("users must be >= 1")
        if self.history < 1:
            raise ConfigError("history must be >= 1")
        if self.method not in (1, 2):
            raise ConfigError("method must be 1 or 2")
        if self.attack_period < 0:
            raise ConfigError("attack_period must be >= 0")
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")
        if not self.policies:
            raise ConfigError("at least one policy is required")
        for name in self.policies:
            if name not in POLICY_NAMES + ("opm",):
                raise ConfigError(f"unknown policy {name!r}")
        if len(set(self.policies)) != len(self.policies):
            raise ConfigError("policies must be distinct")
        if self.cache < 0 or (n is not None and self.cache > n):
            raise ConfigError(f"cache must lie in [0, N], got {self.cache}")
        if "nsk" in self.policies and self.cache == 0:
            raise ConfigError("nsk needs cache > 0 for its 1/(K M) threshold")
        resolve_delta(self.delta, self.rounds, self.users)

    @property
    def delta_value(self) -> float:
        return resolve_delta(self.delta, self.rounds, self.users)

    @classmethod
    def from_mapping(cls, values: dict) -> "SimConfig":
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            key = key.replace("-", "_")
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            kwargs[key] = _coerce(key, raw)
        return cls(**kwargs)

    def with_overrides(self, **values) -> "SimConfig":
        return replace(self, **{k: _coerce(k, v) for k, v in values.items() if v is not None})


def _coerce(key: str, raw):
    if not isinstance(raw, str):
        return tuple(raw) if key == "policies" else raw
    raw = raw.strip()
    if key in ("rounds", "users", "history", "method", "attack_period", "attack_phase", "seed", "replications"):
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{key} must be an integer, got {raw!r}") from None
    if key == "cache":
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"cache must be a number, got {raw!r}") from None
    if key == "count_attacks":
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"count_attacks must be a boolean, got {raw!r}")
    if key == "policies":
        return tuple(p.strip() for p in raw.split(",") if p.strip())
    return raw


def parse_config_file(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    values = {}
    with Path(path).open() as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            values[key] = value
    return values


# The two scenarios of the reference experiments; rounds are an artifact choice.
PRESETS = {
    "attack100": dict(users=100, cache=10, attack_period=100, rounds=3000),
    "quiet50": dict(users=50, cache=10, attack_period=0, rounds=3000),
}


def build_catalog(spec: str) -> Catalog:
    """``zipf:<n>:<s>``, ``geom:<n>:<ratio>``, ``ratings:<path>`` or ``catalog:<path>``."""
    kind, _, rest = spec.partition(":")
    try:
        if kind == "zipf":
            n, s = rest.split(":")
            return zipf_catalog(int(n), float(s))
        if kind == "geom":
            n, r = rest.split(":")
            return geometric_catalog(int(n), float(r))
    except ValueError as exc:
        raise ConfigError(f"bad catalog spec {spec!r}: {exc}") from None
    if kind == "ratings":
        return load_ratings_catalog(rest)
    if kind == "catalog":
        return read_catalog(rest)
    raise ConfigError(f"unknown catalog spec {spec!r}")


@dataclass(frozen=True)
class RoundRecord:
    t: int
    policy: str
    rate: float
    oracle_rate: float
    cum_regret: float
    n2: int
    num_partitions: int
    round_kind: str = NORMAL


def run(config: SimConfig, catalog: Catalog | None = None, seed: int | None = None) -> list[RoundRecord]:
    """One replication; records are ordered by round, then by policy order."""
    if catalog is None:
        catalog = build_catalog(config.catalog)
    config.validate(catalog.n)
    seed = config.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    n, m, k = catalog.n, config.cache, config.users
    delta = config.delta_value
    policies = [make_policy(p, n, m, k, delta, config.history, config.method) for p in config.policies]
    regret = dict.fromkeys(config.policies, 0.0)
    records: list[RoundRecord] = []
    for t in range(1, config.rounds + 1):
        if is_attack_round(t, config.attack_period, config.attack_phase):
            demand = attack_demand(n)
        else:
            demand = sample_demand(catalog, k, rng)
        oracle_rate, oracle_n2 = oracle_step(demand.requests, m, n)
        counted = config.count_attacks or demand.round_kind != ATTACK
        for policy in policies:
            if policy.name == "oracle":
                rate, n2, parts = oracle_rate, oracle_n2, n
            else:
                rate, n2, parts = policy.step(demand)
            if counted:
                regret[policy.name] += rate - oracle_rate
            records.append(RoundRecord(t, policy.name, rate, oracle_rate, regret[policy.name], n2, parts, demand.round_kind))
    return records


def _run_seed(args):
    config, catalog, seed = args
    return run(config, catalog, seed)


def run_replications(config: SimConfig, catalog: Catalog | None = None, workers: int = 1) -> list[list[RoundRecord]]:
    """``config.replications`` runs with seeds ``seed, seed+1, ...``; independent, optionally in parallel."""
    if catalog is None:
        catalog = build_catalog(config.catalog)
    config.validate(catalog.n)
    jobs = [(config, catalog, config.seed + r) for r in range(config.replications)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_seed, jobs))
    return [_run_seed(job) for job in jobs]


def cumulative_regret(records, policy: str | None = None, skip_attacks: bool = False) -> list[tuple[int, float]]:
    """Prefix sums of ``rate - oracle_rate`` for one policy."""
    out = []
    total = 0.0
    for rec in records:
        if policy is not None and rec.policy != policy:
            continue
        if not (skip_attacks and rec.round_kind == ATTACK):
            total += rec.rate - rec.oracle_rate
        out.append((rec.t, total))
    return out


@dataclass(frozen=True)
class AggregateRow:
    t: int
    policy: str
    mean_rate: float
    std_rate: float
    mean_oracle_rate: float
    mean_cum_regret: float
    std_cum_regret: float
    n_runs: int


def aggregate_replications(runs) -> list[AggregateRow]:
    """Per-round mean and sample standard deviation across runs."""
    runs = [list(r) for r in runs]
    if not runs:
        raise ValueError("no runs to aggregate")
    length = len(runs[0])
    if any(len(r) != length for r in runs):
        raise ValueError("runs have different lengths")
    keys = [(rec.t, rec.policy) for rec in runs[0]]
    for r in runs[1:]:
        if [(rec.t, rec.policy) for rec in r] != keys:
            raise ValueError("runs cover different rounds or policies")
    rate = np.array([[rec.rate for rec in r] for r in runs])
    orate = np.array([[rec.oracle_rate for rec in r] for r in runs])
    reg = np.array([[rec.cum_regret for rec in r] for r in runs])
    ddof = 1 if len(runs) > 1 else 0
    std_rate, std_reg = rate.std(axis=0, ddof=ddof), reg.std(axis=0, ddof=ddof)
    mean_rate, mean_orate, mean_reg = rate.mean(axis=0), orate.mean(axis=0), reg.mean(axis=0)
    return [
        AggregateRow(t, p, float(mean_rate[j]), float(std_rate[j]), float(mean_orate[j]),
                     float(mean_reg[j]), float(std_reg[j]), len(runs))
        for j, (t, p) in enumerate(keys)
    ]


def _write_rows(rows, header, path) -> None:
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                d = asdict(row)
                w.writerow([repr(d[h]) if isinstance(d[h], float) else d[h] for h in header])
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc


def _read_rows(path, header, cls, types):
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        got = next(reader)
        if got != header:
            raise ValueError(f"{path}: unexpected header {got}")
        return [cls(*(tp(x) for tp, x in zip(types, row))) for row in reader]


def write_records(records, path, format: str = "csv") -> None:
    if format != "csv":
        raise ValueError(f"unsupported format {format!r}")
    _write_rows(records, RECORD_HEADER, path)


def read_records(path) -> list[RoundRecord]:
    return _read_rows(path, RECORD_HEADER, RoundRecord, (int, str, float, float, float, int, int, str))


def write_aggregate(rows, path) -> None:
    _write_rows(rows, AGGREGATE_HEADER, path)


def read_aggregate(path) -> list[AggregateRow]:
    return _read_rows(path, AGGREGATE_HEADER, AggregateRow, (int, str, float, float, float, float, float, int))
