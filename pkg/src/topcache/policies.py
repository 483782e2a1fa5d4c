"""Placement policies sharing one round interface.

Every policy first commits a :class:`PolicyDecision` using only past
rounds, then is charged the delivery rate of the revealed demand and
finally learns from it.  :meth:`Policy.step` enforces that order.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .rate_core import oracle_best_cut, total_rate_array
from .ranker import Partitioning, RankerState
from .workload import Demand

__all__ = [
    "PolicyDecision",
    "HistoryWindow",
    "merge_window",
    "opm_select_group",
    "nsk_select_group",
    "oracle_step",
    "Policy",
    "PartitionPolicy",
    "NSKPolicy",
    "OraclePolicy",
    "make_policy",
    "POLICY_NAMES",
]


@dataclass(frozen=True)
class PolicyDecision:
    popular: np.ndarray  # boolean mask over files
    b: int | None = None  # leading blocks merged (partition policy only)

    @property
    def n2(self) -> int:
        return int(self.popular.sum())

    @property
    def popular_set(self) -> set[int]:
        return set(np.flatnonzero(self.popular).tolist())


class HistoryWindow:
    """The last ``h`` demands, oldest first."""

    def __init__(self, h: int):
        if h < 1:
            raise ValueError("history length must be at least 1")
        self.h = h
        self.demands: deque[np.ndarray] = deque(maxlen=h)

    def push(self, requests) -> None:
        self.demands.append(np.unique(np.asarray(requests, dtype=np.int64)))

    def __len__(self):
        return len(self.demands)

    def __iter__(self):
        return iter(self.demands)


def merge_window(window) -> np.ndarray:
    """Distinct union of all demands in the window."""
    parts = list(window)
    if not parts:
        return np.empty(0, dtype=np.int64)
    return np.unique(np.concatenate(parts))


def _prefix_rates(partitioning: Partitioning, requests: np.ndarray, m: float) -> np.ndarray:
    """Rate of every prefix choice ``b = 1..M`` against one distinct demand."""
    sizes = partitioning.sizes
    n2 = np.cumsum(sizes)
    req_blocks = np.bincount(partitioning.labels[requests], minlength=sizes.size)
    h = np.cumsum(req_blocks)
    return total_rate_array(n2, m, requests.size, h)


def _decision(partitioning: Partitioning, b: int) -> PolicyDecision:
    return PolicyDecision(partitioning.labels < b, b)


def opm_select_group(partitioning: Partitioning, window, m: float, method: int = 2) -> PolicyDecision:
    """Pick how many leading blocks to cache from recent demands.

    Method 1 merges the window into one demand and takes the best prefix.
    Method 2 takes the best prefix of every window round and returns the
    most frequent one, preferring the smaller ``b`` on ties.
    With an empty window every file is cached.
    """
    if method not in (1, 2):
        raise ValueError(f"method must be 1 or 2, got {method}")
    rounds = list(window)
    if not rounds:
        return _decision(partitioning, partitioning.num_blocks)
    if method == 1:
        rates = _prefix_rates(partitioning, merge_window(rounds), m)
        return _decision(partitioning, int(np.argmin(rates)) + 1)
    votes = np.zeros(partitioning.num_blocks, dtype=np.int64)
    for req in rounds:
        votes[int(np.argmin(_prefix_rates(partitioning, req, m)))] += 1
    return _decision(partitioning, int(np.argmax(votes)) + 1)


def nsk_select_group(request_counts, total_requests: int, k: int, m: float) -> PolicyDecision:
    """Cache the files whose empirical popularity reaches ``1 / (k m)``."""
    if k * m <= 0:
        raise ValueError("threshold 1/(k m) needs k > 0 and m > 0")
    counts = np.asarray(request_counts)
    if total_requests < 0:
        raise ValueError("total_requests must be non-negative")
    if total_requests == 0:
        # uniform prior 1/N
        return PolicyDecision(np.full(counts.size, k * m >= counts.size))
    # counts/total >= 1/(k m), cross-multiplied to stay exact
    return PolicyDecision(counts * (k * m) >= total_requests)


def oracle_step(requests, m: float, n: int, true_rank=None) -> tuple[float, int]:
    """Clairvoyant best prefix cut of the true order; returns ``(rate, n2)``.

    ``true_rank`` maps file index to 1-based rank (identity when omitted).
    """
    distinct = np.unique(np.asarray(requests, dtype=np.int64))
    ranks = distinct + 1 if true_rank is None else np.sort(np.asarray(true_rank)[distinct])
    best = oracle_best_cut(ranks, m, n)
    return best.rate, best.n2


class Policy:
    name = "policy"

    def __init__(self, n: int, m: float):
        self.n = n
        self.m = m

    def decide(self) -> PolicyDecision:
        raise NotImplementedError

    def learn(self, demand: Demand) -> None:
        raise NotImplementedError

    @property
    def num_partitions(self) -> int:
        raise NotImplementedError

    def charge(self, decision: PolicyDecision, demand: Demand) -> float:
        distinct = demand.distinct()
        h = int(decision.popular[distinct].sum())
        return float(total_rate_array(decision.n2, self.m, distinct.size, h))

    def step(self, demand: Demand) -> tuple[float, int, int]:
        """Decide, pay, learn; returns ``(rate, n2, num_partitions)`` of the decision."""
        decision = self.decide()
        parts = self.num_partitions
        rate = self.charge(decision, demand)
        self.learn(demand)
        return rate, decision.n2, parts


class PartitionPolicy(Policy):
    """Caches a prefix of the learned partition order (OPM1 / OPM2)."""

    def __init__(self, n: int, m: float, delta: float, history: int = 10, method: int = 2):
        super().__init__(n, m)
        if method not in (1, 2):
            raise ValueError(f"method must be 1 or 2, got {method}")
        self.method = method
        self.name = f"opm{method}"
        self.ranker = RankerState(n, delta)
        self.window = HistoryWindow(history)

    @property
    def num_partitions(self) -> int:
        return self.ranker.partitioning.num_blocks

    def decide(self) -> PolicyDecision:
        return opm_select_group(self.ranker.partitioning, self.window, self.m, self.method)

    def learn(self, demand: Demand) -> None:
        self.window.push(demand.requests)
        self.ranker.process_round(demand.counts(self.n))


class NSKPolicy(Policy):
    """Frequency estimate with a fixed ``1/(k m)`` popularity threshold."""

    name = "nsk"

    def __init__(self, n: int, m: float, k: int):
        super().__init__(n, m)
        self.k = k
        self.counts = np.zeros(n, dtype=np.int64)
        self.total = 0

    @property
    def num_partitions(self) -> int:
        n2 = self.decide().n2
        return int(n2 > 0) + int(n2 < self.n)

    @property
    def estimates(self) -> np.ndarray:
        if self.total == 0:
            return np.full(self.n, 1.0 / self.n)
        return self.counts / self.total

    def decide(self) -> PolicyDecision:
        return nsk_select_group(self.counts, self.total, self.k, self.m)

    def learn(self, demand: Demand) -> None:
        self.counts += demand.counts(self.n)
        self.total += len(demand)


class OraclePolicy(Policy):
    """Knows the true order and the round's demand; stateless."""

    name = "oracle"

    @property
    def num_partitions(self) -> int:
        return self.n

    def step(self, demand: Demand) -> tuple[float, int, int]:
        rate, n2 = oracle_step(demand.requests, self.m, self.n)
        return rate, n2, self.n

    def decide(self) -> PolicyDecision:
        raise TypeError("the oracle cannot decide before seeing the demand")

    def learn(self, demand: Demand) -> None:
        pass


POLICY_NAMES = ("opm1", "opm2", "nsk", "oracle")


def make_policy(name: str, n: int, m: float, k: int, delta: float, history: int, method: int | None = None) -> Policy:
    """Build a policy by name; ``opm`` uses ``method``."""
    if name == "opm":
        return PartitionPolicy(n, m, delta, history, method or 2)
    if name in ("opm1", "opm2"):
        return PartitionPolicy(n, m, delta, history, int(name[-1]))
    if name == "nsk":
        return NSKPolicy(n, m, k)
    if name == "oracle":
        return OraclePolicy(n, m)
    raise ValueError(f"unknown policy {name!r}; choose from {', '.join(POLICY_NAMES)}")
