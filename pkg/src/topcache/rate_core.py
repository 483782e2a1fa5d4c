"""Delivery-rate computation for two-group decentralized coded caching.

All rates are expressed in units of one file size ``F``.  The popular group
is cached with the decentralized scheme (each user stores a random ``m/n2``
fraction of every popular file); every other requested file is broadcast
uncoded, once per distinct file.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable

import numpy as np

__all__ = [
    "DemandStats",
    "CutEvaluation",
    "InvalidDemandError",
    "RegimeError",
    "demand_stats",
    "total_rate",
    "total_rate_array",
    "oracle_best_cut",
    "brute_force_best_cut",
    "lemma2_prune",
    "lemma2_regime",
    "KEEP",
    "DISCARD",
]

log = logging.getLogger("topcache.events")

KEEP = True
DISCARD = False


class InvalidDemandError(ValueError):
    """A request refers to a file outside the catalog."""


class RegimeError(ValueError):
    """The pruning inequality was asked to decide outside its validity regime."""


@dataclass(frozen=True)
class DemandStats:
    n_e: int  # distinct requested files
    h_e: int  # distinct requested files inside the popular group

    def __post_init__(self):
        if not 0 <= self.h_e <= self.n_e:
            raise ValueError(f"need 0 <= h_e <= n_e, got h_e={self.h_e}, n_e={self.n_e}")


@dataclass(frozen=True)
class CutEvaluation:
    n2: int
    rate: float


def demand_stats(demand: Iterable[int], popular_set: Iterable[int], n: int | None = None) -> DemandStats:
    """Count distinct requests and distinct popular requests of one round.

    ``n`` is the catalog size; when given, every request must lie in
    ``range(n)``.
    """
    if not isinstance(demand, np.ndarray):
        demand = np.fromiter(demand, dtype=np.int64)
    requested = set(demand.ravel().tolist())
    if n is not None and requested and (min(requested) < 0 or max(requested) >= n):
        bad = sorted(x for x in requested if x < 0 or x >= n)
        raise InvalidDemandError(f"requests outside [0, {n}): {bad[:10]}")
    popular = popular_set if isinstance(popular_set, (set, frozenset)) else set(int(x) for x in popular_set)
    return DemandStats(n_e=len(requested), h_e=len(requested & popular))


def _coded_term(n2, m, h):
    """Rate of serving ``h`` distinct popular requests from a group of ``n2`` files."""
    n2 = np.asarray(n2, dtype=float)
    h = np.asarray(h, dtype=float)
    m = float(m)
    if m == 0.0:
        # no cache: every popular request goes out uncoded
        return np.where(n2 > 0, h, 0.0)
    big = n2 > m
    safe_n2 = np.where(big, n2, 2.0 * m)
    # 1 - (1 - m/n2)^h computed without cancellation
    frac = -np.expm1(h * np.log1p(-m / safe_n2))
    return np.where(big & (h > 0), (safe_n2 - m) / m * frac, 0.0)


def total_rate_array(n2, m, n_e, h_e) -> np.ndarray:
    """Vectorized :func:`total_rate` without input validation."""
    return _coded_term(n2, m, h_e) + (np.asarray(n_e, dtype=float) - np.asarray(h_e, dtype=float))


def total_rate(n2: int, m: float, stats: DemandStats) -> float:
    """Delivery rate of one round given the popular-group size ``n2``.

    For ``n2 > m`` the coded part is ``(n2-m)/m * (1 - (1-m/n2)**h_e)``.
    A group that fits in the cache (``0 < n2 <= m``) costs nothing to
    deliver, and with ``m == 0`` every request is served uncoded.
    Each distinct unpopular request costs one file.
    """
    if n2 < 0 or m < 0:
        raise ValueError(f"n2 and m must be non-negative, got n2={n2}, m={m}")
    if stats.h_e > n2:
        raise ValueError(f"h_e={stats.h_e} popular requests cannot come from a group of {n2} files")
    return float(total_rate_array(n2, m, stats.n_e, stats.h_e))


def _check_ranks(ranks, n) -> np.ndarray:
    r = np.asarray(ranks, dtype=np.int64)
    if r.size and (np.any(np.diff(r) <= 0) or r[0] < 1 or r[-1] > n):
        raise InvalidDemandError(f"ranks must be strictly increasing within [1, {n}]")
    return r


def lemma2_regime(n2: int, h_e: int, m: float, factor: float = 50.0) -> bool:
    """True when the binomial approximation behind :func:`lemma2_prune` is assumed valid."""
    return h_e > 0 and n2 > m and n2 >= factor * m * h_e


def lemma2_prune(n2: int, h_e: int, s_i: int, i: int) -> bool:
    """Decide whether growing the group by ``s_i`` files to cover ``i`` more requests is worth evaluating.

    Returns :data:`KEEP` iff ``s_i < n2 / h_e * i``.  This is a first-order
    approximation; callers must check :func:`lemma2_regime` first.
    """
    if h_e <= 0:
        raise RegimeError("pruning needs at least one covered popular request (h_e > 0)")
    if n2 <= 0 or i < 1 or s_i < i:
        raise ValueError(f"invalid pruning query n2={n2}, s_i={s_i}, i={i}")
    return KEEP if s_i * h_e < n2 * i else DISCARD


def oracle_best_cut(
    demand_ranks,
    m: float,
    n: int,
    prune: bool = False,
    regime_factor: float = 50.0,
) -> CutEvaluation:
    """Best prefix cut of the true popularity order for a known demand.

    Only cuts at a requested rank (plus the empty group) can be optimal, so
    exactly ``len(demand_ranks) + 1`` candidates are evaluated.  The rate is
    not convex in the cut, hence there is no early stopping.

    With ``prune=True`` candidates are skipped by :func:`lemma2_prune`
    whenever the current best cut lies in its regime.
    """
    ranks = _check_ranks(demand_ranks, n)
    n_e = int(ranks.size)
    if n_e == 0:
        return CutEvaluation(0, 0.0)
    if not prune:
        cuts = np.concatenate(([0], ranks))
        rates = total_rate_array(cuts, m, n_e, np.arange(n_e + 1))
        j = int(np.argmin(rates))
        return CutEvaluation(int(cuts[j]), float(rates[j]))

    best = CutEvaluation(0, float(n_e))
    best_h = 0
    for j, r in enumerate(ranks.tolist(), start=1):
        if lemma2_regime(best.n2, best_h, m, regime_factor):
            if lemma2_prune(best.n2, best_h, r - best.n2, j - best_h) is DISCARD:
                continue
        rate = float(total_rate_array(r, m, n_e, j))
        if rate < best.rate:
            best, best_h = CutEvaluation(r, rate), j
    return best


def brute_force_best_cut(demand_ranks, m: float, n: int) -> CutEvaluation:
    """Scan every cut ``0..n``; reference for :func:`oracle_best_cut`."""
    ranks = _check_ranks(demand_ranks, n)
    cuts = np.arange(n + 1)
    covered = np.searchsorted(ranks, cuts, side="right")
    rates = total_rate_array(cuts, m, ranks.size, covered)
    j = int(np.argmin(rates))
    return CutEvaluation(int(cuts[j]), float(rates[j]))
