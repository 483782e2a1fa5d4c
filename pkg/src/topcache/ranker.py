"""Online partial ranking of files from per-round request counts.

Pairwise evidence is accumulated only between files that currently share a
block.  Once the signed count difference of a pair clears a self-normalized
concentration threshold, the pair is recorded in a dominance graph and the
files are re-partitioned by peeling off, block by block, every remaining
file that is not known to be worse than another remaining file.

Files are indexed ``0..n-1``.  ``better[j, i]`` is True when file ``i`` has
been inferred more popular than file ``j`` (the edge ``(j, i)``).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "C_CONST",
    "threshold",
    "stage_decompose",
    "Partitioning",
    "peel",
    "edges_to_matrix",
    "RankerState",
]

log = logging.getLogger("topcache.events")

C_CONST = 4.0 * math.sqrt(2.0 / math.pi) / math.erf(math.sqrt(2.0))


def _check_delta(delta: float) -> None:
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")


def threshold(v: float, delta: float, c: float = C_CONST) -> float:
    """Evidence needed on a pair with ``v`` informative stages; ``inf`` when ``v == 0``."""
    _check_delta(delta)
    if v < 0:
        raise ValueError("pair volume must be non-negative")
    if v == 0:
        return math.inf
    return math.sqrt(2.0 * v * math.log(c / delta * math.sqrt(v)))


def stage_decompose(counts) -> list[np.ndarray]:
    """Split a round's request counts into 0/1 stages, one per unit of the largest count."""
    counts = np.asarray(counts, dtype=np.int64)
    if np.any(counts < 0):
        raise ValueError("request counts must be non-negative")
    theta = int(counts.max()) if counts.size else 0
    return [(counts > a).astype(np.int8) for a in range(theta)]


@dataclass
class Partitioning:
    """Ordered disjoint blocks covering all files; block 0 holds the most popular candidates."""

    labels: np.ndarray  # block index of every file

    @classmethod
    def single(cls, n: int) -> "Partitioning":
        return cls(np.zeros(n, dtype=np.int64))

    @property
    def n(self) -> int:
        return int(self.labels.size)

    @property
    def num_blocks(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_blocks)

    @property
    def blocks(self) -> list[np.ndarray]:
        order = np.argsort(self.labels, kind="stable")
        return np.split(order, np.cumsum(self.sizes)[:-1])

    def prefix(self, b: int) -> np.ndarray:
        """Files in blocks ``0..b-1``."""
        return np.flatnonzero(self.labels < b)

    def copy(self) -> "Partitioning":
        return Partitioning(self.labels.copy())


def edges_to_matrix(edges, n: int) -> np.ndarray:
    """Dense ``better`` matrix from ``(worse, better)`` pairs."""
    better = np.zeros((n, n), dtype=bool)
    for worse, good in edges:
        if worse == good:
            raise ValueError(f"self edge on file {worse}")
        better[worse, good] = True
    return better


def peel(better: np.ndarray) -> Partitioning:
    """Layer files by the dominance relation.

    Each block is the set of remaining files with no edge to another
    remaining file.  If the relation has a cycle the leftover files are put
    in one final block and a diagnostic is logged.
    """
    n = better.shape[0]
    labels = np.full(n, -1, dtype=np.int64)
    # pointed_by[i] lists who points at i, read as rows for contiguous access
    pointed_by = better.T
    outdeg = better.sum(axis=1, dtype=np.int64)
    remaining = np.ones(n, dtype=bool)
    block = 0
    while remaining.any():
        layer = np.flatnonzero(remaining & (outdeg == 0))
        if layer.size == 0:
            stuck = np.flatnonzero(remaining)
            log.warning("peel-cycle: %d files without a minimal element placed in block %d", stuck.size, block)
            labels[stuck] = block
            break
        labels[layer] = block
        remaining[layer] = False
        outdeg -= pointed_by[layer].sum(axis=0, dtype=np.int64)
        block += 1
    return Partitioning(labels)


@dataclass
class RankerState:
    """Pairwise evidence, dominance graph and partitioning of one ranker.

    ``wins[i, j]`` counts the stages in which ``i`` and ``j`` shared a block,
    ``i`` was requested and ``j`` was not.  The signed statistic is
    ``s = wins - wins.T`` and the volume ``v = wins + wins.T``, so a single
    matrix holds both and every update is a contiguous row add.
    """

    n: int
    delta: float
    c: float = C_CONST
    wins: np.ndarray = field(default=None, repr=False)
    better: np.ndarray = field(default=None, repr=False)
    partitioning: Partitioning = None
    gamma: int = 0  # stages processed so far

    def __post_init__(self):
        _check_delta(self.delta)
        if self.n < 1:
            raise ValueError("catalog must hold at least one file")
        if self.wins is None:
            self.wins = np.zeros((self.n, self.n), dtype=np.int32)
        if self.better is None:
            self.better = np.zeros((self.n, self.n), dtype=bool)
        if self.partitioning is None:
            self.partitioning = Partitioning.single(self.n)
        self._tau = np.array([np.inf])

    @property
    def s(self) -> np.ndarray:
        return self.wins - self.wins.T

    @property
    def v(self) -> np.ndarray:
        return self.wins + self.wins.T

    def edges(self) -> set[tuple[int, int]]:
        return set(zip(*(x.tolist() for x in np.nonzero(self.better))))

    def copy(self) -> "RankerState":
        return RankerState(
            self.n, self.delta, self.c,
            self.wins.copy(), self.better.copy(), self.partitioning.copy(), self.gamma,
        )

    def _tau_table(self, vmax: int) -> np.ndarray:
        if vmax >= self._tau.size:
            size = max(vmax + 1, 2 * self._tau.size)
            v = np.arange(1, size, dtype=float)
            self._tau = np.concatenate(([np.inf], np.sqrt(2.0 * v * np.log(self.c / self.delta * np.sqrt(v)))))
        return self._tau

    def update_stage(self, beta) -> bool:
        """Absorb one 0/1 stage; returns True when new edges were inferred."""
        beta = np.asarray(beta).astype(bool)
        if beta.shape != (self.n,):
            raise ValueError(f"stage vector must have length {self.n}")
        self.gamma += 1
        hit = np.flatnonzero(beta)
        if hit.size == 0 or hit.size == self.n:
            return False
        labels = self.partitioning.labels
        # mask[a, j]: hit[a] and j share a block and j was not requested
        mask = (labels[hit][:, None] == labels[None, :]) & ~beta[None, :]
        if not mask.any():
            return False
        self.wins[hit] += mask

        # only pairs touched in this stage can newly clear the threshold
        rows, cols = np.nonzero(mask)
        files = hit[rows]
        fwd = self.wins[files, cols]
        back = self.wins[cols, files]
        sv = fwd - back
        tau = self._tau_table(int((fwd + back).max()))[fwd + back]
        up = sv >= tau
        down = -sv >= tau
        if not (up.any() or down.any()):
            return False
        worse = np.concatenate((cols[up], files[down]))
        good = np.concatenate((files[up], cols[down]))
        self.better[worse, good] = True
        self._relabel(np.unique(worse))
        return True

    def _relabel(self, frontier: np.ndarray) -> None:
        """Raise peel layers after edges leaving ``frontier`` were added.

        Equivalent to :func:`peel` on the updated graph; a label that keeps
        rising beyond ``n`` reveals a cycle, which is handed to :func:`peel`.
        """
        labels = self.partitioning.labels.copy()
        for _ in range(self.n + 1):
            if frontier.size == 0:
                self.partitioning = Partitioning(labels)
                return
            need = np.where(self.better[frontier], labels[None, :], -1).max(axis=1) + 1
            raised = frontier[need > labels[frontier]]
            labels[raised] = need[need > labels[frontier]]
            frontier = np.flatnonzero(self.better[:, raised].any(axis=1)) if raised.size else raised
        self.partitioning = peel(self.better)

    def process_round(self, counts) -> int:
        """Absorb one round of per-file request counts; returns the number of stages."""
        counts = np.asarray(counts, dtype=np.int64)
        if counts.shape != (self.n,):
            raise ValueError(f"counts must have length {self.n}")
        stages = stage_decompose(counts)
        for beta in stages:
            self.update_stage(beta)
        return len(stages)
