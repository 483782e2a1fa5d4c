"""Catalogs and per-round demand generation."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "Catalog",
    "Demand",
    "RatingsParseError",
    "NORMAL",
    "ATTACK",
    "zipf_catalog",
    "geometric_catalog",
    "load_ratings_catalog",
    "write_catalog",
    "read_catalog",
    "sample_demand",
    "attack_demand",
    "is_attack_round",
]

NORMAL = "normal"
ATTACK = "attack"


class RatingsParseError(ValueError):
    pass


@dataclass(frozen=True)
class Catalog:
    """Files ``0..n-1`` sorted by non-increasing popularity.

    ``external_ids[i]`` is the source identifier (e.g. a movie id) of file
    ``i``; the popularity rank of file ``i`` is ``i + 1``.
    """

    popularity: np.ndarray
    external_ids: np.ndarray

    def __post_init__(self):
        p = self.popularity
        if p.ndim != 1 or p.size == 0:
            raise ValueError("popularity must be a non-empty vector")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError("popularity must be a probability vector")
        if np.any(np.diff(p) > 0):
            raise ValueError("popularity must be sorted non-increasing")
        if self.external_ids.shape != p.shape:
            raise ValueError("external_ids must match popularity length")

    @property
    def n(self) -> int:
        return int(self.popularity.size)

    def rank_of(self, external_id) -> int:
        """1-based popularity rank of a source identifier."""
        hits = np.flatnonzero(self.external_ids == external_id)
        if hits.size == 0:
            raise KeyError(external_id)
        return int(hits[0]) + 1


@dataclass(frozen=True)
class Demand:
    requests: np.ndarray
    round_kind: str = NORMAL

    def __len__(self):
        return int(self.requests.size)

    def counts(self, n: int) -> np.ndarray:
        return np.bincount(self.requests, minlength=n)

    def distinct(self) -> np.ndarray:
        return np.unique(self.requests)


def _from_weights(w: np.ndarray, external_ids: np.ndarray | None = None) -> Catalog:
    p = w / w.sum()
    ids = np.arange(p.size) if external_ids is None else external_ids
    return Catalog(p, ids)


def zipf_catalog(n: int, s: float) -> Catalog:
    """Popularity proportional to ``rank ** -s``."""
    if n < 1 or s < 0:
        raise ValueError(f"need n >= 1 and s >= 0, got n={n}, s={s}")
    return _from_weights(np.arange(1, n + 1, dtype=float) ** -s)


def geometric_catalog(n: int, ratio: float) -> Catalog:
    """Popularity proportional to ``ratio ** rank``."""
    if n < 1 or not 0 < ratio <= 1:
        raise ValueError(f"need n >= 1 and 0 < ratio <= 1, got n={n}, ratio={ratio}")
    return _from_weights(ratio ** np.arange(1, n + 1, dtype=float))


def load_ratings_catalog(path) -> Catalog:
    """Popularity from a ``user::movie::rating::timestamp`` ratings file.

    A movie's popularity is its number of rating lines over the total.
    Rating values are ignored.  Files are re-indexed by descending count,
    ties broken by ascending movie id.
    """
    path = Path(path)
    counts: Counter[int] = Counter()
    with path.open("r", encoding="utf-8", errors="strict") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line:
                continue
            fields = line.split("::")
            if len(fields) != 4:
                raise RatingsParseError(f"{path}:{lineno}: expected 4 '::'-separated fields, got {len(fields)}")
            try:
                counts[int(fields[1])] += 1
            except ValueError:
                raise RatingsParseError(f"{path}:{lineno}: movie id {fields[1]!r} is not an integer") from None
    if not counts:
        raise RatingsParseError(f"{path}: no ratings found")
    items = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    ids = np.array([k for k, _ in items], dtype=np.int64)
    w = np.array([c for _, c in items], dtype=float)
    return _from_weights(w, ids)


def write_catalog(catalog: Catalog, path) -> None:
    """Two-column ``file_id,popularity`` cache file."""
    with Path(path).open("w") as fh:
        fh.write("file_id,popularity\n")
        for fid, p in zip(catalog.external_ids.tolist(), catalog.popularity.tolist()):
            fh.write(f"{fid},{p!r}\n")


def read_catalog(path) -> Catalog:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    ids = data[:, 0].astype(np.int64)
    w = data[:, 1]
    order = np.lexsort((ids, -w))
    return _from_weights(w[order], ids[order])


def sample_demand(catalog: Catalog, k: int, rng: np.random.Generator) -> Demand:
    """``k`` i.i.d. requests drawn from the catalog popularity."""
    if k < 0:
        raise ValueError("k must be non-negative")
    return Demand(rng.choice(catalog.n, size=k, p=catalog.popularity).astype(np.int64))


def attack_demand(n: int) -> Demand:
    """Every file requested once."""
    if n < 1:
        raise ValueError("n must be positive")
    return Demand(np.arange(n, dtype=np.int64), ATTACK)


def is_attack_round(t: int, period: int, phase: int = 0) -> bool:
    """Round ``t`` (1-based) is an attack round iff ``t % period == phase``; period 0 disables attacks."""
    return period > 0 and t % period == phase % period
