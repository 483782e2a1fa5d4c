"""Slow, literal implementations used as independent oracles in tests."""
import math

import numpy as np

C_REF = 4 * math.sqrt(2 / math.pi) / math.erf(math.sqrt(2))


class NaiveRanker:
    """Every pair, every stage, full peel; no shortcuts."""

    def __init__(self, n, delta):
        self.n = n
        self.delta = delta
        self.s = [[0] * n for _ in range(n)]
        self.v = [[0] * n for _ in range(n)]
        self.edges = set()
        self.blocks = [set(range(n))]

    def block_of(self, i):
        for b, blk in enumerate(self.blocks):
            if i in blk:
                return b
        raise AssertionError(i)

    def stage(self, beta):
        n = self.n
        label = [self.block_of(i) for i in range(n)]
        for i in range(n):
            for j in range(n):
                u = (beta[i] - beta[j]) if label[i] == label[j] else 0
                self.s[i][j] += u
                self.v[i][j] += abs(u)
        for i in range(n):
            for j in range(n):
                v = self.v[i][j]
                if v > 0:
                    tau = math.sqrt(2 * v * math.log(C_REF / self.delta * math.sqrt(v)))
                    if self.s[i][j] >= tau:
                        self.edges.add((j, i))
        self.blocks = naive_peel(self.edges, n)

    def round(self, counts):
        zeta = list(counts)
        for _ in range(max(counts, default=0)):
            self.stage([1 if z > 0 else 0 for z in zeta])
            zeta = [z - 1 for z in zeta]


def naive_peel(edges, n):
    remaining = set(range(n))
    blocks = []
    while remaining:
        layer = {i for i in remaining if not any((i, x) in edges for x in remaining)}
        if not layer:
            blocks.append(set(remaining))
            break
        blocks.append(layer)
        remaining -= layer
    return blocks


def labels_from_blocks(blocks, n):
    labels = np.empty(n, dtype=np.int64)
    for b, blk in enumerate(blocks):
        for i in blk:
            labels[i] = b
    return labels
