"""Seeded stochastic leaf oracles.

Every (master_seed, repetition, leaf) triple owns its own PRNG stream, derived
with ``numpy.random.SeedSequence(entropy=master_seed, spawn_key=(0, rep, leaf))``
and fed to a PCG64 generator.  The leading 0 in the spawn key is a domain tag;
tree generation uses tag 1 (see :func:`tree_stream`).  Because streams are
keyed rather than split off a shared generator, the samples a leaf produces
do not depend on how draws from other leaves are interleaved, nor on which
worker process runs the repetition.

Samples are produced in fixed-size blocks and consumed one at a time, so the
compiled search loops can read them straight from :attr:`LeafOracle.buffer`.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import NotALeaf
from .tree import GameTree

ORACLE_DOMAIN = 0
TREE_DOMAIN = 1
DEFAULT_BLOCK = 1024

# sampler(rng, leaf_index, size) -> array of `size` values in [0, 1]
Sampler = Callable[[np.random.Generator, int, int], np.ndarray]


def derive_stream(master_seed: int, repetition: int, leaf_index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(master_seed),
                                spawn_key=(ORACLE_DOMAIN, int(repetition), int(leaf_index)))
    return np.random.Generator(np.random.PCG64(ss))


def tree_stream(master_seed: int, repetition: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(TREE_DOMAIN, int(repetition)))
    return np.random.Generator(np.random.PCG64(ss))


class LeafOracle:
    """Per-leaf sample streams for one run on one tree.

    By default leaf ``i`` is Bernoulli(``tree.leaf_means[i]``).  A custom
    ``sampler`` may return any values in [0, 1]; its mean is the caller's
    responsibility.
    """

    def __init__(self, tree: GameTree, master_seed: int = 0, repetition: int = 0,
                 sampler: Sampler | None = None, block: int = DEFAULT_BLOCK):
        if block < 1:
            raise ValueError("block size must be positive")
        self.tree = tree
        self.master_seed = int(master_seed)
        self.repetition = int(repetition)
        self.block = int(block)
        self._sampler = sampler
        self._means = tree.leaf_means
        n = tree.n_leaves
        self._streams: list[np.random.Generator | None] = [None] * n
        self.buffer = np.empty((n, self.block), dtype=np.float64)
        # pos == block marks an exhausted (or never filled) buffer
        self.pos = np.full(n, self.block, dtype=np.int64)

    def _stream(self, i: int) -> np.random.Generator:
        rng = self._streams[i]
        if rng is None:
            rng = self._streams[i] = derive_stream(self.master_seed, self.repetition, i)
        return rng

    def refill(self, i: int) -> None:
        rng = self._stream(i)
        if self._sampler is None:
            self.buffer[i] = rng.random(self.block) < self._means[i]
        else:
            x = np.asarray(self._sampler(rng, i, self.block), dtype=np.float64)
            if x.shape != (self.block,) or np.any((x < 0) | (x > 1)):
                raise ValueError("sampler must return `size` values in [0, 1]")
            self.buffer[i] = x
        self.pos[i] = 0

    def draw_index(self, i: int) -> float:
        if self.pos[i] >= self.block:
            self.refill(i)
        x = self.buffer[i, self.pos[i]]
        self.pos[i] += 1
        return float(x)

    def draw(self, node: int) -> float:
        """Next sample from the leaf with node id ``node``."""
        i = self.tree.leaf_index(node) if 0 <= node < self.tree.n_nodes else -1
        if i < 0:
            raise NotALeaf(f"node {node} is not a leaf")
        return self.draw_index(i)

    def draw_many(self, i: int, n: int) -> np.ndarray:
        """The next ``n`` samples of leaf index ``i`` (same sequence as ``n`` draws)."""
        out = np.empty(n)
        k = 0
        while k < n:
            if self.pos[i] >= self.block:
                self.refill(i)
            take = min(n - k, self.block - int(self.pos[i]))
            out[k:k + take] = self.buffer[i, self.pos[i]:self.pos[i] + take]
            self.pos[i] += take
            k += take
        return out
