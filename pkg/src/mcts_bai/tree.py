"""Minimax game trees with Bernoulli-mean leaves.

Nodes are numbered in depth-first pre-order (children visited in the order
given), so the root is node 0 and every parent has a smaller id than its
children.  Leaves are enumerated in the same order; ``tree.leaves[i]`` is the
node id of leaf ``i`` and every per-leaf array in the package uses that index.

A tree is built from a nested specification, which is also the JSON file
format::

    {"kind": "max", "children": [{"mean": 0.45}, {"kind": "min", "children": [...]}]}
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Any, NamedTuple, Sequence

import numpy as np

from .errors import AmbiguousBestAction, InfiniteComplexity, TreeSpecError

LEAF, MAX, MIN = 0, 1, 2
KIND_NAMES = {LEAF: "leaf", MAX: "max", MIN: "min"}
_KIND_CODES = {"max": MAX, "min": MIN}

TIE_TOL = 1e-12


def leaf(mean: float) -> dict:
    return {"mean": float(mean)}


def max_node(*children: dict) -> dict:
    return {"kind": "max", "children": list(children)}


def min_node(*children: dict) -> dict:
    return {"kind": "min", "children": list(children)}


class TreeArrays(NamedTuple):
    """Flat array view of a tree, consumed by the compiled search kernels."""

    kind: np.ndarray          # int8 per node
    parent: np.ndarray        # int64 per node, -1 at the root
    cstart: np.ndarray        # int64, children of s are clist[cstart[s]:cstart[s+1]]
    clist: np.ndarray         # int64
    leaf_of_node: np.ndarray  # int64 per node, -1 for internal nodes
    node_of_leaf: np.ndarray  # int64 per leaf
    depth: np.ndarray         # int64 per node


class GameTree:
    """Immutable minimax tree whose root is a MAX node."""

    def __init__(self, kinds: Sequence[int], children: Sequence[Sequence[int]],
                 means: Sequence[float]):
        n = len(kinds)
        if n == 0:
            raise TreeSpecError("empty tree")
        kind = np.asarray(kinds, dtype=np.int8)
        parent = np.full(n, -1, dtype=np.int64)
        counts = np.zeros(n, dtype=np.int64)
        for s, ch in enumerate(children):
            counts[s] = len(ch)
            for c in ch:
                if not 0 < c < n or parent[c] != -1 or c <= s:
                    raise TreeSpecError(f"node {c} has an inconsistent parent link")
                parent[c] = s
        if kind[0] != MAX:
            raise TreeSpecError("the root must be a MAX node")
        if np.any(parent[1:] < 0):
            raise TreeSpecError("tree is not connected")
        for s in range(n):
            if kind[s] == LEAF:
                if counts[s]:
                    raise TreeSpecError(f"leaf {s} has children")
                m = means[s]
                if not (0.0 <= m <= 1.0):
                    raise TreeSpecError(f"leaf mean {m!r} outside [0, 1]")
            elif counts[s] == 0:
                raise TreeSpecError(f"internal node {s} has no children")

        cstart = np.zeros(n + 1, dtype=np.int64)
        cstart[1:] = np.cumsum(counts)
        clist = np.fromiter((c for ch in children for c in ch), dtype=np.int64,
                            count=int(cstart[-1]))
        depth = np.zeros(n, dtype=np.int64)
        for s in range(1, n):
            depth[s] = depth[parent[s]] + 1
        node_of_leaf = np.flatnonzero(kind == LEAF).astype(np.int64)
        leaf_of_node = np.full(n, -1, dtype=np.int64)
        leaf_of_node[node_of_leaf] = np.arange(len(node_of_leaf))
        leaf_means = np.array([means[s] for s in node_of_leaf], dtype=np.float64)

        self._arrays = TreeArrays(kind, parent, cstart, clist, leaf_of_node,
                                  node_of_leaf, depth)
        self._means = leaf_means
        for a in (*self._arrays, self._means):
            a.setflags(write=False)

    # construction ---------------------------------------------------------

    @classmethod
    def from_spec(cls, spec: dict) -> "GameTree":
        kinds: list[int] = []
        children: list[list[int]] = []
        means: list[float] = []
        # (spec, parent id); children pushed reversed so pops follow child order
        stack: list[tuple[Any, int]] = [(spec, -1)]
        while stack:
            node, par = stack.pop()
            s = len(kinds)
            if par >= 0:
                children[par].append(s)
            if not isinstance(node, dict):
                raise TreeSpecError(f"node must be an object, got {type(node).__name__}")
            if "mean" in node:
                if "children" in node or node.get("kind", "leaf") != "leaf":
                    raise TreeSpecError("a leaf cannot have a kind or children")
                try:
                    m = float(node["mean"])
                except (TypeError, ValueError):
                    raise TreeSpecError(f"leaf mean {node['mean']!r} is not a number") from None
                if not (0.0 <= m <= 1.0):
                    raise TreeSpecError(f"leaf mean {m!r} outside [0, 1]")
                kinds.append(LEAF)
                means.append(m)
                children.append([])
                continue
            k = node.get("kind")
            if k not in _KIND_CODES:
                raise TreeSpecError(f"unknown node kind {k!r}")
            ch = node.get("children")
            if not isinstance(ch, list) or not ch:
                raise TreeSpecError("internal node needs a non-empty children list")
            kinds.append(_KIND_CODES[k])
            means.append(float("nan"))
            children.append([])
            for c in reversed(ch):
                stack.append((c, s))
        return cls(kinds, children, means)

    @classmethod
    def from_matrix(cls, mu) -> "GameTree":
        """Depth-two tree: a MAX root over MIN nodes, one per row of ``mu``."""
        mu = np.asarray(mu, dtype=float)
        if mu.ndim != 2:
            raise TreeSpecError("expected a 2-D mean matrix")
        return cls.from_spec(max_node(*(min_node(*(leaf(x) for x in row)) for row in mu)))

    def to_spec(self, node: int = 0) -> dict:
        if self.is_leaf(node):
            return leaf(self.mean(node))
        return {"kind": KIND_NAMES[self.kind(node)],
                "children": [self.to_spec(c) for c in self.children(node)]}

    def with_means(self, means) -> "GameTree":
        """Same shape, new leaf means (indexed by leaf enumeration)."""
        means = np.asarray(means, dtype=float)
        if means.shape != self._means.shape:
            raise TreeSpecError("wrong number of leaf means")
        full = np.full(self.n_nodes, np.nan)
        full[self._arrays.node_of_leaf] = means
        return GameTree(self._arrays.kind, [self.children(s) for s in range(self.n_nodes)], full)

    # accessors ------------------------------------------------------------

    @property
    def arrays(self) -> TreeArrays:
        return self._arrays

    @property
    def root(self) -> int:
        return 0

    @property
    def n_nodes(self) -> int:
        return len(self._arrays.kind)

    @property
    def leaves(self) -> np.ndarray:
        return self._arrays.node_of_leaf

    @property
    def n_leaves(self) -> int:
        return len(self._means)

    @property
    def leaf_means(self) -> np.ndarray:
        return self._means

    @property
    def root_children(self) -> tuple[int, ...]:
        return self.children(0)

    def kind(self, s: int) -> int:
        return int(self._arrays.kind[s])

    def is_leaf(self, s: int) -> bool:
        return self._arrays.kind[s] == LEAF

    def parent(self, s: int) -> int | None:
        p = int(self._arrays.parent[s])
        return None if p < 0 else p

    def children(self, s: int) -> tuple[int, ...]:
        a = self._arrays
        return tuple(int(c) for c in a.clist[a.cstart[s]:a.cstart[s + 1]])

    def depth(self, s: int) -> int:
        return int(self._arrays.depth[s])

    def mean(self, s: int) -> float:
        i = self._arrays.leaf_of_node[s]
        if i < 0:
            raise TreeSpecError(f"node {s} is not a leaf")
        return float(self._means[i])

    def leaf_index(self, s: int) -> int:
        return int(self._arrays.leaf_of_node[s])

    def path_to_root(self, s: int) -> list[int]:
        path = [s]
        while (p := self.parent(path[-1])) is not None:
            path.append(p)
        return path

    def depth_one_ancestor(self, s: int) -> int:
        path = self.path_to_root(s)
        if len(path) < 2:
            raise TreeSpecError("the root has no depth-one ancestor")
        return path[-2]

    def __repr__(self) -> str:
        return f"GameTree(n_nodes={self.n_nodes}, n_leaves={self.n_leaves})"

    def __eq__(self, other) -> bool:
        if not isinstance(other, GameTree):
            return NotImplemented
        return (all(np.array_equal(a, b) for a, b in zip(self._arrays, other._arrays))
                and np.array_equal(self._means, other._means))

    __hash__ = None


def load_tree(path) -> GameTree:
    path = Path(path)
    try:
        spec = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise TreeSpecError(f"{path}: invalid JSON ({e})") from e
    try:
        return GameTree.from_spec(spec)
    except TreeSpecError as e:
        raise TreeSpecError(f"{path}: {e}") from e


def save_tree(tree: GameTree, path) -> None:
    Path(path).write_text(json.dumps(tree.to_spec(), indent=1) + "\n")


@dataclass(frozen=True)
class TreeAnalysis:
    values: np.ndarray              # V_s per node
    best_action: int                # s*
    second_best_action: int | None  # None when the root has one child
    root_gap: float                 # V(s*) - V(s*_2), 0 when ambiguous
    leaf_gaps: np.ndarray           # per leaf
    leaf_gaps_tilde: np.ndarray     # per leaf, ignores the root/depth-one step
    ambiguous: bool

    @property
    def root_value(self) -> float:
        return float(self.values[0])


def minimax_values(tree: GameTree, leaf_values=None) -> np.ndarray:
    """Bottom-up minimax over the tree (``leaf_values`` defaults to the means)."""
    a = tree.arrays
    v = np.empty(tree.n_nodes)
    v[a.node_of_leaf] = tree.leaf_means if leaf_values is None else leaf_values
    # reverse pre-order visits every child before its parent
    for s in range(tree.n_nodes - 1, -1, -1):
        k = a.kind[s]
        if k == LEAF:
            continue
        ch = v[a.clist[a.cstart[s]:a.cstart[s + 1]]]
        v[s] = ch.max() if k == MAX else ch.min()
    return v


def evaluate_tree(tree: GameTree) -> TreeAnalysis:
    a = tree.arrays
    v = minimax_values(tree)
    roots = np.asarray(tree.root_children)
    rv = v[roots]
    best = int(roots[int(np.argmax(rv))])
    second = None
    gap = 0.0
    ambiguous = False
    if len(roots) > 1:
        others = roots[roots != best]
        second = int(others[int(np.argmax(v[others]))])
        gap = float(v[best] - v[second])
        if gap <= TIE_TOL:
            ambiguous = True
            gap = 0.0
            warnings.warn(f"depth-one nodes {best} and {second} tie for the best value",
                          AmbiguousBestAction, stacklevel=2)

    step = np.zeros(tree.n_nodes)
    step[1:] = np.abs(v[1:] - v[a.parent[1:]])
    full = np.zeros(tree.n_nodes)
    tilde = np.zeros(tree.n_nodes)
    for s in range(1, tree.n_nodes):
        p = a.parent[s]
        full[s] = max(full[p], step[s])
        tilde[s] = max(tilde[p], step[s]) if a.depth[s] >= 2 else 0.0
    leaves = a.node_of_leaf
    out = TreeAnalysis(v, best, second, gap, full[leaves], tilde[leaves], ambiguous)
    for arr in (out.values, out.leaf_gaps, out.leaf_gaps_tilde):
        arr.setflags(write=False)
    return out


def effective_gaps(analysis: TreeAnalysis, epsilon: float, variant: str = "standard") -> np.ndarray:
    """Per-leaf max(gap, root gap, epsilon)."""
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    if variant == "standard":
        g = analysis.leaf_gaps
    elif variant == "tilde":
        g = analysis.leaf_gaps_tilde
    else:
        raise ValueError(f"unknown variant {variant!r}")
    return np.maximum(np.maximum(g, analysis.root_gap), epsilon)


def complexity_term(analysis: TreeAnalysis, epsilon: float, variant: str = "standard") -> float:
    """Sum over leaves of 1 / (gap^2 v root_gap^2 v epsilon^2)."""
    g = effective_gaps(analysis, epsilon, variant)
    if np.any(g == 0):
        raise InfiniteComplexity("a leaf has zero effective gap; use epsilon > 0")
    return float(np.sum(1.0 / g**2))
