"""Leaf confidence intervals, exploration rates and their propagation up the tree.

The numeric primitives are numba-compiled so the search loops in
:mod:`mcts_bai.engine` can call them; the Python functions at the bottom of the
module wrap them around a :class:`SearchState`.

Every exploration rate used here has the shape ``A + B * ln(1 + ln s)``, so a
rate is passed to compiled code as the pair ``(A, B)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import InvalidRegime, NotALeaf, NotInternal
from .tree import LEAF, MAX, GameTree

HOEFFDING, KL = 0, 1
FAMILIES = {"hoeffding": HOEFFDING, "kl": KL}
VARIANTS = ("theoretical", "practical", "experiments")

KL_TOL = 1e-9
KL_MAX_ITER = 100


@dataclass(frozen=True)
class ExplorationRate:
    """beta(s, delta) for one of the three shipped variants.

    theoretical: ln(L/delta) + 3 ln ln(L/delta) + 1.5 ln(ln s + 1)
    practical:   ln(ln(e s) / delta)
    experiments: ln(L/delta) + ln(ln s + 1)
    """

    variant: str
    leaf_count: int
    delta: float

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown exploration rate {self.variant!r}")
        if self.leaf_count < 1:
            raise InvalidRegime("need at least one leaf")
        if not self.delta > 0:
            raise InvalidRegime("delta must be positive")
        if self.delta > max(0.1 * self.leaf_count, 1.0):
            raise InvalidRegime(f"delta={self.delta} exceeds max(0.1*|L|, 1)")
        if self.variant == "theoretical" and self.leaf_count / self.delta < math.e:
            raise InvalidRegime("theoretical rate needs |L|/delta >= e")
        if self.variant == "practical" and self.delta >= 1:
            raise InvalidRegime("practical rate needs delta < 1")
        if self.delta >= 1:
            warnings.warn(f"delta={self.delta} >= 1; only delta/|L| enters the rate",
                          stacklevel=3)

    @property
    def coefficients(self) -> tuple[float, float]:
        x = self.leaf_count / self.delta
        if self.variant == "theoretical":
            return math.log(x) + 3.0 * math.log(math.log(x)), 1.5
        if self.variant == "practical":
            return -math.log(self.delta), 1.0
        return math.log(x), 1.0

    def __call__(self, s: float) -> float:
        if s < 1:
            raise InvalidRegime("beta(s, delta) is defined for s >= 1")
        a, b = self.coefficients
        return beta_value(a, b, float(s))


def beta(rate: ExplorationRate, s: float) -> float:
    return rate(s)


# compiled primitives -------------------------------------------------------

@njit(cache=True)
def beta_value(a, b, s):
    return a + b * math.log(1.0 + math.log(s))


@njit(cache=True)
def kl_bernoulli(p, q):
    """Binary KL divergence d(p, q) with q clipped away from {0, 1}."""
    q = min(max(q, 1e-15), 1.0 - 1e-15)
    out = 0.0
    if p > 0.0:
        out += p * math.log(p / q)
    if p < 1.0:
        out += (1.0 - p) * math.log((1.0 - p) / (1.0 - q))
    return out


@njit(cache=True)
def kl_upper(p, level):
    """Largest q >= p with d(p, q) <= level."""
    if p >= 1.0:
        return 1.0
    if p <= 0.0:
        return 1.0 - math.exp(-level)
    lo, hi = p, 1.0
    for _ in range(KL_MAX_ITER):
        if hi - lo < KL_TOL:
            break
        mid = 0.5 * (lo + hi)
        if kl_bernoulli(p, mid) > level:
            hi = mid
        else:
            lo = mid
    return hi


@njit(cache=True)
def kl_lower(p, level):
    """Smallest q <= p with d(p, q) <= level."""
    if p <= 0.0:
        return 0.0
    if p >= 1.0:
        return math.exp(-level)
    lo, hi = 0.0, p
    for _ in range(KL_MAX_ITER):
        if hi - lo < KL_TOL:
            break
        mid = 0.5 * (lo + hi)
        if kl_bernoulli(p, mid) > level:
            lo = mid
        else:
            hi = mid
    return lo


@njit(cache=True)
def interval_from_stats(n, total, beta_n, family):
    """Interval for a leaf with ``n`` samples summing to ``total``."""
    if n == 0:
        return 0.0, 1.0
    m = total / n
    if family == 0:
        r = math.sqrt(beta_n / (2.0 * n))
        return max(m - r, 0.0), min(m + r, 1.0)
    level = beta_n / n
    return kl_lower(m, level), kl_upper(m, level)


@njit(cache=True)
def refresh_node(s, kind, cstart, clist, lower, upper, rep):
    """Recompute interval and representative child of internal node ``s``."""
    i0 = cstart[s]
    c = clist[i0]
    lo = lower[c]
    hi = upper[c]
    best = c
    if kind[s] == 1:
        for k in range(i0 + 1, cstart[s + 1]):
            c = clist[k]
            if lower[c] > lo:
                lo = lower[c]
            if upper[c] > hi:
                hi = upper[c]
                best = c
    else:
        for k in range(i0 + 1, cstart[s + 1]):
            c = clist[k]
            if upper[c] < hi:
                hi = upper[c]
            if lower[c] < lo:
                lo = lower[c]
                best = c
    lower[s] = lo
    upper[s] = hi
    rep[s] = best


@njit(cache=True)
def propagate_up(node, parent, kind, cstart, clist, lower, upper, rep):
    s = parent[node]
    while s >= 0:
        refresh_node(s, kind, cstart, clist, lower, upper, rep)
        s = parent[s]


@njit(cache=True)
def descend(s, kind, rep):
    while kind[s] != 0:
        s = rep[s]
    return s


@njit(cache=True)
def recompute_all(kind, cstart, clist, node_of_leaf, pulls, sums, t_global,
                  a, b, family, lower, upper, rep):
    """Full bottom-up recomputation.

    With ``t_global > 0`` every leaf uses beta(t_global) instead of beta(N_leaf).
    """
    for i in range(node_of_leaf.shape[0]):
        s = node_of_leaf[i]
        n = pulls[i]
        if n > 0:
            bn = beta_value(a, b, float(t_global if t_global > 0 else n))
            lo, hi = interval_from_stats(n, sums[i], bn, family)
        else:
            lo, hi = 0.0, 1.0
        lower[s] = lo
        upper[s] = hi
    for s in range(kind.shape[0] - 1, -1, -1):
        if kind[s] != 0:
            refresh_node(s, kind, cstart, clist, lower, upper, rep)


# Python-level API ----------------------------------------------------------

def hoeffding_interval(mean: float, n: int, beta_n: float) -> tuple[float, float]:
    return interval_from_stats(n, mean * n, beta_n, HOEFFDING)


def kl_interval(mean: float, n: int, beta_n: float) -> tuple[float, float]:
    return interval_from_stats(n, mean * n, beta_n, KL)


def family_code(family: str | int) -> int:
    if isinstance(family, (int, np.integer)):
        return int(family)
    try:
        return FAMILIES[family]
    except KeyError:
        raise ValueError(f"unknown confidence interval family {family!r}") from None


class SearchState:
    """Per-run statistics: leaf counts and sums, node intervals, representatives.

    Arrays are indexed by leaf index (``pulls``, ``sums``) or node id
    (``lower``, ``upper``, ``rep``).  ``rep[s]`` is the representative child of
    internal node ``s`` and -1 at leaves.
    """

    def __init__(self, tree: GameTree):
        self.tree = tree
        n, nl = tree.n_nodes, tree.n_leaves
        self.pulls = np.zeros(nl, dtype=np.int64)
        self.sums = np.zeros(nl, dtype=np.float64)
        self.lower = np.zeros(n, dtype=np.float64)
        self.upper = np.ones(n, dtype=np.float64)
        self.rep = np.full(n, -1, dtype=np.int64)
        a = tree.arrays
        for s in range(n - 1, -1, -1):
            if a.kind[s] != LEAF:
                refresh_node(s, a.kind, a.cstart, a.clist, self.lower, self.upper, self.rep)

    @property
    def t(self) -> int:
        return int(self.pulls.sum())

    def empirical_means(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.pulls > 0, self.sums / np.maximum(self.pulls, 1), 0.0)

    def interval(self, s: int) -> tuple[float, float]:
        return float(self.lower[s]), float(self.upper[s])

    def width(self, s: int) -> float:
        return float(self.upper[s] - self.lower[s])

    def copy(self) -> "SearchState":
        new = object.__new__(SearchState)
        new.tree = self.tree
        for k in ("pulls", "sums", "lower", "upper", "rep"):
            setattr(new, k, getattr(self, k).copy())
        return new


def _leaf_index(state: SearchState, leaf: int) -> int:
    i = state.tree.leaf_index(leaf) if 0 <= leaf < state.tree.n_nodes else -1
    if i < 0:
        raise NotALeaf(f"node {leaf} is not a leaf")
    return i


def leaf_interval(state: SearchState, leaf: int, rate: ExplorationRate,
                  family: str = "hoeffding") -> tuple[float, float]:
    i = _leaf_index(state, leaf)
    n = int(state.pulls[i])
    if n == 0:
        return 0.0, 1.0
    return interval_from_stats(n, state.sums[i], rate(n), family_code(family))


def set_leaf_interval(state: SearchState, leaf: int, rate: ExplorationRate,
                      family: str = "hoeffding") -> None:
    state.lower[leaf], state.upper[leaf] = leaf_interval(state, leaf, rate, family)


def propagate(state: SearchState, changed_leaf: int) -> SearchState:
    """Refresh intervals and representatives on the ancestors of ``changed_leaf``."""
    _leaf_index(state, changed_leaf)
    a = state.tree.arrays
    propagate_up(changed_leaf, a.parent, a.kind, a.cstart, a.clist,
                 state.lower, state.upper, state.rep)
    return state


def record_sample(state: SearchState, leaf: int, x: float, rate: ExplorationRate,
                  family: str = "hoeffding") -> None:
    i = _leaf_index(state, leaf)
    state.pulls[i] += 1
    state.sums[i] += x
    set_leaf_interval(state, leaf, rate, family)
    propagate(state, leaf)


def recompute(state: SearchState, rate: ExplorationRate, family: str = "hoeffding",
              global_time: int = 0) -> SearchState:
    """Rebuild every interval from the leaf statistics."""
    a = state.tree.arrays
    ca, cb = rate.coefficients
    recompute_all(a.kind, a.cstart, a.clist, a.node_of_leaf, state.pulls, state.sums,
                  int(global_time), ca, cb, family_code(family),
                  state.lower, state.upper, state.rep)
    return state


def representative_child(state: SearchState, node: int) -> int:
    """Max upper bound at MAX nodes, min lower bound at MIN nodes; first index wins ties."""
    tree = state.tree
    if tree.is_leaf(node):
        raise NotInternal(f"node {node} is a leaf")
    ch = np.asarray(tree.children(node))
    if tree.kind(node) == MAX:
        return int(ch[np.argmax(state.upper[ch])])
    return int(ch[np.argmin(state.lower[ch])])


def representative_leaf(state: SearchState, node: int) -> int:
    a = state.tree.arrays
    return int(descend(node, a.kind, state.rep))


def representative_path(state: SearchState, node: int) -> list[int]:
    path = [node]
    while not state.tree.is_leaf(path[-1]):
        path.append(int(state.rep[path[-1]]))
    return path


def intervals_nested(state: SearchState, path: list[int], tol: float = 0.0) -> bool:
    """Whether each interval on ``path`` lies inside the next one."""
    lo, hi = state.lower[path], state.upper[path]
    return bool(np.all(lo[:-1] >= lo[1:] - tol) and np.all(hi[:-1] <= hi[1:] + tol))
