"""Compiled inner loops for the confidence-based algorithms.

The loops operate on the flat arrays of :class:`~mcts_bai.tree.TreeArrays`,
:class:`~mcts_bai.confidence.SearchState` and
:class:`~mcts_bai.oracle.LeafOracle`.  They return control to Python when they
stop, hit the budget cap, run out of buffered samples for a leaf (the caller
refills and calls again), or have executed ``max_rounds`` rounds (-1 for no
limit).  A ROUND_LIMIT return happens after the next round's choice has been
written to ``info`` but before it is sampled, so ``max_rounds=0`` previews a
round.  Re-entering
a loop recomputes the current round from the state alone, so splitting a run
across calls never changes its outcome.

``counters`` is an int64 array: ``[t, first_ci_failure]``, the latter -1 while
every leaf interval has contained its true mean.  A four-entry array
``[t, first_ci_failure, nested_checks, nested_violations]`` also audits, after
every sample, that intervals shrink along each depth-one node's
representative path.  ``info`` receives
``[b, c, selected, leaf_1, leaf_2, refill_leaf]`` for the last round
started; ``refill_leaf`` is the leaf index to top up after a REFILL return.
"""

import numpy as np
from numba import njit

from .confidence import (beta_value, descend, interval_from_stats, propagate_up,
                         recompute_all)

UGAPE, LUCB, LUCB_TWOLEAF = 0, 1, 2

STOPPED, CAPPED, REFILL, ROUND_LIMIT = 0, 1, 2, 3


@njit(cache=True)
def ugape_pair(cstart, clist, lower, upper):
    """b = argmin_a max_{a' != a} U_a' - L_a ; c = argmax_{a != b} U_a."""
    r0, r1 = cstart[0], cstart[1]
    u1 = -np.inf
    u2 = -np.inf
    i1 = -1
    for k in range(r0, r1):
        u = upper[clist[k]]
        if u > u1:
            u2 = u1
            u1 = u
            i1 = k
        elif u > u2:
            u2 = u
    b = -1
    best = np.inf
    for k in range(r0, r1):
        other = u2 if k == i1 else u1
        idx = other - lower[clist[k]]
        if idx < best:
            best = idx
            b = k
    return clist[b], challenger(cstart, clist, upper, clist[b])


@njit(cache=True)
def challenger(cstart, clist, upper, b):
    c = -1
    best = -np.inf
    for k in range(cstart[0], cstart[1]):
        s = clist[k]
        if s != b and upper[s] > best:
            best = upper[s]
            c = s
    return c


@njit(cache=True)
def lucb_pair(cstart, clist, kind, rep, leaf_of_node, pulls, sums, upper):
    """b = argmax_a empirical mean of a's representative leaf ; c as in UGapE."""
    b = -1
    best = -np.inf
    for k in range(cstart[0], cstart[1]):
        s = clist[k]
        i = leaf_of_node[descend(s, kind, rep)]
        v = sums[i] / pulls[i] if pulls[i] > 0 else 0.0
        if v > best:
            best = v
            b = s
    return b, challenger(cstart, clist, upper, b)


@njit(cache=True)
def _sample(node, kind, parent, cstart, clist, leaf_of_node, means, pulls, sums,
            lower, upper, rep, buf, pos, counters, a, b, family):
    i = leaf_of_node[node]
    x = buf[i, pos[i]]
    pos[i] += 1
    pulls[i] += 1
    sums[i] += x
    counters[0] += 1
    lo, hi = interval_from_stats(pulls[i], sums[i], beta_value(a, b, float(pulls[i])), family)
    lower[node] = lo
    upper[node] = hi
    propagate_up(node, parent, kind, cstart, clist, lower, upper, rep)
    if counters[1] < 0 and (means[i] < lo or means[i] > hi):
        counters[1] = counters[0]
    if counters.shape[0] >= 4:
        _audit(cstart, clist, kind, lower, upper, rep, counters)


@njit(cache=True)
def nested_ok(s, kind, lower, upper, rep):
    """Each interval on the representative path below ``s`` contains the one above."""
    while kind[s] != 0:
        c = rep[s]
        if lower[s] < lower[c] or upper[s] > upper[c]:
            return False
        s = c
    return True


@njit(cache=True)
def _audit(cstart, clist, kind, lower, upper, rep, counters):
    for k in range(cstart[0], cstart[1]):
        counters[2] += 1
        if not nested_ok(clist[k], kind, lower, upper, rep):
            counters[3] += 1


@njit(cache=True)
def bai_loop(algo, kind, parent, cstart, clist, leaf_of_node, means,
             pulls, sums, lower, upper, rep, buf, pos, counters, info,
             eps, cap, a, b, family, max_rounds):
    block = buf.shape[1]
    rounds = 0
    while True:
        t = counters[0]
        if algo == UGAPE:
            bb, cc = ugape_pair(cstart, clist, lower, upper)
        else:
            bb, cc = lucb_pair(cstart, clist, kind, rep, leaf_of_node, pulls, sums, upper)
        info[0] = bb
        info[1] = cc
        if upper[cc] - lower[bb] < eps:
            return STOPPED
        if t >= cap:
            return CAPPED
        if algo == LUCB_TWOLEAF:
            l1 = descend(bb, kind, rep)
            l2 = descend(cc, kind, rep)
            info[2] = -1
            info[3] = l1
            info[4] = l2
            if max_rounds >= 0 and rounds >= max_rounds:
                return ROUND_LIMIT
            if pos[leaf_of_node[l1]] >= block:
                info[5] = leaf_of_node[l1]
                return REFILL
            if pos[leaf_of_node[l2]] >= block:
                info[5] = leaf_of_node[l2]
                return REFILL
            _sample(l1, kind, parent, cstart, clist, leaf_of_node, means, pulls, sums,
                    lower, upper, rep, buf, pos, counters, a, b, family)
            _sample(l2, kind, parent, cstart, clist, leaf_of_node, means, pulls, sums,
                    lower, upper, rep, buf, pos, counters, a, b, family)
        else:
            r = bb if upper[bb] - lower[bb] >= upper[cc] - lower[cc] else cc
            leaf = descend(r, kind, rep)
            info[2] = r
            info[3] = leaf
            info[4] = -1
            if max_rounds >= 0 and rounds >= max_rounds:
                return ROUND_LIMIT
            if pos[leaf_of_node[leaf]] >= block:
                info[5] = leaf_of_node[leaf]
                return REFILL
            _sample(leaf, kind, parent, cstart, clist, leaf_of_node, means, pulls, sums,
                    lower, upper, rep, buf, pos, counters, a, b, family)
        rounds += 1


@njit(cache=True)
def empirical_maximin(kind, parent, cstart, clist, node_of_leaf, pulls, sums, emp):
    """Minimax of empirical leaf means; unvisited leaves count as the parent's worst case."""
    for i in range(node_of_leaf.shape[0]):
        s = node_of_leaf[i]
        if pulls[i] > 0:
            emp[s] = sums[i] / pulls[i]
        else:
            emp[s] = 0.0 if kind[parent[s]] == 1 else 1.0
    for s in range(kind.shape[0] - 1, -1, -1):
        if kind[s] == 0:
            continue
        v = emp[clist[cstart[s]]]
        for k in range(cstart[s] + 1, cstart[s + 1]):
            w = emp[clist[k]]
            if (kind[s] == 1 and w > v) or (kind[s] == 2 and w < v):
                v = w
        emp[s] = v


@njit(cache=True)
def mlucb_loop(kind, parent, cstart, clist, leaf_of_node, node_of_leaf, means,
               pulls, sums, lower, upper, rep, emp, buf, pos, counters, info,
               eps, cap, a, b, family, max_rounds):
    block = buf.shape[1]
    rounds = 0
    while True:
        t = counters[0]
        recompute_all(kind, cstart, clist, node_of_leaf, pulls, sums, max(t, 1),
                      a, b, family, lower, upper, rep)
        if counters[1] < 0:
            for i in range(node_of_leaf.shape[0]):
                s = node_of_leaf[i]
                if means[i] < lower[s] or means[i] > upper[s]:
                    counters[1] = t
                    break
        empirical_maximin(kind, parent, cstart, clist, node_of_leaf, pulls, sums, emp)
        bb = -1
        best = -np.inf
        for k in range(cstart[0], cstart[1]):
            s = clist[k]
            if emp[s] > best:
                best = emp[s]
                bb = s
        lb = descend(bb, kind, rep)
        cc = -1
        best = -np.inf
        for k in range(cstart[0], cstart[1]):
            s = clist[k]
            if s != bb:
                u = upper[descend(s, kind, rep)]
                if u > best:
                    best = u
                    cc = s
        lc = descend(cc, kind, rep)
        info[0] = bb
        info[1] = cc
        info[2] = -1
        info[3] = lb
        info[4] = lc
        if upper[lc] - lower[lb] < eps:
            return STOPPED
        if t >= cap:
            return CAPPED
        if max_rounds >= 0 and rounds >= max_rounds:
            return ROUND_LIMIT
        i1 = leaf_of_node[lb]
        i2 = leaf_of_node[lc]
        if pos[i1] >= block:
            info[5] = i1
            return REFILL
        if pos[i2] >= block:
            info[5] = i2
            return REFILL
        for i in (i1, i2):
            x = buf[i, pos[i]]
            pos[i] += 1
            pulls[i] += 1
            sums[i] += x
            counters[0] += 1
        rounds += 1


def warmup() -> None:
    """Compile (or load from cache) every loop on a tiny tree."""
    from .tree import GameTree, leaf, max_node, min_node
    from .confidence import SearchState
    from .oracle import LeafOracle

    tree = GameTree.from_spec(max_node(min_node(leaf(1.0), leaf(1.0)), leaf(0.0)))
    for algo in (UGAPE, LUCB, LUCB_TWOLEAF, -1):
        st = SearchState(tree)
        orc = LeafOracle(tree, block=4)
        for i in range(tree.n_leaves):
            orc.refill(i)
        ar = tree.arrays
        counters = np.array([0, -1], dtype=np.int64)
        info = np.zeros(6, dtype=np.int64)
        if algo >= 0:
            bai_loop(algo, ar.kind, ar.parent, ar.cstart, ar.clist, ar.leaf_of_node,
                     tree.leaf_means, st.pulls, st.sums, st.lower, st.upper, st.rep,
                     orc.buffer, orc.pos, counters, info, 0.0, 2, 1.0, 1.0, 0, -1)
        else:
            emp = np.zeros(tree.n_nodes)
            mlucb_loop(ar.kind, ar.parent, ar.cstart, ar.clist, ar.leaf_of_node,
                       ar.node_of_leaf, tree.leaf_means, st.pulls, st.sums, st.lower,
                       st.upper, st.rep, emp, orc.buffer, orc.pos, counters, info,
                       0.0, 2, 1.0, 1.0, 1, -1)
