"""Sample-complexity upper bounds, the log-log inversion and the depth-two lower bound.

The lower bound is the value of a max-min program over leaf sampling
proportions.  For depth-two trees whose means satisfy the ordering

    mu[0, 0] > mu[i, 0]  and  mu[i, 0] < mu[i, j]   for all i >= 1, j,

(0-based: row 0 is the best action and column 0 holds each row's minimum)
only the first row and the first column carry weight, and the inner
minimisation over alternative models has a closed form: both means move to
their weighted average.  :func:`solve_depth2_lower_bound` maximises the
resulting min-of-pairs objective with exponentiated-gradient ascent and then
polishes the iterate by solving the optimality conditions on the active set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .confidence import kl_bernoulli
from .errors import (DegenerateRegime, DomainError, InfiniteBound, NonConvergence,
                     NotDepthTwo, OrderingViolated)
from .tree import GameTree, TreeAnalysis, effective_gaps

ORDER_TOL = 0.0


def kl_div(x: float, y: float) -> float:
    """Binary relative entropy d(x, y), with 0 ln 0 = 0."""
    if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
        raise DomainError(f"d({x}, {y}) needs arguments in [0, 1]")
    if y in (0.0, 1.0):
        if x == y:
            return 0.0
        raise DomainError(f"d({x}, {y}) is infinite")
    out = 0.0
    if x > 0:
        out += x * math.log(x / y)
    if x < 1:
        out += (1 - x) * math.log((1 - x) / (1 - y))
    return out


def _lnln(x: float) -> float:
    """ln ln x, floored at 0 once x <= e."""
    return math.log(math.log(x)) if x > math.e else 0.0


def _check_delta(delta: float, leaf_count: int) -> None:
    if not 0 < delta <= min(1.0, 0.1 * leaf_count):
        raise DomainError(f"delta={delta} must lie in (0, min(1, 0.1*|L|)]")


def _gaps(analysis: TreeAnalysis, epsilon: float, variant: str) -> np.ndarray:
    g = effective_gaps(analysis, epsilon, variant)
    if np.any(g <= 0):
        raise InfiniteBound("some effective gap is zero")
    return g


def theorem1_bound(analysis: TreeAnalysis, epsilon: float, delta: float,
                   leaf_count: int | None = None) -> float:
    """High-probability bound on the UGapE-MCTS stopping time."""
    g = _gaps(analysis, epsilon, "standard")
    L = len(g) if leaf_count is None else leaf_count
    _check_delta(delta, L)
    h = float(np.sum(1.0 / g**2))
    x = math.log(L / delta)
    second = sum(16.0 / gi**2 * _lnln(1.0 / gi**2) for gi in g)
    inner = 8 * math.e * x + 24 * math.e * _lnln(L / delta)
    return 8 * h * x + second + 8 * h * (3 * _lnln(L / delta) + 2 * _lnln(inner)) + 1


def theorem3_bound(analysis: TreeAnalysis, epsilon: float, delta: float,
                   leaf_count: int | None = None) -> float:
    """High-probability bound on the two-leaf LUCB-MCTS stopping time."""
    g = _gaps(analysis, epsilon, "tilde")
    L = len(g) if leaf_count is None else leaf_count
    _check_delta(delta, L)
    h = float(np.sum(1.0 / g**2))
    c = math.log(L / delta) + 3 * _lnln(L / delta)
    return 16 * h * (c + 2 * _lnln(16 * math.e * h * c))


@dataclass(frozen=True)
class LogLogInversion:
    lower: float
    upper: float
    simplified_upper: float
    ratio: float  # the factor C(1+ln aC)/(C(1+ln aC) - 3/2) in the upper end


def invert_loglog(a: float, C: float) -> LogLogInversion:
    """Sandwich S = sup{s : a(C + 1.5 ln(1 + ln s)) >= s}."""
    if a < 1 or C < 1:
        raise DomainError("need a >= 1 and C >= 1")
    k = C * (1 + math.log(a * C))
    if k <= 1.5:
        raise DegenerateRegime("C(1 + ln aC) <= 3/2")
    lg = math.log(1 + math.log(a * C))
    ratio = k / (k - 1.5)
    return LogLogInversion(a * C + 1.5 * a * lg, a * C + 1.5 * a * lg * ratio,
                           a * C + 2 * a * lg, ratio)


def brute_force_sup(a: float, C: float, s_max: int = 10**7) -> int:
    """Largest integer s <= s_max with a(C + 1.5 ln(1 + ln s)) >= s."""
    s = np.arange(1, s_max + 1, dtype=np.float64)
    ok = np.flatnonzero(a * (C + 1.5 * np.log1p(np.log(s))) >= s)
    return int(ok[-1] + 1) if len(ok) else 0


# depth-two lower bound ----------------------------------------------------------

@dataclass
class LowerBoundSolution:
    t_star: float
    weights: np.ndarray
    objective: float
    lower_bound_at_delta: float
    diagnostics: dict = field(default_factory=dict)


def check_ordering(mu) -> np.ndarray:
    mu = np.asarray(mu, dtype=np.float64)
    if mu.ndim != 2 or mu.shape[0] < 2 or mu.shape[1] < 1:
        raise NotDepthTwo("expected a K x M mean matrix with K >= 2")
    if not (mu[0, 0] > mu[1:, 0] + ORDER_TOL).all():
        raise OrderingViolated("mu[0,0] must exceed every mu[i,0], i >= 1")
    if mu.shape[1] > 1 and not (mu[1:, :1] < mu[1:, 1:] - ORDER_TOL).all():
        raise OrderingViolated("each row i >= 1 needs its strict minimum in column 0")
    return mu


def pair_objective(mu, w, i: int, a: int) -> float:
    """w[0,a] d(mu[0,a], m) + w[i,0] d(mu[i,0], m), m their weighted mean."""
    mu = check_ordering(mu)
    w = np.asarray(w, dtype=np.float64)
    if i < 1:
        raise ValueError("pairs use a row i >= 1")
    return _pair(mu[0, a], mu[i, 0], w[0, a], w[i, 0])


def _pair(x, y, wx, wy):
    s = wx + wy
    if s <= 0:
        return 0.0
    m = (wx * x + wy * y) / s
    return wx * kl_bernoulli(x, m) + wy * kl_bernoulli(y, m)


@njit(cache=True)
def _pairs(top, first, w, M, out, grad_x, grad_y):
    """Objective of every (row, column) pair and its partial derivatives.

    ``w[:M]`` are the first-row weights and ``w[M:]`` the first-column
    weights of rows 1..K-1.  By the envelope theorem the derivative with
    respect to each weight is the divergence to the weighted mean.
    """
    p = 0
    for r in range(first.shape[0]):
        for a in range(M):
            wx = w[a]
            wy = w[M + r]
            s = wx + wy
            if s <= 0.0:
                m = 0.5 * (top[a] + first[r])
            else:
                m = (wx * top[a] + wy * first[r]) / s
            dx = kl_bernoulli(top[a], m)
            dy = kl_bernoulli(first[r], m)
            out[p] = wx * dx + wy * dy
            grad_x[p] = dx
            grad_y[p] = dy
            p += 1


@njit(cache=True)
def _eg_ascent(top, first, w, step0, max_iter, window, tol):
    """Exponentiated-gradient ascent on the min over pairs.

    Returns (best_w, best_value, iterations, converged).
    """
    M = top.shape[0]
    P = first.shape[0] * M
    val = np.empty(P)
    gx = np.empty(P)
    gy = np.empty(P)
    g = np.empty(w.shape[0])
    best = -1.0
    best_w = w.copy()
    mark = -1.0
    it = 0
    while it < max_iter:
        it += 1
        _pairs(top, first, w, M, val, gx, gy)
        p = 0
        for q in range(1, P):
            if val[q] < val[p]:
                p = q
        if val[p] > best:
            best = val[p]
            best_w[:] = w
        if it % window == 0:
            if best - mark < tol:
                return best_w, best, it, True
            mark = best
        g[:] = 0.0
        g[p % M] = gx[p]
        g[M + p // M] = gy[p]
        # the step acts on the sup-normalised supergradient so that it does
        # not depend on the scale of the divergences
        shift = g.max()
        eta = step0 / np.sqrt(it) / shift
        z = 0.0
        for j in range(w.shape[0]):
            w[j] = w[j] * np.exp(eta * (g[j] - shift))
            z += w[j]
        w /= z
    return best_w, best, it, False


def _min_pairs(top, first, w):
    M = len(top)
    P = len(first) * M
    val, gx, gy = np.empty(P), np.empty(P), np.empty(P)
    _pairs(top, first, w, M, val, gx, gy)
    return val, gx, gy


def _pair_jacobian(top, first, w, active):
    """Rows: gradient of each active pair objective with respect to w."""
    M = len(top)
    _, gx, gy = _min_pairs(top, first, w)
    J = np.zeros((len(active), len(w)))
    for k, p in enumerate(active):
        J[k, p % M] = gx[p]
        J[k, M + p // M] = gy[p]
    return J


def _polish(top, first, w, active_tol=1e-3, max_newton=50):
    """Newton on the optimality conditions of max_w min_p f_p(w) over the simplex.

    Unknowns: w (support), multipliers lam over the active pairs, z (value)
    and nu (simplex multiplier).  Conditions: f_p(w) = z on the active set,
    sum lam_p grad f_p = nu on the support, sum w = 1, sum lam = 1.
    Returns the polished w or None when Newton fails to certify a point.
    """
    val, _, _ = _min_pairs(top, first, w)
    vmin = val.min()
    active = np.flatnonzero(val <= vmin * (1 + active_tol))
    n = len(w)
    for _attempt in range(len(active)):
        J = _pair_jacobian(top, first, w, active)
        # initial multipliers: least squares on stationarity
        A = np.vstack([J.T, np.ones(len(active))])
        lam, *_ = np.linalg.lstsq(np.hstack([A, np.r_[-np.ones(n), 0.0][:, None]]),
                                  np.r_[np.zeros(n), 1.0], rcond=None)
        nu = lam[-1]
        lam = np.clip(lam[:-1], 0, None)
        x = np.r_[w, lam, vmin, nu]
        ok = False
        for _ in range(max_newton):
            F = _kkt(top, first, x, active)
            if np.max(np.abs(F)) < 1e-14:
                ok = True
                break
            Jf = _numjac(lambda y: _kkt(top, first, y, active), x)
            try:
                dx = np.linalg.lstsq(Jf, -F, rcond=None)[0]
            except np.linalg.LinAlgError:
                break
            x = x + dx
        else:
            ok = np.max(np.abs(_kkt(top, first, x, active))) < 1e-10
        if not ok:
            return None
        w_new, lam_new = x[:n], x[n:n + len(active)]
        if np.any(w_new < 0):
            return None
        if np.any(lam_new < -1e-12):
            active = active[lam_new > 0]
            continue
        val, _, _ = _min_pairs(top, first, w_new)
        if val.min() < x[n + len(active)] - 1e-12:
            return None
        return w_new
    return None


def _kkt(top, first, x, active):
    n = len(top) + len(first)
    k = len(active)
    w, lam, z, nu = x[:n], x[n:n + k], x[n + k], x[n + k + 1]
    val, _, _ = _min_pairs(top, first, w)
    J = _pair_jacobian(top, first, w, active)
    return np.r_[val[active] - z, J.T @ lam - nu, w.sum() - 1, lam.sum() - 1]


def _numjac(f, x, h=1e-7):
    f0 = f(x)
    J = np.empty((len(f0), len(x)))
    for j in range(len(x)):
        e = np.zeros_like(x)
        e[j] = h
        J[:, j] = (f(x + e) - f(x - e)) / (2 * h)
    return J


def canonical_permutation(mu) -> tuple[np.ndarray, np.ndarray]:
    """Row and per-row column orders putting mu into the required ordering.

    Rows are sorted so the best row (largest minimum) comes first; inside each
    row the minimal entry moves to column 0, the others keep their order.
    Returns (row_order, col_order) with ``col_order[r]`` the column order of
    original row ``row_order[r]``.
    """
    mu = np.asarray(mu, dtype=np.float64)
    mins = mu.min(axis=1)
    best = int(np.argmax(mins))
    rows = np.array([best] + [i for i in range(mu.shape[0]) if i != best])
    cols = []
    for i in rows:
        j = int(np.argmin(mu[i]))
        cols.append([j] + [k for k in range(mu.shape[1]) if k != j])
    return rows, np.array(cols)


def solve_depth2_lower_bound(mu, delta: float = 0.1, *, step0: float = 0.1,
                             max_iter: int = 10**6, window: int = 1000, tol: float = 1e-10,
                             polish: bool = True) -> LowerBoundSolution:
    """T*(mu), the optimal proportions w* and T* d(delta, 1 - delta) for a depth-two tree.

    ``mu`` is a K x M matrix (MAX root over K MIN nodes with M leaves each) or
    a depth-two :class:`GameTree` with equal branching at depth one.
    """
    if isinstance(mu, GameTree):
        mu = depth2_matrix(mu)
    mu = np.asarray(mu, dtype=np.float64)
    if mu.ndim != 2 or mu.shape[0] < 2:
        raise NotDepthTwo("expected a K x M mean matrix with K >= 2")
    if not 0 < delta < 1:
        raise DomainError("delta must lie in (0, 1)")
    rows, cols = canonical_permutation(mu)
    canon = np.array([mu[i, cols[r]] for r, i in enumerate(rows)])
    check_ordering(canon)
    K, M = canon.shape
    top = canon[0].copy()
    first = canon[1:, 0].copy()
    w0 = np.full(M + K - 1, 1.0 / (M + K - 1))
    w, value, iters, converged = _eg_ascent(top, first, w0, step0, max_iter, window, tol)
    diag = {"iterations": int(iters), "eg_objective": float(value), "polished": False}
    if polish:
        wp = _polish(top, first, w)
        if wp is not None:
            vp = _min_pairs(top, first, wp)[0].min()
            if vp >= value:
                w, value = wp, vp
                diag["polished"] = True
    val, gx, gy = _min_pairs(top, first, w)
    p = int(np.argmin(val))
    g = np.zeros_like(w)
    g[p % M] = gx[p]
    g[M + p // M] = gy[p]
    diag["final_gradient_norm"] = float(np.linalg.norm(g - w @ g))
    diag["converged"] = bool(converged or diag["polished"])

    canon_w = np.zeros((K, M))
    canon_w[0] = w[:M]
    canon_w[1:, 0] = w[M:]
    weights = np.zeros_like(mu)
    for r, i in enumerate(rows):
        weights[i, cols[r]] = canon_w[r]
    t_star = 1.0 / value
    sol = LowerBoundSolution(t_star, weights, float(value),
                             t_star * kl_div(delta, 1 - delta), diag)
    if not diag["converged"]:
        raise NonConvergence(f"no convergence after {iters} iterations", sol)
    return sol


def min_pair_value(mu, w) -> float:
    """min over pairs of the objective at full weight matrix ``w`` (canonical order)."""
    mu = check_ordering(mu)
    w = np.asarray(w, dtype=np.float64)
    return min(_pair(mu[0, a], mu[i, 0], w[0, a], w[i, 0])
               for i in range(1, mu.shape[0]) for a in range(mu.shape[1]))


def depth2_matrix(tree: GameTree) -> np.ndarray:
    """Mean matrix of a MAX-over-MIN depth-two tree with uniform branching."""
    from .tree import LEAF, MAX, MIN

    if tree.kind(tree.root) != MAX:
        raise NotDepthTwo("root must be a MAX node")
    rows = []
    for s in tree.root_children:
        ch = tree.children(s)
        if tree.kind(s) != MIN or any(tree.kind(c) != LEAF for c in ch):
            raise NotDepthTwo("depth-one nodes must be MIN nodes over leaves")
        rows.append([tree.mean(c) for c in ch])
    if len({len(r) for r in rows}) != 1:
        raise NotDepthTwo("depth-one nodes must have equal branching")
    return np.array(rows)
