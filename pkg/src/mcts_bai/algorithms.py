"""Best-action identification in minimax trees.

BAI-MCTS (UGapE-MCTS, LUCB-MCTS and its two-leaf variant) runs in the compiled
loops of :mod:`mcts_bai.engine`.  With ``trace=True`` the same loop is driven
one round at a time from Python so an :class:`InvariantMonitor` can inspect
every round; the sampled sequence is identical either way.

The baselines are FindTopWinner (round-based uniform sampling and pruning) and
M-LUCB (representative leaves first, then an LUCB step over those leaves,
with a global-time exploration rate).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import engine
from .confidence import ExplorationRate, SearchState, family_code, representative_path
from .errors import EpsilonZeroUnsupported, SingleAction
from .oracle import LeafOracle
from .tree import GameTree, TreeAnalysis, evaluate_tree, minimax_values

STOPPING_RULE = "stopping_rule"
BUDGET_CAP = "budget_cap"

DEFAULT_BUDGET_CAP = 10**8


class Algorithm(str, enum.Enum):
    UGAPE_MCTS = "ugape"
    LUCB_MCTS = "lucb"
    LUCB_MCTS_TWOLEAF = "lucb2"
    FIND_TOP_WINNER = "ftw"
    M_LUCB = "mlucb"


_ENGINE_CODES = {Algorithm.UGAPE_MCTS: engine.UGAPE, Algorithm.LUCB_MCTS: engine.LUCB,
                 Algorithm.LUCB_MCTS_TWOLEAF: engine.LUCB_TWOLEAF}


@dataclass(frozen=True)
class AlgorithmConfig:
    algorithm: Algorithm = Algorithm.UGAPE_MCTS
    epsilon: float = 0.0
    delta: float = 0.1
    beta: str = "experiments"
    ci: str = "kl"
    budget_cap: int = DEFAULT_BUDGET_CAP
    seed: int = 0
    trace: bool = False

    def __post_init__(self):
        object.__setattr__(self, "algorithm", Algorithm(self.algorithm))
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.budget_cap < 1:
            raise ValueError("budget cap must be at least 1")
        family_code(self.ci)

    def rate(self, leaf_count: int) -> ExplorationRate:
        return ExplorationRate(self.beta, leaf_count, self.delta)


@dataclass
class RunResult:
    algorithm: Algorithm
    recommendation: int
    tau: int
    pulls: np.ndarray
    correct: bool
    stopped_by: str
    # -1 when every leaf interval contained its mean for the whole run
    first_ci_failure: int = -1
    trace: list | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def ci_valid(self) -> bool:
        return self.first_ci_failure < 0

    def same_outcome(self, other: "RunResult") -> bool:
        return (self.recommendation == other.recommendation and self.tau == other.tau
                and np.array_equal(self.pulls, other.pulls)
                and self.stopped_by == other.stopped_by
                and self.first_ci_failure == other.first_ci_failure)


@dataclass(frozen=True)
class PromisingPair:
    b: int
    c: int
    b_index: np.ndarray | None = None  # UGapE B_s(t) per depth-one node


def _root_children(state: SearchState) -> np.ndarray:
    ch = np.asarray(state.tree.root_children)
    if len(ch) < 2:
        raise SingleAction("the root has a single child")
    return ch


def ugape_promising(state: SearchState) -> PromisingPair:
    ch = _root_children(state)
    a = state.tree.arrays
    b, c = engine.ugape_pair(a.cstart, a.clist, state.lower, state.upper)
    u = state.upper[ch]
    idx = np.array([np.max(np.delete(u, k)) for k in range(len(ch))]) - state.lower[ch]
    return PromisingPair(int(b), int(c), idx)


def lucb_promising(state: SearchState) -> PromisingPair:
    _root_children(state)
    a = state.tree.arrays
    b, c = engine.lucb_pair(a.cstart, a.clist, a.kind, state.rep, a.leaf_of_node,
                            state.pulls, state.sums, state.upper)
    return PromisingPair(int(b), int(c))


def select_node(state: SearchState, pair: PromisingPair) -> int:
    """The wider of b and c; b on ties."""
    return pair.b if state.width(pair.b) >= state.width(pair.c) else pair.c


def select_and_sample(state: SearchState, pair: PromisingPair, oracle: LeafOracle,
                      rate: ExplorationRate, family: str = "kl") -> int:
    from .confidence import record_sample, representative_leaf

    leaf = representative_leaf(state, select_node(state, pair))
    record_sample(state, leaf, oracle.draw(leaf), rate, family)
    return leaf


def stopping_rule(state: SearchState, pair: PromisingPair, epsilon: float) -> bool:
    return bool(state.upper[pair.c] - state.lower[pair.b] < epsilon)


# runs ------------------------------------------------------------------------

def _is_correct(analysis: TreeAnalysis, rec: int, epsilon: float) -> bool:
    return bool(analysis.values[0] - analysis.values[rec] <= epsilon + 1e-12)


def _single_action(tree, config, analysis) -> RunResult:
    rec = tree.root_children[0]
    return RunResult(config.algorithm, rec, 0, np.zeros(tree.n_leaves, dtype=np.int64),
                     _is_correct(analysis, rec, config.epsilon), STOPPING_RULE,
                     diagnostics={"single_action": True})


def run_bai_mcts(tree: GameTree, oracle: LeafOracle, config: AlgorithmConfig,
                 analysis: TreeAnalysis | None = None, monitor=None,
                 audit_nesting: bool = False) -> RunResult:
    """One BAI-MCTS run.

    ``audit_nesting`` counts, after every sample, whether intervals shrink along
    each depth-one node's representative path (compiled, so cheap enough for
    long runs); the tallies land in ``diagnostics``.
    """
    algo = config.algorithm
    if algo not in _ENGINE_CODES:
        raise ValueError(f"{algo.value} is not a BAI-MCTS algorithm")
    analysis = analysis or evaluate_tree(tree)
    if len(tree.root_children) == 1:
        return _single_action(tree, config, analysis)
    rate = config.rate(tree.n_leaves)
    ca, cb = rate.coefficients
    fam = family_code(config.ci)
    state = SearchState(tree)
    a = tree.arrays
    counters = np.array([0, -1, 0, 0] if audit_nesting else [0, -1], dtype=np.int64)
    info = np.zeros(6, dtype=np.int64)
    trace = [] if config.trace else None
    if config.trace and monitor is None:
        monitor = InvariantMonitor(tree, analysis, rate, config.epsilon, algo)

    def advance(max_rounds):
        while True:
            status = engine.bai_loop(_ENGINE_CODES[algo], a.kind, a.parent, a.cstart, a.clist,
                                     a.leaf_of_node, tree.leaf_means, state.pulls, state.sums,
                                     state.lower, state.upper, state.rep, oracle.buffer,
                                     oracle.pos, counters, info, config.epsilon,
                                     config.budget_cap, ca, cb, fam, max_rounds)
            if status != engine.REFILL:
                return status
            oracle.refill(int(info[5]))

    status = advance(-1 if monitor is None else 0)
    while status == engine.ROUND_LIMIT:
        choice = tuple(int(x) for x in info[:5])
        monitor.observe_round(state, *choice)
        if trace is not None:
            trace.append((state.t, *choice))
        status = advance(1)

    rec = int(info[0])
    result = RunResult(algo, rec, int(counters[0]), state.pulls.copy(),
                       _is_correct(analysis, rec, config.epsilon),
                       STOPPING_RULE if status == engine.STOPPED else BUDGET_CAP,
                       int(counters[1]), trace)
    if monitor is not None:
        result.diagnostics.update(monitor.summary())
    if audit_nesting:
        result.diagnostics.update(nested_audit_checks=int(counters[2]),
                                  nested_audit_violations=int(counters[3]))
    return result


def ftw_round_size(r: int, leaf_count: int, delta: float) -> int:
    """Cumulative per-leaf sample count after round r (precision 2^-r).

    Two-sided Hoeffding at precision eps_r, union bound over leaves and rounds:
    n_r = ceil(ln(2|L| / (eps_r delta)) / (2 eps_r^2)).
    """
    eps_r = 2.0 ** -r
    return math.ceil(math.log(2.0 * leaf_count / (eps_r * delta)) / (2.0 * eps_r**2))


def run_find_top_winner(tree: GameTree, oracle: LeafOracle, config: AlgorithmConfig,
                        analysis: TreeAnalysis | None = None,
                        allow_zero_epsilon: bool = False) -> RunResult:
    """Round-based uniform sampling with pruning of nodes far from their parent.

    With ``allow_zero_epsilon`` an epsilon of 0 means: keep refining until a
    single depth-one node survives (or the budget cap is reached).
    """
    if config.epsilon <= 0 and not allow_zero_epsilon:
        raise EpsilonZeroUnsupported("FindTopWinner needs epsilon > 0")
    analysis = analysis or evaluate_tree(tree)
    if len(tree.root_children) == 1:
        return _single_action(tree, config, analysis)
    a = tree.arrays
    nl = tree.n_leaves
    alive = np.ones(tree.n_nodes, dtype=bool)
    pulls = np.zeros(nl, dtype=np.int64)
    sums = np.zeros(nl)
    roots = np.asarray(tree.root_children)
    rounds = []
    stopped_by = STOPPING_RULE
    r = 0
    est = None
    while True:
        r += 1
        eps_r = 2.0 ** -r
        n_r = ftw_round_size(r, nl, config.delta)
        live = np.flatnonzero(alive[a.node_of_leaf])
        need = int(np.sum(n_r - pulls[live]))
        if pulls.sum() + need > config.budget_cap:
            stopped_by = BUDGET_CAP
            r -= 1
            break
        for i in live:
            k = n_r - pulls[i]
            if k > 0:
                sums[i] += oracle.draw_many(int(i), int(k)).sum()
                pulls[i] = n_r
        est = _alive_estimates(tree, alive, pulls, sums)
        gap = np.abs(est[1:] - est[a.parent[1:]])
        prune = np.zeros(tree.n_nodes, dtype=bool)
        prune[1:] = alive[1:] & (gap > 2 * eps_r)
        for s in np.flatnonzero(prune):
            _kill_subtree(tree, alive, int(s))
        rounds.append({"round": r, "precision": eps_r, "n_r": n_r,
                       "alive_leaves": int(alive[a.node_of_leaf].sum())})
        if alive[roots].sum() == 1 or eps_r <= config.epsilon / 2:
            break
    if est is None:
        est = _alive_estimates(tree, alive, pulls, sums)
    live_roots = roots[alive[roots]]
    rec = int(live_roots[np.argmax(est[live_roots])])
    return RunResult(config.algorithm, rec, int(pulls.sum()), pulls,
                     _is_correct(analysis, rec, config.epsilon), stopped_by,
                     diagnostics={"rounds": rounds})


def _alive_estimates(tree, alive, pulls, sums) -> np.ndarray:
    a = tree.arrays
    est = np.full(tree.n_nodes, np.nan)
    means = np.divide(sums, pulls, out=np.zeros_like(sums), where=pulls > 0)
    est[a.node_of_leaf] = means
    for s in range(tree.n_nodes - 1, -1, -1):
        if a.kind[s] == 0 or not alive[s]:
            continue
        ch = a.clist[a.cstart[s]:a.cstart[s + 1]]
        v = est[ch[alive[ch]]]
        est[s] = v.max() if a.kind[s] == 1 else v.min()
    return est


def _kill_subtree(tree, alive, s):
    stack = [s]
    while stack:
        u = stack.pop()
        alive[u] = False
        stack.extend(tree.children(u))


def run_m_lucb(tree: GameTree, oracle: LeafOracle, config: AlgorithmConfig,
               analysis: TreeAnalysis | None = None) -> RunResult:
    analysis = analysis or evaluate_tree(tree)
    if len(tree.root_children) == 1:
        return _single_action(tree, config, analysis)
    rate = config.rate(tree.n_leaves)
    ca, cb = rate.coefficients
    state = SearchState(tree)
    a = tree.arrays
    emp = np.zeros(tree.n_nodes)
    counters = np.array([0, -1], dtype=np.int64)
    info = np.zeros(6, dtype=np.int64)
    while True:
        status = engine.mlucb_loop(a.kind, a.parent, a.cstart, a.clist, a.leaf_of_node,
                                   a.node_of_leaf, tree.leaf_means, state.pulls, state.sums,
                                   state.lower, state.upper, state.rep, emp, oracle.buffer,
                                   oracle.pos, counters, info, config.epsilon,
                                   config.budget_cap, ca, cb, family_code(config.ci), -1)
        if status == engine.REFILL:
            oracle.refill(int(info[5]))
            continue
        break
    rec = int(info[0])
    return RunResult(config.algorithm, rec, int(counters[0]), state.pulls.copy(),
                     _is_correct(analysis, rec, config.epsilon),
                     STOPPING_RULE if status == engine.STOPPED else BUDGET_CAP,
                     int(counters[1]))


def run(tree: GameTree, oracle: LeafOracle, config: AlgorithmConfig,
        analysis: TreeAnalysis | None = None) -> RunResult:
    if config.algorithm == Algorithm.FIND_TOP_WINNER:
        return run_find_top_winner(tree, oracle, config, analysis, allow_zero_epsilon=True)
    if config.algorithm == Algorithm.M_LUCB:
        return run_m_lucb(tree, oracle, config, analysis)
    return run_bai_mcts(tree, oracle, config, analysis)


# instrumentation ---------------------------------------------------------------

class InvariantMonitor:
    """Round-by-round checks of the properties the analysis relies on.

    ``observe_round`` sees the state at time t together with the pair and
    leaves the algorithm chose from it.  Each property is tallied as
    ``<name>_checks`` / ``<name>_violations``:

    * ``coverage``: valid leaf intervals imply every node interval holds V_s.
    * ``nested``: intervals shrink along each depth-one node's representative path.
    * ``pull_bound`` (UGapE): N_l(t) <= 8 beta(N_l(t)) / max(gap_l, root gap, eps)^2
      for the sampled leaf, whenever the leaf intervals are valid.
    * ``pair_bound`` (two-leaf LUCB): the same with beta(t) and the tilde gaps,
      for at least one of the two sampled leaves.
    * ``selection`` (UGapE): sampling b implies U_c <= U_b, sampling c implies L_c <= L_b.
    """

    NAMES = ("coverage", "nested", "pull_bound", "pair_bound", "selection")

    def __init__(self, tree: GameTree, analysis: TreeAnalysis, rate: ExplorationRate,
                 epsilon: float, algorithm: Algorithm):
        self.tree = tree
        self.analysis = analysis
        self.rate = rate
        self.algorithm = Algorithm(algorithm)
        self.counts = {f"{n}_{k}": 0 for n in self.NAMES for k in ("checks", "violations")}
        self.eff = np.maximum(np.maximum(analysis.leaf_gaps, analysis.root_gap), epsilon)
        self.eff_tilde = np.maximum(np.maximum(analysis.leaf_gaps_tilde, analysis.root_gap),
                                    epsilon)

    def _tally(self, name: str, ok: bool) -> None:
        self.counts[f"{name}_checks"] += 1
        if not ok:
            self.counts[f"{name}_violations"] += 1

    def observe_round(self, state: SearchState, b: int, c: int, selected: int,
                      leaf1: int, leaf2: int) -> None:
        """Check the state at time t against the choice made from it."""
        tree, v = self.tree, self.analysis.values
        leaves = tree.leaves
        mu = tree.leaf_means
        lower, upper, pulls = state.lower, state.upper, state.pulls
        valid = bool(np.all((lower[leaves] <= mu) & (mu <= upper[leaves])))
        if valid:
            self._tally("coverage", bool(np.all((lower <= v) & (v <= upper))))
        for s in tree.root_children:
            self._tally("nested", self.nested_ok(state, s))

        if self.algorithm == Algorithm.UGAPE_MCTS:
            if selected == b:
                self._tally("selection", upper[c] <= upper[b])
            else:
                self._tally("selection", lower[c] <= lower[b])
            if valid:
                i = tree.leaf_index(leaf1)
                n = pulls[i]
                if n > 0 and self.eff[i] > 0:
                    self._tally("pull_bound", n <= 8 * self.rate(n) / self.eff[i] ** 2)
        elif self.algorithm == Algorithm.LUCB_MCTS_TWOLEAF and valid:
            t = max(state.t, 1)
            ok = False
            for leaf in (leaf1, leaf2):
                i = tree.leaf_index(leaf)
                n = pulls[i]
                if n == 0 or self.eff_tilde[i] == 0 or n <= 8 * self.rate(t) / self.eff_tilde[i] ** 2:
                    ok = True
            self._tally("pair_bound", ok)

    @staticmethod
    def nested_ok(state: SearchState, node: int) -> bool:
        path = representative_path(state, node)
        lo, hi = state.lower[path], state.upper[path]
        return bool(np.all(lo[:-1] >= lo[1:]) and np.all(hi[:-1] <= hi[1:]))

    def summary(self) -> dict:
        return dict(self.counts)

    @property
    def violations(self) -> int:
        return sum(v for k, v in self.counts.items() if k.endswith("_violations"))


def recommend_by_values(tree: GameTree, leaf_values) -> int:
    """Depth-one node with the largest minimax value of ``leaf_values``."""
    v = minimax_values(tree, leaf_values)
    ch = np.asarray(tree.root_children)
    return int(ch[np.argmax(v[ch])])
