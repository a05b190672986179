import numpy as np
import pytest

from mcts_bai import (Algorithm, AlgorithmConfig, ExplorationRate, GameTree, LeafOracle,
                      SearchState, evaluate_tree, leaf, max_node, min_node, run, run_bai_mcts,
                      run_find_top_winner, run_m_lucb)
from mcts_bai.algorithms import (BUDGET_CAP, STOPPING_RULE, PromisingPair, ftw_round_size,
                                 lucb_promising, select_and_sample, select_node, stopping_rule,
                                 ugape_promising)
from mcts_bai.confidence import propagate
from mcts_bai.errors import EpsilonZeroUnsupported, SingleAction
from mcts_bai.harness import generate_random_tree

BAI = ["ugape", "lucb", "lucb2"]


def depth_one(intervals):
    t = GameTree.from_spec(max_node(*(leaf(0.5) for _ in intervals)))
    s = SearchState(t)
    for node, (lo, hi) in zip(t.root_children, intervals):
        s.lower[node], s.upper[node] = lo, hi
        propagate(s, node)
    return t, s


# promising pairs -----------------------------------------------------------------

def test_ugape_pair_examples():
    t, s = depth_one([(0.6, 0.8), (0.3, 0.5)])
    p = ugape_promising(s)
    assert (p.b, p.c) == (1, 2)
    assert p.b_index == pytest.approx([-0.1, 0.5])
    t, s = depth_one([(0.2, 0.6)] * 3)
    p = ugape_promising(s)
    assert (p.b, p.c) == (1, 2)
    t, s = depth_one([(0.5, 0.9), (0.4, 0.7), (0.2, 0.8)])
    p = ugape_promising(s)
    assert p.b_index == pytest.approx([0.3, 0.5, 0.7])
    assert (p.b, p.c) == (1, 3)


def _lucb_state(vhat, upper):
    t, s = depth_one([(0.0, u) for u in upper])
    for i, v in enumerate(vhat):
        s.pulls[i], s.sums[i] = 10, 10 * v
    return s


def test_lucb_pair_examples():
    p = lucb_promising(_lucb_state([0.7, 0.4], [0.9, 0.95]))
    assert (p.b, p.c) == (1, 2)
    p = lucb_promising(_lucb_state([0.4, 0.7], [0.99, 0.8]))
    assert (p.b, p.c) == (2, 1)
    t = GameTree.from_spec(max_node(leaf(0.1), leaf(0.2), leaf(0.3)))
    p = lucb_promising(SearchState(t))
    assert (p.b, p.c) == (1, 2)


def test_single_action():
    t = GameTree.from_spec(max_node(min_node(leaf(0.2), leaf(0.9))))
    with pytest.raises(SingleAction):
        ugape_promising(SearchState(t))
    with pytest.raises(SingleAction):
        lucb_promising(SearchState(t))
    for algo in ["ugape", "lucb", "lucb2", "ftw", "mlucb"]:
        r = run(t, LeafOracle(t), AlgorithmConfig(algo, 0.01, 0.1))
        assert r.tau == 0 and r.recommendation == 1 and r.correct
        assert r.stopped_by == STOPPING_RULE and r.diagnostics["single_action"]


def test_selection_and_stopping():
    t, s = depth_one([(0.4, 0.7), (0.3, 0.8)])
    assert select_node(s, PromisingPair(1, 2)) == 2
    t, s = depth_one([(0.25, 0.75), (0.5, 1.0)])
    assert select_node(s, PromisingPair(1, 2)) == 1
    t, s = depth_one([(0.6, 0.9), (0.2, 0.5)])
    assert stopping_rule(s, PromisingPair(1, 2), 0.0)
    t, s = depth_one([(0.6, 0.9), (0.2, 0.6)])
    assert not stopping_rule(s, PromisingPair(1, 2), 0.0)
    t, s = depth_one([(0.5, 0.9), (0.2, 0.55)])
    assert stopping_rule(s, PromisingPair(1, 2), 0.1)


def test_select_and_sample_accounting(fig2):
    s = SearchState(fig2)
    rate = ExplorationRate("experiments", 9, 0.9)
    o = LeafOracle(fig2)
    pair = ugape_promising(s)
    lf = select_and_sample(s, pair, o, rate, "kl")
    assert s.t == 1 and s.pulls[fig2.leaf_index(lf)] == 1
    assert fig2.depth_one_ancestor(lf) == select_node(SearchState(fig2), pair)


# whole runs ---------------------------------------------------------------------

def python_bai_mcts(tree, oracle, config):
    """The BAI-MCTS loop written with the op-level functions only."""
    rate = config.rate(tree.n_leaves)
    s = SearchState(tree)
    pick = ugape_promising if config.algorithm == Algorithm.UGAPE_MCTS else lucb_promising
    while True:
        pair = pick(s)
        if stopping_rule(s, pair, config.epsilon):
            return pair.b, s.t, s.pulls.copy()
        select_and_sample(s, pair, oracle, rate, config.ci)


@pytest.mark.parametrize("algo", ["ugape", "lucb"])
@pytest.mark.parametrize("ci", ["kl", "hoeffding"])
def test_compiled_loop_matches_python_loop(fig2, algo, ci):
    cfg = AlgorithmConfig(algo, 0.0, 0.9, "experiments", ci)
    for rep in range(3):
        rec, tau, pulls = python_bai_mcts(fig2, LeafOracle(fig2, 3, rep), cfg)
        r = run_bai_mcts(fig2, LeafOracle(fig2, 3, rep), cfg)
        assert (r.recommendation, r.tau) == (rec, tau)
        assert np.array_equal(r.pulls, pulls)


@pytest.mark.parametrize("algo", BAI + ["mlucb"])
def test_degenerate_depth_one(algo):
    t = GameTree.from_spec(max_node(leaf(1.0), leaf(0.0)))
    r = run(t, LeafOracle(t), AlgorithmConfig(algo, 0.0, 0.1))
    assert r.recommendation == 1 and r.correct and r.stopped_by == STOPPING_RULE
    assert 0 < r.tau < 100
    assert r.tau == r.pulls.sum()


def test_ftw_degenerate_depth_one():
    t = GameTree.from_spec(max_node(leaf(1.0), leaf(0.0)))
    r = run_find_top_winner(t, LeafOracle(t), AlgorithmConfig("ftw", 0.01, 0.1))
    assert r.recommendation == 1 and r.correct
    # the gap 1.0 equals 2 eps_1, so pruning is strict and waits for round 2
    rounds = r.diagnostics["rounds"]
    assert [x["alive_leaves"] for x in rounds] == [2, 1]
    assert r.tau == 2 * ftw_round_size(2, 2, 0.1)


def test_ftw_needs_positive_epsilon(fig2):
    with pytest.raises(EpsilonZeroUnsupported):
        run_find_top_winner(fig2, LeafOracle(fig2), AlgorithmConfig("ftw", 0.0, 0.9))
    r = run(fig2, LeafOracle(fig2), AlgorithmConfig("ftw", 0.0, 0.9))
    assert r.stopped_by == STOPPING_RULE


def test_ftw_round_accounting(fig2):
    r = run_find_top_winner(fig2, LeafOracle(fig2, 1), AlgorithmConfig("ftw", 0.05, 0.9))
    rounds = r.diagnostics["rounds"]
    assert [x["n_r"] for x in rounds] == [ftw_round_size(k, 9, 0.9) for k in range(1, len(rounds) + 1)]
    # every leaf holds some n_r exactly: the round at which it was last alive
    assert set(r.pulls) <= {x["n_r"] for x in rounds}
    assert r.tau == r.pulls.sum()
    # stop rule: single surviving action or precision reached eps / 2
    assert rounds[-1]["alive_leaves"] <= 3 or rounds[-1]["precision"] <= 0.025
    assert all(x["precision"] > 0.025 for x in rounds[:-1])


def test_ftw_round_size_formula():
    import math
    assert ftw_round_size(1, 9, 0.9) == math.ceil(2 * math.log(2 * 9 * 2 / 0.9))
    assert ftw_round_size(3, 4, 0.1) == math.ceil(32 * math.log(2 * 4 * 8 / 0.1))


def test_m_lucb_deterministic_leaves():
    t = GameTree.from_matrix([[1.0, 1.0], [0.0, 1.0], [1.0, 0.0]])
    r = run_m_lucb(t, LeafOracle(t), AlgorithmConfig("mlucb", 0.0, 0.1))
    assert r.correct and r.recommendation == 1 and r.stopped_by == STOPPING_RULE


def test_m_lucb_on_depth_one_is_lucb_like():
    t = GameTree.from_spec(max_node(leaf(0.7), leaf(0.3), leaf(0.5)))
    r = run_m_lucb(t, LeafOracle(t, 2), AlgorithmConfig("mlucb", 0.0, 0.1))
    assert r.correct and r.tau % 2 == 0


@pytest.mark.parametrize("algo", BAI)
def test_trace_mode_same_outcome(fig2, algo):
    for rep in range(4):
        fast = run_bai_mcts(fig2, LeafOracle(fig2, 0, rep), AlgorithmConfig(algo, 0, 0.9))
        slow = run_bai_mcts(fig2, LeafOracle(fig2, 0, rep), AlgorithmConfig(algo, 0, 0.9, trace=True))
        assert fast.same_outcome(slow)
        assert len(slow.trace) == (slow.tau // 2 if algo == "lucb2" else slow.tau)
        d = slow.diagnostics
        assert sum(v for k, v in d.items() if k.endswith("_violations")) == 0
        assert d["nested_checks"] == 3 * len(slow.trace)


def test_two_leaf_stops_at_even_times(fig2):
    for rep in range(10):
        r = run(fig2, LeafOracle(fig2, 5, rep), AlgorithmConfig("lucb2", 0, 0.9))
        assert r.tau % 2 == 0
    r = run(fig2, LeafOracle(fig2), AlgorithmConfig("lucb2", 0, 0.9, budget_cap=51))
    assert r.stopped_by == BUDGET_CAP and r.tau == 52


@pytest.mark.parametrize("algo", BAI + ["mlucb", "ftw"])
def test_budget_cap(fig2, algo):
    r = run(fig2, LeafOracle(fig2), AlgorithmConfig(algo, 0, 0.9, budget_cap=40))
    assert r.stopped_by == BUDGET_CAP
    assert r.recommendation in fig2.root_children
    if algo == "ftw":
        assert r.tau == 0  # the first round alone exceeds the cap
    else:
        assert 40 <= r.tau <= 41


@pytest.mark.parametrize("algo", BAI + ["mlucb", "ftw"])
def test_determinism(fig2, algo):
    a = run(fig2, LeafOracle(fig2, 8, 1), AlgorithmConfig(algo, 0, 0.9))
    b = run(fig2, LeafOracle(fig2, 8, 1), AlgorithmConfig(algo, 0, 0.9))
    assert a.same_outcome(b)


def test_nesting_audit_and_ci_flag():
    for rep in range(5):
        t = generate_random_tree(3, 3, 4, rep)
        r = run_bai_mcts(t, LeafOracle(t, 4, rep), AlgorithmConfig("ugape", 0, 2.7),
                         audit_nesting=True)
        assert r.diagnostics["nested_audit_violations"] == 0
        assert r.diagnostics["nested_audit_checks"] == 3 * r.tau


def test_random_trees_are_solved():
    for rep in range(10):
        t = generate_random_tree(3, 2, 6, rep)
        an = evaluate_tree(t)
        for algo in BAI:
            r = run(t, LeafOracle(t, 6, rep), AlgorithmConfig(algo, 0.01, 0.1), an)
            assert r.correct and r.stopped_by == STOPPING_RULE


def test_first_ci_failure_recorded():
    # a tiny delta-free rate (huge delta) makes intervals too narrow to stay valid
    t = GameTree.from_matrix([[0.5, 0.55], [0.45, 0.6]])
    fails = 0
    for rep in range(20):
        r = run(t, LeafOracle(t, 0, rep), AlgorithmConfig("ugape", 0, 0.4, ci="hoeffding"))
        fails += not r.ci_valid
        assert r.first_ci_failure == -1 or 1 <= r.first_ci_failure <= r.tau
    assert fails > 0
