import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings

from mcts_bai import GameTree, complexity_term, evaluate_tree, leaf, load_tree, max_node, min_node
from mcts_bai.errors import AmbiguousBestAction, InfiniteComplexity, TreeSpecError
from mcts_bai.tree import effective_gaps, save_tree

from conftest import brute_leaf_paths, brute_value, random_spec, tree_specs


def analyse(spec):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AmbiguousBestAction)
        return evaluate_tree(GameTree.from_spec(spec))


def test_depth_one_max():
    t = GameTree.from_spec(max_node(leaf(0.2), leaf(0.7), leaf(0.4)))
    a = evaluate_tree(t)
    assert a.root_value == pytest.approx(0.7)
    assert a.best_action == t.root_children[1]
    assert a.root_gap == pytest.approx(0.3)


def test_depth_two_example():
    t = GameTree.from_spec(max_node(min_node(leaf(0.45), leaf(0.50)),
                                    min_node(leaf(0.55), leaf(0.35))))
    a = evaluate_tree(t)
    assert a.values[list(t.root_children)] == pytest.approx([0.45, 0.35])
    assert a.root_value == pytest.approx(0.45)
    assert a.root_gap == pytest.approx(0.10)


def test_constant_tree_is_ambiguous():
    t = GameTree.from_spec(max_node(min_node(leaf(0.3), leaf(0.3)), min_node(leaf(0.3))))
    with pytest.warns(AmbiguousBestAction):
        a = evaluate_tree(t)
    assert a.ambiguous and a.root_gap == 0
    assert np.all(a.values == 0.3)
    assert np.all(a.leaf_gaps == 0)
    assert a.best_action == t.root_children[0]
    with pytest.raises(InfiniteComplexity):
        complexity_term(a, 0.0)


def test_two_leaf_complexity():
    a = evaluate_tree(GameTree.from_spec(max_node(leaf(0.5), leaf(0.4))))
    assert a.leaf_gaps == pytest.approx([0.0, 0.1])
    assert complexity_term(a, 0.0) == pytest.approx(200.0)


def test_epsilon_one_gives_leaf_count(fig2):
    a = evaluate_tree(fig2)
    assert complexity_term(a, 1.0) == pytest.approx(9.0)
    assert complexity_term(a, 1.0, "tilde") == pytest.approx(9.0)


def test_fig2_gaps(fig2):
    a = evaluate_tree(fig2)
    # row minima 0.45, 0.35, 0.30; root 0.45
    assert a.leaf_gaps == pytest.approx([0.0, 0.05, 0.10, 0.10, 0.10, 0.25, 0.15, 0.17, 0.22])
    assert a.leaf_gaps_tilde == pytest.approx([0.0, 0.05, 0.10, 0.0, 0.05, 0.25, 0.0, 0.17, 0.22])


def test_preorder_numbering(fig2):
    assert fig2.n_nodes == 13
    assert list(fig2.root_children) == [1, 5, 9]
    assert list(fig2.leaves) == [2, 3, 4, 6, 7, 8, 10, 11, 12]
    assert all(fig2.parent(s) < s for s in range(1, fig2.n_nodes))
    assert fig2.depth_one_ancestor(8) == 5
    assert fig2.path_to_root(12) == [12, 9, 0]


@pytest.mark.parametrize("bad", [
    {"kind": "min", "children": [{"mean": 0.1}]},
    {"kind": "max", "children": []},
    {"kind": "max", "children": [{"mean": 1.5}]},
    {"kind": "max", "children": [{"mean": -0.1}]},
    {"kind": "max", "children": [{"mean": "x"}]},
    {"kind": "max", "children": [{"kind": "avg", "children": [{"mean": 0.1}]}]},
    {"kind": "max", "children": [{"mean": 0.2, "children": []}]},
    [1, 2],
])
def test_rejects_malformed(bad):
    with pytest.raises(TreeSpecError):
        GameTree.from_spec(bad)


def test_file_roundtrip(tmp_path, fig2):
    p = tmp_path / "t.json"
    save_tree(fig2, p)
    assert load_tree(p) == fig2
    p.write_text("{not json")
    with pytest.raises(TreeSpecError, match="t.json"):
        load_tree(p)


@settings(max_examples=200, deadline=None)
@given(tree_specs())
def test_matches_brute_force_minimax(spec):
    t = GameTree.from_spec(spec)
    a = analyse(spec)
    assert a.root_value == brute_value(spec)
    assert GameTree.from_spec(t.to_spec()) == t
    # leaf gaps from the definition: max over non-root ancestors (and the leaf) of |V_s - V_parent|
    pairs = list(brute_leaf_paths(spec))
    assert len(pairs) == t.n_leaves
    for i, (mu, path) in enumerate(pairs):
        assert t.leaf_means[i] == mu
        vals = [brute_value(n) for n in path]
        steps = [abs(vals[k] - vals[k - 1]) for k in range(1, len(vals))]
        assert a.leaf_gaps[i] == max(steps)
        assert a.leaf_gaps_tilde[i] == max(steps[1:], default=0.0)
        assert a.leaf_gaps_tilde[i] <= a.leaf_gaps[i]


@settings(max_examples=100, deadline=None)
@given(tree_specs())
def test_node_values_are_attained(spec):
    t = GameTree.from_spec(spec)
    v = analyse(spec).values
    for s in range(t.n_nodes):
        if t.is_leaf(s):
            assert v[s] == t.mean(s)
            continue
        ch = v[list(t.children(s))]
        assert v[s] == (ch.max() if t.kind(s) == 1 else ch.min())


def test_tilde_terms_dominate():
    rng = np.random.default_rng(3)
    for _ in range(50):
        a = analyse(random_spec(rng, 3))
        if a.root_gap == 0:
            continue
        std = 1 / effective_gaps(a, 0.0) ** 2
        til = 1 / effective_gaps(a, 0.0, "tilde") ** 2
        assert np.all(til >= std)
        assert complexity_term(a, 0, "tilde") >= complexity_term(a, 0)


def test_child_reordering_invariance():
    rng = np.random.default_rng(5)
    for _ in range(30):
        spec = random_spec(rng, 3)
        shuffled = json.loads(json.dumps(spec))

        def shuffle(n):
            if "children" in n:
                rng.shuffle(n["children"])
                for c in n["children"]:
                    shuffle(c)
        shuffle(shuffled)
        a, b = analyse(spec), analyse(shuffled)
        assert a.root_value == b.root_value
        assert a.root_gap == pytest.approx(b.root_gap, abs=1e-15)
        assert sorted(a.leaf_gaps) == pytest.approx(sorted(b.leaf_gaps))
