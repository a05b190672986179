import warnings

import numpy as np
import pytest
from hypothesis import strategies as st

from mcts_bai import GameTree

FIG2_MEANS = [[0.45, 0.50, 0.55], [0.35, 0.40, 0.60], [0.30, 0.47, 0.52]]


@pytest.fixture
def fig2():
    return GameTree.from_matrix(FIG2_MEANS)


@pytest.fixture(autouse=True)
def _quiet_delta_warning():
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="delta=.* >= 1")
        yield


def brute_value(spec):
    """Recursive minimax on a nested specification (independent of GameTree)."""
    if "mean" in spec:
        return spec["mean"]
    vals = [brute_value(c) for c in spec["children"]]
    return max(vals) if spec["kind"] == "max" else min(vals)


def brute_leaf_paths(spec, path=()):
    """Yield (mean, [specs from root to leaf]) in depth-first order."""
    path = path + (spec,)
    if "mean" in spec:
        yield spec["mean"], list(path)
        return
    for c in spec["children"]:
        yield from brute_leaf_paths(c, path)


def random_spec(rng, depth, max_branch=3, kind="max"):
    """Random tree spec with at most max_branch**depth leaves, arbitrary node kinds below the root."""
    if depth == 0:
        return {"mean": float(rng.random())}
    k = int(rng.integers(1, max_branch + 1))
    children = []
    for _ in range(k):
        if depth > 1 and rng.random() < 0.2:
            children.append({"mean": float(rng.random())})
        else:
            children.append(random_spec(rng, depth - 1, max_branch,
                                        "max" if rng.random() < 0.5 else "min"))
    return {"kind": kind, "children": children}


means = st.floats(0.0, 1.0, allow_nan=False)


@st.composite
def tree_specs(draw, max_depth=3, max_branch=3):
    def node(depth, kind):
        if depth == 0 or (kind != "max-root" and draw(st.booleans()) and depth < max_depth):
            if kind != "max-root":
                return {"mean": draw(means)}
        n = draw(st.integers(1, max_branch))
        return {"kind": "max" if kind == "max-root" else draw(st.sampled_from(["max", "min"])),
                "children": [node(depth - 1, "any") for _ in range(n)]}

    return node(draw(st.integers(1, max_depth)), "max-root")
