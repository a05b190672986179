"""Command-line entry point: ``mcts-bai run`` and ``mcts-bai bounds``.

Exit codes: 0 success, 1 usage error, 2 input error (bad tree file, invalid
parameters, unwritable output), 3 internal error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import traceback
import warnings

from .algorithms import Algorithm
from .bounds import solve_depth2_lower_bound, theorem1_bound, theorem3_bound, depth2_matrix
from .errors import InfiniteComplexity, MctsBaiError, NotDepthTwo
from .harness import ExperimentSpec, InputError, emit_report, emit_runs, parse_random, preset_spec, run_experiment
from .tree import complexity_term, evaluate_tree, load_tree

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _seed(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _algos(text: str) -> tuple[str, ...]:
    names = tuple(a.strip() for a in text.split(",") if a.strip())
    valid = {a.value for a in Algorithm}
    bad = [a for a in names if a not in valid]
    if bad or not names:
        raise argparse.ArgumentTypeError(
            f"unknown algorithm(s) {', '.join(bad) or text!r}; choose from {sorted(valid)}")
    return names


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mcts-bai", description="Best-action identification in minimax trees.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="repeated trials of one or more algorithms")
    src = r.add_mutually_exclusive_group()
    src.add_argument("--tree", help="tree specification (JSON)")
    src.add_argument("--random", help="random full tree, e.g. b=10,depth=3")
    r.add_argument("--preset", choices=("fig2", "fig3", "ensemble"))
    r.add_argument("--algo", type=_algos, help="comma-separated: ugape,lucb,lucb2,ftw,mlucb")
    r.add_argument("--epsilon", type=float)
    r.add_argument("--delta", type=float)
    r.add_argument("--beta", choices=("theoretical", "practical", "experiments"))
    r.add_argument("--ci", choices=("hoeffding", "kl"))
    r.add_argument("--reps", type=int)
    r.add_argument("--seed", type=_seed)
    r.add_argument("--workers", type=int, default=1)
    r.add_argument("--budget-cap", type=int)
    r.add_argument("--out", help="report path (stdout when omitted)")
    r.add_argument("--format", choices=("csv", "json"), default="json")
    r.add_argument("--runs-out", help="also write one CSV row per (algorithm, repetition)")
    r.add_argument("--trace", action="store_true", help="instrumented runs (slower)")
    r.add_argument("--timing", action="store_true", help="include wall-clock seconds")

    b = sub.add_parser("bounds", help="complexity terms, upper bounds and depth-two lower bound")
    b.add_argument("--tree", required=True)
    b.add_argument("--delta", type=float, required=True)
    b.add_argument("--epsilon", type=float, default=0.0)
    return p


def _spec_from_args(a) -> ExperimentSpec:
    kw = dict(algorithms=a.algo, tree_path=a.tree,
              random=parse_random(a.random) if a.random else None,
              epsilon=a.epsilon, delta=a.delta, beta=a.beta, ci=a.ci, reps=a.reps,
              seed=a.seed, workers=a.workers, budget_cap=a.budget_cap, out=a.out,
              format=a.format, trace=a.trace or None, include_timing=a.timing or None)
    if a.preset:
        return preset_spec(a.preset, **kw)
    if a.tree is None and a.random is None:
        raise UsageError("mcts-bai run: error: give --tree, --random or --preset")
    return ExperimentSpec(**{k: v for k, v in kw.items() if v is not None})


def cmd_run(a) -> int:
    spec = _spec_from_args(a)
    report = run_experiment(spec)
    text = emit_report(report, spec.format, spec.out)
    if spec.out is None:
        sys.stdout.write(text)
    if a.runs_out:
        emit_runs(report, a.runs_out)
    return EXIT_OK


def _finite(x):
    return x if x is None or math.isfinite(x) else None


def cmd_bounds(a) -> int:
    tree = load_tree(a.tree)
    with warnings.catch_warnings(record=True):
        warnings.simplefilter("always")
        analysis = evaluate_tree(tree)
    out = {"leaves": tree.n_leaves, "delta": a.delta, "epsilon": a.epsilon,
           "root_value": analysis.root_value, "best_action": analysis.best_action,
           "root_gap": analysis.root_gap}
    for key, fn in (("H_star", lambda: complexity_term(analysis, a.epsilon)),
                    ("H_tilde_star", lambda: complexity_term(analysis, a.epsilon, "tilde")),
                    ("theorem1_bound", lambda: theorem1_bound(analysis, a.epsilon, a.delta)),
                    ("theorem3_bound", lambda: theorem3_bound(analysis, a.epsilon, a.delta))):
        try:
            out[key] = fn()
        except (InfiniteComplexity, MctsBaiError) as e:
            out[key] = None
            out.setdefault("notes", []).append(f"{key}: {e}")
    try:
        mu = depth2_matrix(tree)
    except NotDepthTwo:
        mu = None
    if mu is not None:
        if 0 < a.delta < 1:
            sol = solve_depth2_lower_bound(mu, a.delta)
            out.update(t_star=sol.t_star, weights=sol.weights.tolist(),
                       lower_bound=sol.lower_bound_at_delta)
        else:
            out.setdefault("notes", []).append("lower bound needs delta in (0, 1)")
    out = {k: _finite(v) if isinstance(v, float) else v for k, v in out.items()}
    print(json.dumps(out, indent=2))
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return cmd_run(args) if args.command == "run" else cmd_bounds(args)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(e, file=sys.stderr)
        return EXIT_USAGE
    except (MctsBaiError, ValueError, OSError) as e:
        print(f"mcts-bai: {e}", file=sys.stderr)
        return EXIT_INPUT
    except Exception:
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
