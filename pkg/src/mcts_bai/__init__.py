"""Fixed-confidence best-action identification in stochastic minimax trees."""

from .algorithms import (Algorithm, AlgorithmConfig, InvariantMonitor, RunResult, run,
                         run_bai_mcts, run_find_top_winner, run_m_lucb)
from .bounds import (LowerBoundSolution, invert_loglog, kl_div, solve_depth2_lower_bound,
                     theorem1_bound, theorem3_bound)
from .confidence import ExplorationRate, SearchState
from .harness import (AggregateReport, ExperimentSpec, emit_report, generate_random_tree,
                      preset_spec, run_experiment)
from .oracle import LeafOracle, derive_stream
from .tree import (GameTree, TreeAnalysis, complexity_term, evaluate_tree, leaf, load_tree,
                   max_node, min_node)

__version__ = "0.1.0"

__all__ = [
    "Algorithm", "AlgorithmConfig", "InvariantMonitor", "RunResult", "run", "run_bai_mcts",
    "run_find_top_winner", "run_m_lucb", "LowerBoundSolution", "invert_loglog", "kl_div",
    "solve_depth2_lower_bound", "theorem1_bound", "theorem3_bound", "ExplorationRate",
    "SearchState", "AggregateReport", "ExperimentSpec", "emit_report", "generate_random_tree",
    "preset_spec", "run_experiment", "LeafOracle", "derive_stream", "GameTree", "TreeAnalysis",
    "complexity_term", "evaluate_tree", "leaf", "load_tree", "max_node", "min_node",
]
