"""Repeated-trial experiments, aggregation and report files.

A run is identified by (algorithm, repetition).  Repetition ``r`` always uses
the oracle streams of ``(seed, r)`` and, for generated trees, the tree drawn
from the tree stream of ``(seed, r)``, so every algorithm sees the same tree
and the same leaf samples at a given repetition.  Work is split into chunks
whose boundaries do not depend on the number of workers, and results are
collected in work-list order; reports are therefore identical at any worker
count.  Wall-clock time is left out of reports unless asked for, since it is
the one quantity that is not reproducible.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from statistics import NormalDist

import numpy as np

from .algorithms import Algorithm, AlgorithmConfig, DEFAULT_BUDGET_CAP, BUDGET_CAP, run
from .errors import AmbiguousBestAction, MctsBaiError
from .oracle import LeafOracle, tree_stream
from .tree import LEAF, MAX, MIN, GameTree, evaluate_tree, load_tree

CHUNK = 25
Z95 = NormalDist().inv_cdf(0.975)
SUMMARY_STATS = ("tau_mean", "tau_std", "tau_min", "tau_max", "error_rate", "cap_hits")
ALGORITHM_LABELS = {
    Algorithm.UGAPE_MCTS: "UGapE-MCTS",
    Algorithm.LUCB_MCTS: "LUCB-MCTS (one leaf)",
    Algorithm.LUCB_MCTS_TWOLEAF: "LUCB-MCTS",
    Algorithm.FIND_TOP_WINNER: "FindTopWinner",
    Algorithm.M_LUCB: "M-LUCB",
}


class InputError(MctsBaiError, ValueError):
    """An experiment specification cannot be executed as given."""


# trees -------------------------------------------------------------------------

@lru_cache(maxsize=8)
def _full_tree_shape(b: int, depth: int) -> tuple[tuple[int, ...], tuple[tuple[int, ...], ...]]:
    kinds: list[int] = []
    children: list[list[int]] = []

    def build(d: int) -> int:
        s = len(kinds)
        kinds.append(LEAF if d == depth else (MAX if d % 2 == 0 else MIN))
        children.append([])
        if d < depth:
            children[s] = [build(d + 1) for _ in range(b)]
        return s

    build(0)
    return tuple(kinds), tuple(tuple(c) for c in children)


def generate_random_tree(branching: int, depth: int, seed: int, repetition: int = 0) -> GameTree:
    """Full b-ary tree, MAX at even depths, i.i.d. Uniform[0, 1] leaf means."""
    if branching < 2 or depth < 1:
        raise InputError("random trees need branching >= 2 and depth >= 1")
    kinds, children = _full_tree_shape(int(branching), int(depth))
    kind = np.array(kinds)
    means = np.full(len(kinds), np.nan)
    leaves = np.flatnonzero(kind == LEAF)
    means[leaves] = tree_stream(seed, repetition).random(len(leaves))
    return GameTree(kinds, children, means)


def fig2_tree() -> GameTree:
    text = resources.files("mcts_bai.data").joinpath("fig2.json").read_text()
    return GameTree.from_spec(json.loads(text))


def parse_random(text: str) -> tuple[int, int]:
    """Parse ``b=10,depth=3`` into (branching, depth)."""
    try:
        parts = dict(p.split("=", 1) for p in text.split(",") if p.strip())
        parts = {k.strip().lower(): int(v) for k, v in parts.items()}
        b = parts.pop("b", parts.pop("branching", None))
        d = parts.pop("depth", parts.pop("d", None))
    except ValueError:
        raise InputError(f"cannot parse random tree parameters {text!r}") from None
    if b is None or d is None or parts:
        raise InputError(f"expected 'b=<int>,depth=<int>', got {text!r}")
    if b < 2 or d < 1:
        raise InputError("random trees need b >= 2 and depth >= 1")
    return b, d


# specification -----------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentSpec:
    """What to run.  Exactly one tree source: ``tree_path``, ``tree`` or ``random``."""

    algorithms: tuple[str, ...] = ("lucb2", "ugape")
    tree_path: str | None = None
    tree: dict | None = None           # nested specification, as in tree files
    random: tuple[int, int] | None = None  # (branching, depth), one tree per repetition
    epsilon: float = 0.0
    delta: float = 0.1
    beta: str = "experiments"
    ci: str = "kl"
    reps: int = 1000
    seed: int = 0
    workers: int = 1
    budget_cap: int = DEFAULT_BUDGET_CAP
    out: str | None = None
    format: str = "json"
    trace: bool = False
    include_timing: bool = False
    preset: str | None = None

    def __post_init__(self):
        sources = sum(x is not None for x in (self.tree_path, self.tree, self.random))
        if sources != 1:
            raise InputError("give exactly one tree source (file, inline spec or generator)")
        object.__setattr__(self, "algorithms",
                           tuple(Algorithm(a).value for a in self.algorithms))
        if not self.algorithms:
            raise InputError("no algorithms selected")
        if self.reps < 0:
            raise InputError("reps must be nonnegative")
        if self.workers < 1:
            raise InputError("workers must be at least 1")
        if self.format not in ("csv", "json"):
            raise InputError(f"unknown report format {self.format!r}")
        if self.random is not None:
            b, d = self.random
            if b < 2 or d < 1:
                raise InputError("random trees need b >= 2 and depth >= 1")
            object.__setattr__(self, "random", (int(b), int(d)))

    def tree_source(self) -> tuple:
        """Picklable description of the tree, resolved once per chunk in workers."""
        if self.random is not None:
            return ("random", *self.random)
        if self.tree is not None:
            return ("spec", self.tree)
        return ("spec", load_tree(self.tree_path).to_spec())

    def echo(self) -> dict:
        """Everything needed to replay the experiment (worker count excluded)."""
        return {"preset": self.preset, "tree_path": self.tree_path,
                "random": list(self.random) if self.random else None,
                "algorithms": list(self.algorithms), "epsilon": self.epsilon,
                "delta": self.delta, "beta": self.beta, "ci": self.ci, "reps": self.reps,
                "seed": self.seed, "budget_cap": self.budget_cap}


PRESETS = {
    "fig2": dict(algorithms=("lucb2", "ugape", "ftw", "mlucb"), epsilon=0.0, delta=0.9,
                 beta="experiments", ci="kl", reps=1000),
    "fig3": dict(algorithms=("lucb2", "ugape", "ftw"), epsilon=0.0, delta=2.7,
                 beta="experiments", ci="kl", reps=1000),
    "ensemble": dict(algorithms=("lucb2", "ugape", "ftw"), random=(10, 3), epsilon=0.01,
                     delta=0.1, beta="theoretical", ci="kl", reps=100),
}


def preset_spec(name: str, **overrides) -> ExperimentSpec:
    """The named experiment, with ``overrides`` (None values ignored) applied.

    fig3 has no shipped tree: its leaf means must come from ``tree_path`` or ``tree``.
    """
    if name not in PRESETS:
        raise InputError(f"unknown preset {name!r}")
    kw = dict(PRESETS[name])
    sources = ("tree_path", "tree", "random")
    if any(overrides.get(k) is not None for k in sources):
        for k in sources:
            kw.pop(k, None)
    kw.update({k: v for k, v in overrides.items() if v is not None})
    if not any(kw.get(k) is not None for k in sources):
        if name == "fig3":
            raise InputError("the fig3 preset needs a depth-3 tree file (--tree)")
        kw["tree"] = fig2_tree().to_spec()
    return ExperimentSpec(preset=name, **kw)


# execution ---------------------------------------------------------------------

@dataclass
class RunRecord:
    rep: int
    tau: int | None = None
    correct: bool | None = None
    capped: bool = False
    pulls: np.ndarray | None = None
    seconds: float = 0.0
    error: str | None = None


@lru_cache(maxsize=4)
def _spec_tree(text: str) -> GameTree:
    return GameTree.from_spec(json.loads(text))


def _run_chunk(args) -> list[RunRecord]:
    source, cfg_kw, algo, reps, seed = args
    fixed = None if source[0] == "random" else _spec_tree(json.dumps(source[1], sort_keys=True))
    out = []
    for rep in reps:
        rec = RunRecord(rep)
        t0 = time.perf_counter()
        try:
            tree = fixed or generate_random_tree(source[1], source[2], seed, rep)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", AmbiguousBestAction)
                analysis = evaluate_tree(tree)
            cfg = AlgorithmConfig(algorithm=algo, seed=seed, **cfg_kw)
            with warnings.catch_warnings():
                # delta >= 1 is the documented way to undo the union bound
                warnings.simplefilter("ignore", UserWarning)
                res = run(tree, LeafOracle(tree, seed, rep), cfg, analysis)
            rec.tau, rec.correct = res.tau, res.correct
            rec.capped = res.stopped_by == BUDGET_CAP
            rec.pulls = res.pulls
        except Exception as e:  # recorded per run, the batch goes on
            rec.error = f"{type(e).__name__}: {e}"
        rec.seconds = time.perf_counter() - t0
        out.append(rec)
    return out


def _work_list(spec: ExperimentSpec) -> list[tuple]:
    source = spec.tree_source()
    cfg_kw = dict(epsilon=spec.epsilon, delta=spec.delta, beta=spec.beta, ci=spec.ci,
                  budget_cap=spec.budget_cap, trace=spec.trace)
    work = []
    for algo in spec.algorithms:
        for start in range(0, spec.reps, CHUNK):
            work.append((source, cfg_kw, algo, range(start, min(start + CHUNK, spec.reps)),
                         spec.seed))
    return work


def _leaf_count(spec: ExperimentSpec) -> int:
    if spec.random is not None:
        b, d = spec.random
        return b**d
    src = spec.tree_source()
    return _spec_tree(json.dumps(src[1], sort_keys=True)).n_leaves


def run_experiment(spec: ExperimentSpec) -> "AggregateReport":
    # validate every configuration up front so bad input fails fast
    for algo in spec.algorithms:
        try:
            AlgorithmConfig(algo, spec.epsilon, spec.delta, spec.beta, spec.ci, spec.budget_cap)
        except ValueError as e:
            raise InputError(str(e)) from e
    n_leaves = _leaf_count(spec)
    work = _work_list(spec)
    if spec.workers == 1 or len(work) <= 1:
        chunks = [_run_chunk(w) for w in work]
    else:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            chunks = list(pool.map(_run_chunk, work))
    records: dict[str, list[RunRecord]] = {a: [] for a in spec.algorithms}
    for w, recs in zip(work, chunks):
        records[w[2]].extend(recs)
    summaries = {a: summarize(a, records[a], n_leaves, spec.include_timing)
                 for a in spec.algorithms}
    runs = [{"algorithm": a, "rep": r.rep, "tau": r.tau, "correct": r.correct,
             "capped": r.capped, "error": r.error}
            for a in spec.algorithms for r in records[a]]
    return AggregateReport(config=spec.echo(), n_leaves=n_leaves, algorithms=summaries,
                           runs=runs)


# aggregation -------------------------------------------------------------------

def wilson_interval(errors: int, n: int, z: float = Z95) -> tuple[float, float] | None:
    if n == 0:
        return None
    p = errors / n
    den = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return max(0.0, centre - half), min(1.0, centre + half)


@dataclass
class AlgorithmSummary:
    algorithm: str
    label: str
    runs: int
    completed: int
    tau_mean: float | None
    tau_std: float | None      # sample standard deviation (ddof = 1)
    tau_min: int | None
    tau_max: int | None
    errors: int
    error_rate: float | None
    error_ci: list[float] | None  # 95% Wilson score interval
    cap_hits: int
    leaf_mean_pulls: list[float | None]
    failures: list[dict] = field(default_factory=list)
    wall_clock: float | None = None


def summarize(algo: str, records: list[RunRecord], n_leaves: int,
              include_timing: bool = False) -> AlgorithmSummary:
    ok = [r for r in records if r.error is None]
    n = len(ok)
    taus = np.array([r.tau for r in ok], dtype=np.float64)
    errors = sum(not r.correct for r in ok)
    if n:
        pulls = np.sum([r.pulls for r in ok], axis=0) / n
        leaf = [float(x) for x in pulls]
    else:
        leaf = [None] * n_leaves
    ci = wilson_interval(errors, n)
    return AlgorithmSummary(
        algorithm=algo, label=ALGORITHM_LABELS[Algorithm(algo)], runs=len(records),
        completed=n,
        tau_mean=float(taus.mean()) if n else None,
        tau_std=float(taus.std(ddof=1)) if n > 1 else None,
        tau_min=int(taus.min()) if n else None,
        tau_max=int(taus.max()) if n else None,
        errors=int(errors), error_rate=errors / n if n else None,
        error_ci=list(ci) if ci else None,
        cap_hits=sum(r.capped for r in ok), leaf_mean_pulls=leaf,
        failures=[{"rep": r.rep, "error": r.error} for r in records if r.error is not None],
        wall_clock=float(sum(r.seconds for r in records)) if include_timing else None,
    )


@dataclass
class AggregateReport:
    config: dict
    n_leaves: int
    algorithms: dict[str, AlgorithmSummary]
    # one row per (algorithm, repetition); written by emit_runs, not part of the report file
    runs: list[dict] = field(default_factory=list, compare=False, repr=False)

    def to_dict(self) -> dict:
        return {"config": self.config, "n_leaves": self.n_leaves,
                "algorithms": {k: asdict(v) for k, v in self.algorithms.items()}}

    @classmethod
    def from_dict(cls, d: dict) -> "AggregateReport":
        return cls(config=d["config"], n_leaves=d["n_leaves"],
                   algorithms={k: AlgorithmSummary(**v) for k, v in d["algorithms"].items()})

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        cfg = self.config
        cfg_cols = ["seed", "reps", "epsilon", "delta", "beta", "ci", "preset"]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["algorithm", "statistic", "leaf", "value", "ci_low", "ci_high", *cfg_cols])
        tail = [cfg.get(k) for k in cfg_cols]
        tail = ["" if v is None else v for v in tail]

        def cell(v):
            return "" if v is None else repr(v) if isinstance(v, float) else v

        for name, s in self.algorithms.items():
            for stat in SUMMARY_STATS:
                lo = hi = ""
                if stat == "error_rate" and s.error_ci:
                    lo, hi = cell(s.error_ci[0]), cell(s.error_ci[1])
                w.writerow([name, stat, "", cell(getattr(s, stat)), lo, hi, *tail])
            for i, v in enumerate(s.leaf_mean_pulls):
                w.writerow([name, "leaf_mean_pulls", i, cell(v), "", "", *tail])
        return buf.getvalue()


def emit_report(report: AggregateReport, fmt: str = "json", path=None) -> str:
    """Serialise ``report``; write it to ``path`` when given.  Returns the text."""
    if fmt == "json":
        text = report.to_json()
    elif fmt == "csv":
        text = report.to_csv()
    else:
        raise InputError(f"unknown report format {fmt!r}")
    if path is not None:
        try:
            Path(path).write_text(text)
        except OSError as e:
            raise OSError(f"cannot write report to {path}: {e.strerror or e}") from e
    return text


def load_report(path) -> AggregateReport:
    return AggregateReport.from_dict(json.loads(Path(path).read_text()))


def emit_runs(report: AggregateReport, path) -> None:
    """Per-run CSV: algorithm, repetition, tau, correctness, cap hit, failure."""
    buf = io.StringIO()
    w = csv.DictWriter(buf, ["algorithm", "rep", "tau", "correct", "capped", "error"],
                       lineterminator="\n")
    w.writeheader()
    w.writerows(report.runs)
    try:
        Path(path).write_text(buf.getvalue())
    except OSError as e:
        raise OSError(f"cannot write run table to {path}: {e.strerror or e}") from e
