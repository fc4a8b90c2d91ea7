"""Experiment orchestration: sweeps over graphs, seeds, and algorithms.

A sweep runs every (connectivity, seed, algorithm) cell of a config,
aggregates rounds-to-converge and communication cost over the converged
runs of each cell group, and emits machine-readable reports.  Outputs are
deterministic for a fixed config except for wall-clock timing fields.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .dqn import RunConfig, RunTrace, diging_atc_run, dqn_run
from .ecdqn import EcRunConfig, ecdqn_run
from .problems import (
    SeparableProblem,
    basis_pursuit_family,
    logreg_family,
    qp_family,
    solve_reference,
)
from .topology import CommGraph, load_graph, random_connected_graph

__all__ = [
    "rse",
    "ExperimentConfig",
    "SummaryRow",
    "SummaryTable",
    "run_algo",
    "tune_step_size",
    "run_experiment",
    "emit_report",
    "validate_run",
]

DQN_ALGOS = ("dqn-bfgs", "dqn-dfp")
EC_ALGOS = ("ecdqn-bfgs", "ecdqn-dfp")
ALL_ALGOS = DQN_ALGOS + ("diging-atc",) + EC_ALGOS


def rse(x: np.ndarray, x_star: np.ndarray) -> float:
    """Relative error of an iterate against the reference solution.

    Falls back to the absolute error when the reference is the origin.
    """
    x = np.asarray(x, dtype=float)
    x_star = np.asarray(x_star, dtype=float)
    denom = np.linalg.norm(x_star)
    err = float(np.linalg.norm(x - x_star))
    return err if denom == 0.0 else err / denom


@dataclass(frozen=True)
class ExperimentConfig:
    """Declarative description of one sweep."""

    family: str
    algos: tuple[str, ...]
    n_agents: int = 10
    dim: int = 10
    cond_range: tuple[float, float] | None = None
    xi: float | None = None
    constrained: bool = False
    kappas: tuple[float, ...] = (0.3, 0.6)
    seeds: tuple[int, ...] = tuple(range(20))
    alpha: float | str = "golden"
    max_iters: int = 1000
    rse_tol: float = 1e-10
    epsilon: float = 0.01
    fusion: bool = True
    golden_bracket: tuple[float, float] = (1e-4, 2.0)
    golden_probes: int = 12

    def __post_init__(self) -> None:
        if self.family not in ("qp", "logreg", "basis-pursuit"):
            raise ValueError(f"unknown family {self.family!r}")
        for algo in self.algos:
            if algo not in ALL_ALGOS:
                raise ValueError(f"unknown algorithm {algo!r}")
        object.__setattr__(self, "algos", tuple(self.algos))
        object.__setattr__(self, "kappas", tuple(float(k) for k in self.kappas))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if self.cond_range is not None:
            object.__setattr__(self, "cond_range", tuple(float(c) for c in self.cond_range))
        if self.golden_bracket is not None:
            object.__setattr__(
                self, "golden_bracket", tuple(float(a) for a in self.golden_bracket)
            )

    def to_dict(self) -> dict:
        out = asdict(self)
        for key in ("algos", "kappas", "seeds", "cond_range", "golden_bracket"):
            if out[key] is not None:
                out[key] = list(out[key])
        return out

    @classmethod
    def from_dict(cls, payload: dict) -> "ExperimentConfig":
        kwargs = dict(payload)
        for key in ("algos", "kappas", "seeds", "cond_range", "golden_bracket"):
            if kwargs.get(key) is not None:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)


@dataclass(frozen=True)
class SummaryRow:
    """Aggregate over the seeds of one (algorithm, connectivity) cell.

    Round and byte statistics cover converged runs only; failed runs
    count against the success rate but do not pollute the averages.
    """

    algo: str
    kappa: float
    runs: int
    converged: int
    aborted: int
    success_rate: float
    rounds_mean: float | None
    rounds_std: float | None
    bytes_mean: float | None
    bytes_max: float | None
    wall_ms_mean: float | None


@dataclass
class SummaryTable:
    rows: list[SummaryRow] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"rows": [asdict(r) for r in self.rows]}

    @classmethod
    def from_dict(cls, payload: dict) -> "SummaryTable":
        return cls(rows=[SummaryRow(**r) for r in payload["rows"]])

    def total_aborted(self) -> int:
        return sum(r.aborted for r in self.rows)


def make_problem(config: ExperimentConfig, seed: int) -> SeparableProblem:
    if config.family == "qp":
        if config.cond_range is None:
            raise ValueError("qp family needs cond_range")
        return qp_family(config.n_agents, config.dim, config.cond_range, seed)
    if config.family == "logreg":
        xi = 1e-2 if config.xi is None else config.xi
        return logreg_family(
            config.n_agents, config.dim, xi, seed, constraint=True if config.constrained else None
        )
    xi = 1e-2 if config.xi is None else config.xi
    return basis_pursuit_family(
        config.n_agents, config.dim, xi, seed, constraint=True, cond_range=config.cond_range
    )


def run_algo(
    algo: str,
    problem: SeparableProblem,
    graph: CommGraph,
    alpha: float | str,
    max_iters: int = 1000,
    rse_tol: float = 1e-10,
    epsilon: float = 0.01,
    seed: int = 0,
    fusion: bool = True,
    parallel: bool = False,
    x0: np.ndarray | None = None,
) -> RunTrace:
    """Dispatch one run by algorithm name."""
    if algo in DQN_ALGOS:
        cfg = RunConfig(
            scheme=algo.split("-")[1],
            alpha=alpha,
            max_iters=max_iters,
            rse_tol=rse_tol,
            epsilon=epsilon,
            seed=seed,
            parallel=parallel,
        )
        return dqn_run(problem, graph, cfg, x0)
    if algo == "diging-atc":
        cfg = RunConfig(
            alpha=alpha,
            max_iters=max_iters,
            rse_tol=rse_tol,
            epsilon=epsilon,
            seed=seed,
            parallel=parallel,
        )
        return diging_atc_run(problem, graph, cfg, x0)
    if algo in EC_ALGOS:
        ec_cfg = EcRunConfig(
            scheme=algo.split("-")[1],
            alpha=alpha,
            fusion=fusion,
            max_iters=max_iters,
            rse_tol=rse_tol,
            epsilon=epsilon,
            seed=seed,
            parallel=parallel,
        )
        return ecdqn_run(problem, graph, ec_cfg, x0)
    raise ValueError(f"unknown algorithm {algo!r}")


def _tuning_score(trace: RunTrace, rse_tol: float, max_iters: int) -> float:
    if trace.converged:
        return float(trace.rounds)
    final = float(np.max(trace.rse[trace.rounds]))
    if not math.isfinite(final):
        final = 1e300
    return max_iters + 100.0 * math.log10(max(final / rse_tol, 1.0) + 1.0)


def tune_step_size(
    run_fn: Callable[[float], RunTrace],
    bracket: tuple[float, float] = (1e-4, 2.0),
    probes: int = 12,
    rse_tol: float = 1e-10,
    max_iters: int = 1000,
) -> tuple[float, RunTrace]:
    """Golden-section search for the fixed step with the fewest rounds.

    Works on the exponent of the step size over the bracket; each probe
    is a full run.  Non-converged probes are scored by how far their
    final error stayed above the tolerance, so the search degrades
    smoothly when nothing in the bracket converges.
    """
    lo, hi = bracket
    if not 0 < lo < hi:
        raise ValueError("bracket must satisfy 0 < lo < hi")
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = math.log10(lo), math.log10(hi)
    cache: dict[float, tuple[float, RunTrace]] = {}

    def probe(t: float) -> float:
        t = round(t, 12)
        if t not in cache:
            trace = run_fn(10.0**t)
            cache[t] = (_tuning_score(trace, rse_tol, max_iters), trace)
        return cache[t][0]

    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    probe(c)
    probe(d)
    while len(cache) < probes:
        if probe(c) <= probe(d):
            b, d = d, c
            c = b - invphi * (b - a)
            probe(c)
        else:
            a, c = c, d
            d = a + invphi * (b - a)
            probe(d)
    best_t = min(cache, key=lambda t: (cache[t][0], t))
    return 10.0**best_t, cache[best_t][1]


def run_experiment(
    config: ExperimentConfig,
) -> tuple[SummaryTable, dict[tuple[str, float, int], RunTrace]]:
    """Execute every cell of the sweep and aggregate the outcomes.

    Cells that raise are recorded as aborted and skipped in the
    aggregates; everything else (including non-converged runs) counts
    toward its cell's statistics.
    """
    traces: dict[tuple[str, float, int], RunTrace] = {}
    aborted: dict[tuple[str, float], int] = {}
    for kappa in config.kappas:
        for seed in config.seeds:
            graph = random_connected_graph(config.n_agents, kappa, seed)
            try:
                problem = make_problem(config, seed)
                solve_reference(problem)
            except Exception:
                for algo in config.algos:
                    aborted[(algo, kappa)] = aborted.get((algo, kappa), 0) + 1
                continue
            for algo in config.algos:
                try:
                    if config.alpha == "golden":
                        _, trace = tune_step_size(
                            lambda a: run_algo(
                                algo,
                                problem,
                                graph,
                                alpha=a,
                                max_iters=config.max_iters,
                                rse_tol=config.rse_tol,
                                epsilon=config.epsilon,
                                seed=seed,
                                fusion=config.fusion,
                            ),
                            bracket=config.golden_bracket,
                            probes=config.golden_probes,
                            rse_tol=config.rse_tol,
                            max_iters=config.max_iters,
                        )
                    else:
                        trace = run_algo(
                            algo,
                            problem,
                            graph,
                            alpha=config.alpha,
                            max_iters=config.max_iters,
                            rse_tol=config.rse_tol,
                            epsilon=config.epsilon,
                            seed=seed,
                            fusion=config.fusion,
                        )
                    traces[(algo, kappa, seed)] = trace
                except Exception:
                    aborted[(algo, kappa)] = aborted.get((algo, kappa), 0) + 1
    rows = []
    for kappa in config.kappas:
        for algo in config.algos:
            cell = [traces[(algo, kappa, s)] for s in config.seeds if (algo, kappa, s) in traces]
            good = [t for t in cell if t.converged]
            n_aborted = aborted.get((algo, kappa), 0)
            runs = len(config.seeds)
            rounds = np.array([t.rounds for t in good], dtype=float)
            byte_means = np.array(
                [float(np.mean(t.bytes_sent[t.rounds])) for t in good], dtype=float
            )
            byte_maxes = np.array(
                [float(np.max(t.bytes_sent[t.rounds])) for t in good], dtype=float
            )
            walls = np.array([t.wall_time_ms for t in good], dtype=float)
            rows.append(
                SummaryRow(
                    algo=algo,
                    kappa=kappa,
                    runs=runs,
                    converged=len(good),
                    aborted=n_aborted,
                    success_rate=len(good) / runs if runs else 0.0,
                    rounds_mean=float(np.mean(rounds)) if good else None,
                    rounds_std=float(np.std(rounds)) if good else None,
                    bytes_mean=float(np.mean(byte_means)) if good else None,
                    bytes_max=float(np.max(byte_maxes)) if good else None,
                    wall_ms_mean=float(np.mean(walls)) if good else None,
                )
            )
    return SummaryTable(rows=rows), traces


def _trace_filename(algo: str, kappa: float, seed: int) -> str:
    return f"trace_{algo}_k{kappa}_s{seed}.csv"


def emit_report(
    table: SummaryTable,
    traces: dict[tuple[str, float, int], RunTrace],
    out_dir: str | Path,
) -> None:
    """Write summary JSON, one CSV per run, and a long-format CSV.

    All content except wall-time fields is reproducible byte for byte
    from the same config.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    runs = {}
    for (algo, kappa, seed), trace in sorted(traces.items()):
        trace.to_csv(out / _trace_filename(algo, kappa, seed))
        runs[f"{algo}_k{kappa}_s{seed}"] = trace.summary_dict()
    payload = {"table": table.to_dict(), "runs": runs}
    (out / "summary.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    lines = ["algo,kappa,seed,round,agent,rse"]
    for (algo, kappa, seed), trace in sorted(traces.items()):
        for k in range(trace.rounds + 1):
            for i in range(trace.n_agents):
                lines.append(f"{algo},{kappa},{seed},{k},{i},{float(trace.rse[k, i])!r}")
    (out / "long.csv").write_text("\n".join(lines) + "\n")


_PAYLOADS_PER_ROUND = {"dqn-bfgs": 3, "dqn-dfp": 3, "diging-atc": 2, "ecdqn-bfgs": 3, "ecdqn-dfp": 3}


def validate_run(
    trace_path: str | Path, summary_path: str | Path, graph_path: str | Path
) -> list[str]:
    """Re-check a finished run's ledger arithmetic and tracker identity.

    Returns a list of violation messages; empty means the trace passes.
    """
    violations: list[str] = []
    summary = json.loads(Path(summary_path).read_text())
    graph = load_graph(graph_path)
    deg = graph.degrees()
    algo = summary["algo"]
    payloads = _PAYLOADS_PER_ROUND.get(algo)
    if payloads is None:
        return [f"unknown algorithm {algo!r} in summary"]
    if algo.startswith("ecdqn") and summary.get("fusion") is False:
        payloads = 2
    dim = int(summary["dim"])
    n_agents = int(summary["n_agents"])
    rounds = int(summary["rounds"])

    with open(trace_path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
    if len(rows) != (rounds + 1) * n_agents:
        violations.append(
            f"expected {(rounds + 1) * n_agents} rows ({rounds} rounds), found {len(rows)}"
        )
    grad_norms: dict[int, float] = {}
    for row in rows:
        k = int(row["round"])
        i = int(row["agent"])
        expected = payloads * 8 * dim * int(deg[i]) * k
        actual = int(row["bytes_sent"])
        if actual != expected:
            violations.append(
                f"round {k} agent {i}: ledger says {actual} bytes, formula gives {expected}"
            )
            break
        grad_norms[k] = float(row["mean_grad_norm"])
    residuals = summary.get("tracking_residuals", [])
    if len(residuals) != rounds + 1:
        violations.append(
            f"expected {rounds + 1} tracking residuals, found {len(residuals)}"
        )
    for k, res in enumerate(residuals):
        bound = 1e-12 * (1.0 + grad_norms.get(k, 0.0))
        if res > bound:
            violations.append(
                f"round {k}: tracker deviates from the mean gradient by {res:.3e} > {bound:.3e}"
            )
            break
    if summary.get("converged") and summary.get("rse_tol") is not None:
        if summary["final_rse_max"] > summary["rse_tol"]:
            violations.append("summary claims convergence above its own tolerance")
    return violations
