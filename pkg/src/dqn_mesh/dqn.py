"""Synchronous peer-to-peer simulation of distributed quasi-Newton descent.

Each round every agent mixes state with its neighbors through a doubly
stochastic weight matrix, tracks the network-average gradient with a
correction term, refreshes a local inverse-Hessian estimate from the
step/tracker differences, and mixes the resulting descent directions.
A first-order gradient-tracking baseline shares the same engine so that
iteration and communication costs are directly comparable.

Communication is metered exactly: one mixed payload of dimension n costs
every agent 8 * n * degree bytes (double precision, one copy per
neighbor).  The quasi-Newton method mixes three payloads per round, the
baseline two.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .problems import SeparableProblem, solve_reference
from .quasi_newton import (
    CurvatureError,
    CurvaturePair,
    InverseHessianEstimate,
    curvature_ok,
    bfgs_inverse_update,
    dfp_inverse_update,
    pd_safeguard,
)
from .topology import CommGraph, MixingMatrix, metropolis_weights

__all__ = [
    "AgentState",
    "SyncNetwork",
    "RunTrace",
    "RunConfig",
    "DivergedError",
    "mix",
    "track_gradient",
    "init_dqn_states",
    "dqn_step",
    "dqn_run",
    "diging_atc_run",
    "safe_step_size",
]

BYTES_PER_SCALAR = 8

# iterates beyond this magnitude cannot recover and will overflow within a
# few rounds; cut them off as diverged before they poison the arithmetic
DIVERGENCE_LIMIT = 1e50


def _blown_up(arr: np.ndarray) -> bool:
    return not np.all(np.isfinite(arr)) or float(np.max(np.abs(arr))) > DIVERGENCE_LIMIT


class DivergedError(RuntimeError):
    """Iterates left the representable range; carries the failing round."""

    def __init__(self, round_index: int):
        super().__init__(f"non-finite iterate at round {round_index}")
        self.round_index = round_index


@dataclass
class AgentState:
    """Per-agent variables for the unconstrained method."""

    x: np.ndarray
    v: np.ndarray
    z: np.ndarray
    d: np.ndarray
    c: InverseHessianEstimate
    alpha: float
    last_gradient: np.ndarray


@dataclass
class SyncNetwork:
    """Mixing engine with an exact per-agent byte ledger."""

    graph: CommGraph
    w: np.ndarray
    sent_bytes: np.ndarray = field(init=False)
    round: int = field(default=0, init=False)

    def __post_init__(self) -> None:
        if isinstance(self.w, MixingMatrix):
            self.w = self.w.w
        self.w = np.asarray(self.w, dtype=float)
        if self.w.shape != (self.graph.n_agents, self.graph.n_agents):
            raise ValueError("weight matrix does not match the graph")
        self.sent_bytes = np.zeros(self.graph.n_agents, dtype=np.int64)
        self._degrees = self.graph.degrees()

    def mix(self, rows: np.ndarray, account: bool = True) -> np.ndarray:
        """One synchronous exchange: every agent averages neighbor rows.

        Each agent pushes its n-vector to every neighbor, so a mixed
        payload costs 8 * n * degree bytes per agent.
        """
        rows = np.asarray(rows, dtype=float)
        if rows.shape[0] != self.graph.n_agents:
            raise ValueError("row count does not match the number of agents")
        if account:
            self.sent_bytes += BYTES_PER_SCALAR * rows.shape[1] * self._degrees
        return self.w @ rows


def mix(w: MixingMatrix | np.ndarray, rows: np.ndarray) -> np.ndarray:
    """Pure mixing without byte accounting."""
    mat = w.w if isinstance(w, MixingMatrix) else np.asarray(w, dtype=float)
    rows = np.asarray(rows, dtype=float)
    if mat.shape[1] != rows.shape[0]:
        raise ValueError("dimension mismatch between weights and rows")
    return mat @ rows


@dataclass
class RunTrace:
    """Per-round history of a run plus its terminal status.

    One record per round, including round zero, so a run of R rounds
    yields R + 1 records.  x_final holds the last iterate of every agent
    (one row per agent); intermediate iterates are not retained.
    """

    algo: str
    n_agents: int
    dim: int
    alpha: float
    rse: np.ndarray
    x_consensus: np.ndarray
    v_consensus: np.ndarray
    mean_grad_norm: np.ndarray
    objective: np.ndarray
    bytes_sent: np.ndarray
    tracking_residual: np.ndarray
    z_consensus: np.ndarray | None = None
    feasibility: np.ndarray | None = None
    beta_norm: np.ndarray | None = None
    x_final: np.ndarray | None = None
    converged: bool = False
    diverged: bool = False
    stalled: bool = False
    rounds: int = 0
    wall_time_ms: float = 0.0
    scheme: str | None = None
    fusion: bool | None = None
    rse_tol: float | None = None

    def to_csv(self, path: str | Path) -> None:
        """Write one row per (round, agent) with the pinned column set."""
        cols = "round,agent,rse,x_consensus_err,v_consensus_err,mean_grad_norm,objective,bytes_sent"
        extra = self.feasibility is not None
        if extra:
            cols += ",feasibility,beta_norm"
        lines = [cols]
        for k in range(self.rounds + 1):
            for i in range(self.n_agents):
                row = (
                    f"{k},{i},{float(self.rse[k, i])!r},{float(self.x_consensus[k])!r},"
                    f"{float(self.v_consensus[k])!r},{float(self.mean_grad_norm[k])!r},"
                    f"{float(self.objective[k])!r},{int(self.bytes_sent[k, i])}"
                )
                if extra:
                    row += f",{float(self.feasibility[k, i])!r},{float(self.beta_norm[k, i])!r}"
                lines.append(row)
        Path(path).write_text("\n".join(lines) + "\n")

    def summary_dict(self) -> dict:
        return {
            "algo": self.algo,
            "scheme": self.scheme,
            "fusion": self.fusion,
            "n_agents": self.n_agents,
            "dim": self.dim,
            "alpha": self.alpha,
            "converged": self.converged,
            "diverged": self.diverged,
            "stalled": self.stalled,
            "rounds": self.rounds,
            "rse_tol": self.rse_tol,
            "final_rse_max": float(np.max(self.rse[self.rounds])),
            "total_bytes_per_agent_mean": float(np.mean(self.bytes_sent[self.rounds])),
            "total_bytes_per_agent_max": int(np.max(self.bytes_sent[self.rounds])),
            "tracking_residuals": [float(t) for t in self.tracking_residual[: self.rounds + 1]],
            "wall_time_ms": float(self.wall_time_ms),
        }


@dataclass(frozen=True)
class RunConfig:
    """Knobs shared by the distributed solvers.

    alpha may be a number or "auto"; auto caps the fixed step at 90% of
    the contraction-based bound computed by safe_step_size.
    """

    scheme: str = "bfgs"
    alpha: float | str = "auto"
    alpha_cap: float = 1.0
    c0_scale: float = 0.1
    gamma: float = 1e3
    eig_floor: float = 1e-8
    max_iters: int = 1000
    rse_tol: float = 1e-10
    epsilon: float = 0.01
    seed: int = 0
    parallel: bool = False

    def __post_init__(self) -> None:
        if self.scheme not in ("bfgs", "dfp"):
            raise ValueError(f"unknown quasi-Newton scheme {self.scheme!r}")
        if isinstance(self.alpha, str) and self.alpha != "auto":
            raise ValueError("alpha must be a number or 'auto'")


def safe_step_size(
    contraction: float, smoothness: float, gamma: float, dim: int, n_agents: int
) -> float:
    """Largest fixed step with a convergence guarantee for the given mesh.

    Evaluates (1 - c) / (2 c^3 L q) with q = gamma * sqrt(min(dim,
    n_agents)).  A fully mixing network (contraction zero) returns
    infinity: any step a centralized method tolerates is safe.
    """
    if not 0.0 <= contraction < 1.0:
        raise ValueError("contraction must lie in [0, 1)")
    if smoothness <= 0 or gamma <= 0:
        raise ValueError("smoothness and gamma must be positive")
    if contraction == 0.0:
        return math.inf
    q = gamma * math.sqrt(min(dim, n_agents))
    return (1.0 - contraction) / (2.0 * contraction**3 * smoothness * q)


def _resolve_alpha(
    config: RunConfig, problem: SeparableProblem, contraction: float
) -> float:
    if not isinstance(config.alpha, str):
        if config.alpha <= 0:
            raise ValueError("alpha must be positive")
        return float(config.alpha)
    smoothness = problem.smoothness()
    if smoothness is None:
        raise ValueError("auto step size needs smoothness bounds on every local objective")
    bound = safe_step_size(contraction, smoothness, config.gamma, problem.dim, problem.n_agents)
    return min(config.alpha_cap, 0.9 * bound)


def _map_agents(executor: ThreadPoolExecutor | None, fn, count: int) -> list:
    # results are slotted by agent index, so scheduling order cannot
    # change the outcome
    if executor is None:
        return [fn(i) for i in range(count)]
    return list(executor.map(fn, range(count)))


def init_dqn_states(
    problem: SeparableProblem,
    network: SyncNetwork,
    alpha: float | np.ndarray,
    c0_scale: float = 0.1,
    gamma: float = 1e3,
    seed: int = 0,
    x0: np.ndarray | None = None,
) -> list[AgentState]:
    """Draw initial iterates and warm-start the tracker and directions.

    v starts at the local gradient, the inverse estimate at c0_scale
    times the identity, and the mixed direction z is formed once from
    d = -C v.  This setup exchange is not metered; the ledger counts
    iteration rounds only.
    """
    n, n_agents = problem.dim, problem.n_agents
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n_agents, n)) if x0 is None else np.array(x0, dtype=float)
    if x.shape != (n_agents, n):
        raise ValueError("x0 must have one row per agent")
    alphas = np.broadcast_to(np.asarray(alpha, dtype=float), (n_agents,))
    grads = np.stack([problem.locals[i].gradient(x[i]) for i in range(n_agents)])
    v = grads.copy()
    c0 = c0_scale * np.eye(n)
    d = np.stack([-(c0 @ v[i]) for i in range(n_agents)])
    z = network.mix(d, account=False)
    return [
        AgentState(
            x=x[i].copy(),
            v=v[i].copy(),
            z=z[i].copy(),
            d=d[i].copy(),
            c=InverseHessianEstimate(c=c0.copy(), gamma=gamma),
            alpha=float(alphas[i]),
            last_gradient=grads[i].copy(),
        )
        for i in range(n_agents)
    ]


def track_gradient(
    network: SyncNetwork,
    states: list[AgentState],
    new_x: np.ndarray,
    problem: SeparableProblem,
    executor: ThreadPoolExecutor | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Tracker update v' = W (v + g(x') - g(x)); returns (v', new gradients)."""
    v = np.stack([st.v for st in states])
    old_g = np.stack([st.last_gradient for st in states])
    new_g = np.stack(
        _map_agents(executor, lambda i: problem.locals[i].gradient(new_x[i]), len(states))
    )
    return network.mix(v + new_g - old_g), new_g


_INVERSE_UPDATES = {"bfgs": bfgs_inverse_update, "dfp": dfp_inverse_update}


def _refresh_inverse(
    est: InverseHessianEstimate, pair: CurvaturePair, scheme: str, floor: float
) -> InverseHessianEstimate:
    """Apply one curvature update, skipping flat pairs and repairing the
    spectrum only when a cheap definiteness probe fails."""
    if curvature_ok(pair):
        try:
            est = _INVERSE_UPDATES[scheme](est, pair)
        except CurvatureError:
            pass
    c = est.c
    ok = bool(np.all(np.isfinite(c)))
    if ok:
        try:
            np.linalg.cholesky(c)
        except np.linalg.LinAlgError:
            ok = False
    if not ok or np.linalg.norm(c, ord="fro") > est.gamma:
        c = pd_safeguard(np.where(np.isfinite(c), c, 0.0), floor=floor, ceiling=est.gamma)
        est = InverseHessianEstimate(c=c, gamma=est.gamma)
    return est


def dqn_step(
    network: SyncNetwork,
    states: list[AgentState],
    problem: SeparableProblem,
    scheme: str = "bfgs",
    eig_floor: float = 1e-8,
    executor: ThreadPoolExecutor | None = None,
) -> list[AgentState]:
    """One synchronous round: mix iterates, track gradients, refresh the
    curvature estimates, then mix descent directions.

    Three payloads cross every edge, so the ledger adds 24 * dim * degree
    bytes per agent.
    """
    x = np.stack([st.x for st in states])
    z = np.stack([st.z for st in states])
    alphas = np.array([st.alpha for st in states])

    new_x = network.mix(x + alphas[:, None] * z)
    if _blown_up(new_x):
        raise DivergedError(network.round + 1)
    new_v, new_g = track_gradient(network, states, new_x, problem, executor)
    if _blown_up(new_v):
        raise DivergedError(network.round + 1)

    def qn_work(i: int):
        st = states[i]
        pair = CurvaturePair(s=new_x[i] - st.x, y=new_v[i] - st.v)
        est = _refresh_inverse(st.c, pair, scheme, eig_floor)
        return est, -(est.c @ new_v[i])

    results = _map_agents(executor, qn_work, len(states))
    new_d = np.stack([r[1] for r in results])
    new_z = network.mix(new_d)
    network.round += 1
    return [
        replace(
            states[i],
            x=new_x[i],
            v=new_v[i],
            z=new_z[i],
            d=new_d[i],
            c=results[i][0],
            last_gradient=new_g[i],
        )
        for i in range(len(states))
    ]


class _Recorder:
    """Accumulates per-round trace rows."""

    def __init__(self, problem: SeparableProblem, x_star: np.ndarray, track_z: bool):
        self.problem = problem
        self.x_star = x_star
        self.star_norm = float(np.linalg.norm(x_star))
        self.rse: list[np.ndarray] = []
        self.x_cons: list[float] = []
        self.v_cons: list[float] = []
        self.z_cons: list[float] = [] if track_z else None
        self.grad_norm: list[float] = []
        self.objective: list[float] = []
        self.bytes: list[np.ndarray] = []
        self.tracking: list[float] = []
        self.feas: list[np.ndarray] | None = None
        self.beta: list[np.ndarray] | None = None

    def agent_rse(self, x: np.ndarray) -> np.ndarray:
        err = np.linalg.norm(x - self.x_star, axis=1)
        if self.star_norm == 0.0:
            return err
        return err / self.star_norm

    def record(
        self,
        x: np.ndarray,
        v: np.ndarray,
        grads: np.ndarray,
        bytes_sent: np.ndarray,
        z: np.ndarray | None = None,
        feas: np.ndarray | None = None,
        beta: np.ndarray | None = None,
    ) -> float:
        self.rse.append(self.agent_rse(x))
        x_bar = x.mean(axis=0)
        self.x_cons.append(float(np.linalg.norm(x - x_bar)))
        self.v_cons.append(float(np.linalg.norm(v - v.mean(axis=0))))
        if self.z_cons is not None:
            self.z_cons.append(float(np.linalg.norm(z - z.mean(axis=0))))
        g_bar = grads.mean(axis=0)
        self.grad_norm.append(float(np.linalg.norm(g_bar)))
        self.objective.append(self.problem.objective_value(x_bar))
        self.bytes.append(bytes_sent.copy())
        self.tracking.append(float(np.linalg.norm(v.mean(axis=0) - g_bar)))
        if feas is not None:
            if self.feas is None:
                self.feas, self.beta = [], []
            self.feas.append(feas)
            self.beta.append(beta)
        return float(np.max(self.rse[-1]))

    def build(self, algo: str, n_agents: int, dim: int, alpha: float, **flags) -> RunTrace:
        rounds = len(self.rse) - 1
        return RunTrace(
            algo=algo,
            n_agents=n_agents,
            dim=dim,
            alpha=alpha,
            rse=np.stack(self.rse),
            x_consensus=np.array(self.x_cons),
            v_consensus=np.array(self.v_cons),
            z_consensus=None if self.z_cons is None else np.array(self.z_cons),
            mean_grad_norm=np.array(self.grad_norm),
            objective=np.array(self.objective),
            bytes_sent=np.stack(self.bytes),
            tracking_residual=np.array(self.tracking),
            feasibility=None if self.feas is None else np.stack(self.feas),
            beta_norm=None if self.beta is None else np.stack(self.beta),
            rounds=rounds,
            **flags,
        )


def _ensure_reference(problem: SeparableProblem) -> np.ndarray:
    if problem.reference_solution is None:
        solve_reference(problem)
    return problem.reference_solution


def dqn_run(
    problem: SeparableProblem,
    graph: CommGraph,
    config: RunConfig = RunConfig(),
    x0: np.ndarray | None = None,
) -> RunTrace:
    """Run the distributed quasi-Newton method until the worst agent's
    relative error drops below the tolerance or the round budget runs out.
    """
    start = time.perf_counter()
    weights = metropolis_weights(graph, config.epsilon)
    network = SyncNetwork(graph=graph, w=weights.w)
    x_star = _ensure_reference(problem)
    alpha = _resolve_alpha(config, problem, weights.contraction)
    states = init_dqn_states(
        problem, network, alpha, config.c0_scale, config.gamma, config.seed, x0
    )
    rec = _Recorder(problem, x_star, track_z=True)
    executor = ThreadPoolExecutor(max_workers=min(8, problem.n_agents)) if config.parallel else None
    converged = diverged = False
    try:
        worst = rec.record(
            np.stack([st.x for st in states]),
            np.stack([st.v for st in states]),
            np.stack([st.last_gradient for st in states]),
            network.sent_bytes,
            z=np.stack([st.z for st in states]),
        )
        if worst <= config.rse_tol:
            converged = True
        else:
            for _ in range(config.max_iters):
                try:
                    states = dqn_step(
                        network, states, problem, config.scheme, config.eig_floor, executor
                    )
                except DivergedError:
                    diverged = True
                    break
                worst = rec.record(
                    np.stack([st.x for st in states]),
                    np.stack([st.v for st in states]),
                    np.stack([st.last_gradient for st in states]),
                    network.sent_bytes,
                    z=np.stack([st.z for st in states]),
                )
                if worst <= config.rse_tol:
                    converged = True
                    break
    finally:
        if executor is not None:
            executor.shutdown()
    trace = rec.build(
        f"dqn-{config.scheme}",
        problem.n_agents,
        problem.dim,
        alpha,
        converged=converged,
        diverged=diverged,
        scheme=config.scheme,
        rse_tol=config.rse_tol,
    )
    trace.x_final = np.stack([st.x for st in states])
    trace.wall_time_ms = (time.perf_counter() - start) * 1e3
    return trace


def diging_atc_run(
    problem: SeparableProblem,
    graph: CommGraph,
    config: RunConfig = RunConfig(alpha=0.01),
    x0: np.ndarray | None = None,
) -> RunTrace:
    """First-order gradient-tracking baseline (adapt-then-combine form).

    x' = W (x - alpha y), y' = W (y + g(x') - g(x)), with y warm-started
    at the local gradients.  Two payloads cross every edge per round, so
    the ledger adds 16 * dim * degree bytes per agent.  With one agent
    this is plain gradient descent.
    """
    start = time.perf_counter()
    weights = metropolis_weights(graph, config.epsilon)
    network = SyncNetwork(graph=graph, w=weights.w)
    x_star = _ensure_reference(problem)
    alpha = _resolve_alpha(config, problem, weights.contraction)
    n, n_agents = problem.dim, problem.n_agents
    rng = np.random.default_rng(config.seed)
    x = rng.standard_normal((n_agents, n)) if x0 is None else np.array(x0, dtype=float)
    grads = np.stack([problem.locals[i].gradient(x[i]) for i in range(n_agents)])
    y = grads.copy()
    rec = _Recorder(problem, x_star, track_z=False)
    converged = diverged = False
    worst = rec.record(x, y, grads, network.sent_bytes)
    if worst <= config.rse_tol:
        converged = True
    else:
        for _ in range(config.max_iters):
            new_x = network.mix(x - alpha * y)
            if _blown_up(new_x):
                diverged = True
                break
            new_g = np.stack([problem.locals[i].gradient(new_x[i]) for i in range(n_agents)])
            y = network.mix(y + new_g - grads)
            if _blown_up(y):
                diverged = True
                break
            x, grads = new_x, new_g
            network.round += 1
            worst = rec.record(x, y, grads, network.sent_bytes)
            if worst <= config.rse_tol:
                converged = True
                break
    trace = rec.build(
        "diging-atc",
        n_agents,
        n,
        alpha,
        converged=converged,
        diverged=diverged,
        rse_tol=config.rse_tol,
    )
    trace.x_final = x.copy()
    trace.wall_time_ms = (time.perf_counter() - start) * 1e3
    return trace
