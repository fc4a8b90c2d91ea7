"""Equality-constrained distributed quasi-Newton iteration.

Each agent keeps a direct Hessian estimate and solves a local saddle-point
system coupling its tracked gradient with the shared constraint residual.
The resulting primal directions are optionally fused (mixed) before the
iterate update; multipliers are recomputed fresh every round and never
mixed.  Gradient tracking and the byte ledger reuse the unconstrained
engine.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .dqn import (
    DivergedError,
    SyncNetwork,
    _blown_up,
    _map_agents,
    _Recorder,
    _ensure_reference,
    track_gradient,
)
from .problems import SeparableProblem
from .quasi_newton import (
    CurvatureError,
    CurvaturePair,
    HessianEstimate,
    bfgs_hessian_update,
    curvature_ok,
    dfp_hessian_update,
    pd_safeguard,
)
from .topology import CommGraph, metropolis_weights

__all__ = [
    "EcAgentState",
    "KktSystem",
    "KktFactorizationError",
    "EcRunConfig",
    "kkt_solve",
    "init_ecdqn_states",
    "ecdqn_step",
    "ecdqn_run",
]


class KktFactorizationError(RuntimeError):
    """A block of the saddle-point system could not be factorized."""


@dataclass(frozen=True)
class KktSystem:
    """Local saddle-point system [[B, A'], [A, 0]] [dx; beta] = -[r_stat; r_prim].

    rhs_stat and rhs_prim hold the residuals themselves (tracked gradient
    and constraint violation); the sign flip happens inside the solver.
    """

    b: np.ndarray
    a: np.ndarray
    rhs_stat: np.ndarray
    rhs_prim: np.ndarray

    def __post_init__(self) -> None:
        n = self.b.shape[0]
        m = self.a.shape[0]
        if self.b.shape != (n, n) or self.a.shape != (m, n):
            raise ValueError("inconsistent block shapes")
        if self.rhs_stat.shape != (n,) or self.rhs_prim.shape != (m,):
            raise ValueError("inconsistent right-hand-side shapes")


def kkt_solve(system: KktSystem) -> tuple[np.ndarray, np.ndarray]:
    """Solve the saddle-point system by Schur complement.

    Cholesky-factorizes the Hessian block, reduces to an m x m system in
    the multiplier, and back-substitutes.  Raises KktFactorizationError
    naming the offending block when either factorization fails, and when
    the assembled residual exceeds 1e-10 * (1 + |rhs|).
    """
    b_mat, a_mat = system.b, system.a
    u = -system.rhs_stat
    w = -system.rhs_prim
    try:
        chol = np.linalg.cholesky(b_mat)
    except np.linalg.LinAlgError as exc:
        raise KktFactorizationError("hessian block is not positive definite") from exc

    def b_solve(rhs: np.ndarray) -> np.ndarray:
        return np.linalg.solve(chol.T, np.linalg.solve(chol, rhs))

    binv_u = b_solve(u)
    binv_at = b_solve(a_mat.T)
    schur = a_mat @ binv_at
    schur = 0.5 * (schur + schur.T)
    try:
        schur_chol = np.linalg.cholesky(schur)
    except np.linalg.LinAlgError as exc:
        raise KktFactorizationError("constraint block is rank deficient") from exc
    beta = np.linalg.solve(
        schur_chol.T, np.linalg.solve(schur_chol, a_mat @ binv_u - w)
    )
    delta_x = binv_u - binv_at @ beta

    scale = 1.0 + float(np.linalg.norm(np.concatenate([u, w])))
    res_stat = b_mat @ delta_x + a_mat.T @ beta - u
    res_prim = a_mat @ delta_x - w
    if np.linalg.norm(np.concatenate([res_stat, res_prim])) > 1e-10 * scale:
        raise KktFactorizationError("saddle-point solve residual too large")
    return delta_x, beta


@dataclass
class EcAgentState:
    """Per-agent variables for the constrained method."""

    x: np.ndarray
    v: np.ndarray
    b_est: HessianEstimate
    beta: np.ndarray
    delta_x: np.ndarray
    d: np.ndarray
    alpha: float
    last_gradient: np.ndarray


@dataclass(frozen=True)
class EcRunConfig:
    """Knobs for the constrained solver.

    alpha "auto" falls back to the full saddle-point step (1.0); there is
    no contraction-based bound for this method.  The Hessian estimates are
    kept within [eig_floor, eig_ceiling]; the floor is the reciprocal of
    the usual curvature cap, which keeps the saddle-point solves stable
    while consensus noise still contaminates the curvature pairs.
    """

    scheme: str = "bfgs"
    alpha: float | str = 1.0
    b0_spectrum: tuple[float, float] = (0.5, 2.0)
    fusion: bool = True
    eig_floor: float = 1e-3
    eig_ceiling: float = 1e3
    max_iters: int = 1000
    rse_tol: float = 1e-8
    stall_tol: float = 1e-14
    stall_rounds: int = 10
    epsilon: float = 0.01
    seed: int = 0
    parallel: bool = False

    def __post_init__(self) -> None:
        if self.scheme not in ("bfgs", "dfp"):
            raise ValueError(f"unknown quasi-Newton scheme {self.scheme!r}")
        if isinstance(self.alpha, str) and self.alpha != "auto":
            raise ValueError("alpha must be a number or 'auto'")


def _resolve_alpha(config: EcRunConfig) -> float:
    if isinstance(config.alpha, str):
        return 1.0
    if config.alpha <= 0:
        raise ValueError("alpha must be positive")
    return float(config.alpha)


def init_ecdqn_states(
    problem: SeparableProblem,
    network: SyncNetwork,
    alpha: float | np.ndarray,
    b0_spectrum: tuple[float, float] = (0.5, 2.0),
    seed: int = 0,
    x0: np.ndarray | None = None,
) -> list[EcAgentState]:
    """Draw initial iterates and random well-conditioned Hessian estimates.

    Every agent gets an independent symmetric positive definite estimate
    with eigenvalues uniform in b0_spectrum, conjugated by a random
    orthogonal basis; the same seed reproduces the same states.
    """
    if problem.constraint is None:
        raise ValueError("constrained method needs a problem with a constraint")
    n, n_agents = problem.dim, problem.n_agents
    m = problem.constraint[0].shape[0]
    lo, hi = b0_spectrum
    if not 0 < lo <= hi:
        raise ValueError("b0_spectrum bounds must be positive and ordered")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n_agents, n)) if x0 is None else np.array(x0, dtype=float)
    if x.shape != (n_agents, n):
        raise ValueError("x0 must have one row per agent")
    alphas = np.broadcast_to(np.asarray(alpha, dtype=float), (n_agents,))
    states = []
    for i in range(n_agents):
        q_mat, _ = np.linalg.qr(rng.standard_normal((n, n)))
        vals = rng.uniform(lo, hi, size=n)
        b0 = (q_mat * vals) @ q_mat.T
        g = problem.locals[i].gradient(x[i])
        states.append(
            EcAgentState(
                x=x[i].copy(),
                v=g.copy(),
                b_est=HessianEstimate(b=0.5 * (b0 + b0.T)),
                beta=np.zeros(m),
                delta_x=np.zeros(n),
                d=np.zeros(n),
                alpha=float(alphas[i]),
                last_gradient=g.copy(),
            )
        )
    return states


_HESSIAN_UPDATES = {"bfgs": bfgs_hessian_update, "dfp": dfp_hessian_update}


def _refresh_hessian(
    est: HessianEstimate, pair: CurvaturePair, scheme: str, floor: float, ceiling: float
) -> HessianEstimate:
    if curvature_ok(pair):
        try:
            est = _HESSIAN_UPDATES[scheme](est, pair)
        except CurvatureError:
            pass
    b = est.b
    ok = bool(np.all(np.isfinite(b))) and float(np.linalg.norm(b)) <= ceiling
    if ok:
        try:
            # shifted probe: factorizable iff every eigenvalue clears half the
            # floor, so estimates clamped exactly at the floor pass untouched
            np.linalg.cholesky(b - 0.5 * floor * np.eye(b.shape[0]))
        except np.linalg.LinAlgError:
            ok = False
    if not ok:
        est = HessianEstimate(
            b=pd_safeguard(np.where(np.isfinite(b), b, 0.0), floor=floor, ceiling=ceiling)
        )
    return est


def ecdqn_step(
    network: SyncNetwork,
    states: list[EcAgentState],
    problem: SeparableProblem,
    scheme: str = "bfgs",
    eig_floor: float = 1e-3,
    eig_ceiling: float = 1e3,
    fusion: bool = True,
    executor: ThreadPoolExecutor | None = None,
) -> list[EcAgentState]:
    """One synchronous round of the constrained method.

    Order within the round: local saddle-point solves, direction fusion,
    iterate mixing, gradient tracking, Hessian refresh.  Three payloads
    cross every edge (two with fusion disabled).  A failed factorization
    triggers one spectrum repair and retry; a second failure aborts the
    run as diverged.
    """
    a_mat, b_vec = problem.constraint
    x = np.stack([st.x for st in states])
    alphas = np.array([st.alpha for st in states])

    def kkt_work(i: int):
        st = states[i]
        est = st.b_est
        r_prim = a_mat @ st.x - b_vec
        try:
            dx, beta = kkt_solve(KktSystem(b=est.b, a=a_mat, rhs_stat=st.v, rhs_prim=r_prim))
        except KktFactorizationError:
            est = HessianEstimate(b=pd_safeguard(est.b, floor=eig_floor, ceiling=eig_ceiling))
            try:
                dx, beta = kkt_solve(
                    KktSystem(b=est.b, a=a_mat, rhs_stat=st.v, rhs_prim=r_prim)
                )
            except KktFactorizationError as exc:
                raise DivergedError(network.round + 1) from exc
        return dx, beta, est

    kkt_results = _map_agents(executor, kkt_work, len(states))
    delta_x = np.stack([r[0] for r in kkt_results])
    d = network.mix(delta_x) if fusion else delta_x

    new_x = network.mix(x + alphas[:, None] * d)
    if _blown_up(new_x):
        raise DivergedError(network.round + 1)
    new_v, new_g = track_gradient(network, states, new_x, problem, executor)
    if _blown_up(new_v):
        raise DivergedError(network.round + 1)

    def qn_work(i: int):
        st = states[i]
        pair = CurvaturePair(s=new_x[i] - st.x, y=new_v[i] - st.v)
        return _refresh_hessian(kkt_results[i][2], pair, scheme, eig_floor, eig_ceiling)

    new_ests = _map_agents(executor, qn_work, len(states))
    network.round += 1
    return [
        replace(
            states[i],
            x=new_x[i],
            v=new_v[i],
            b_est=new_ests[i],
            beta=kkt_results[i][1],
            delta_x=delta_x[i],
            d=d[i],
            last_gradient=new_g[i],
        )
        for i in range(len(states))
    ]


def ecdqn_run(
    problem: SeparableProblem,
    graph: CommGraph,
    config: EcRunConfig = EcRunConfig(),
    x0: np.ndarray | None = None,
) -> "RunTrace":
    """Run the constrained method until every agent's relative error meets
    the tolerance, the primal directions stagnate, or the budget runs out.

    The trace gains per-agent feasibility and multiplier-norm columns on
    top of the shared record layout.
    """
    start = time.perf_counter()
    if problem.constraint is None:
        raise ValueError("constrained method needs a problem with a constraint")
    weights = metropolis_weights(graph, config.epsilon)
    network = SyncNetwork(graph=graph, w=weights.w)
    x_star = _ensure_reference(problem)
    alpha = _resolve_alpha(config)
    states = init_ecdqn_states(
        problem, network, alpha, config.b0_spectrum, config.seed, x0
    )
    a_mat, b_vec = problem.constraint
    rec = _Recorder(problem, x_star, track_z=False)
    executor = ThreadPoolExecutor(max_workers=min(8, problem.n_agents)) if config.parallel else None

    def snapshot(sts):
        x = np.stack([st.x for st in sts])
        return rec.record(
            x,
            np.stack([st.v for st in sts]),
            np.stack([st.last_gradient for st in sts]),
            network.sent_bytes,
            feas=np.linalg.norm(x @ a_mat.T - b_vec, axis=1),
            beta=np.stack([np.linalg.norm(st.beta) for st in sts]),
        )

    converged = diverged = stalled = False
    stall_run = 0
    try:
        worst = snapshot(states)
        if worst <= config.rse_tol:
            converged = True
        else:
            for _ in range(config.max_iters):
                x_prev = np.stack([st.x for st in states])
                try:
                    states = ecdqn_step(
                        network,
                        states,
                        problem,
                        config.scheme,
                        config.eig_floor,
                        config.eig_ceiling,
                        config.fusion,
                        executor,
                    )
                except DivergedError:
                    diverged = True
                    break
                worst = snapshot(states)
                if worst <= config.rse_tol:
                    converged = True
                    break
                move = float(
                    np.max(np.linalg.norm(np.stack([st.x for st in states]) - x_prev, axis=1))
                )
                stall_run = stall_run + 1 if move <= config.stall_tol else 0
                if stall_run >= config.stall_rounds:
                    stalled = True
                    break
    finally:
        if executor is not None:
            executor.shutdown()
    trace = rec.build(
        f"ecdqn-{config.scheme}",
        problem.n_agents,
        problem.dim,
        alpha,
        converged=converged,
        diverged=diverged,
        stalled=stalled,
        scheme=config.scheme,
        fusion=config.fusion,
        rse_tol=config.rse_tol,
    )
    trace.x_final = np.stack([st.x for st in states])
    trace.wall_time_ms = (time.perf_counter() - start) * 1e3
    return trace
