"""Separable benchmark problems split across agents.

Each agent owns one local objective; the network-wide objective is the
mean of the local ones, optionally subject to a shared linear equality
constraint.  Three generator families are provided: least-squares
quadratics with a controlled aggregate condition number, binary logistic
regression, and l1-regularized least squares (basis pursuit) whose local
data matrices are rank deficient.

Reference solutions are computed centrally to high accuracy so that
distributed runs can report the relative error of every agent's iterate.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

__all__ = [
    "LocalObjective",
    "SeparableProblem",
    "QpLocalData",
    "LogRegLocalData",
    "BasisPursuitLocalData",
    "qp_family",
    "logreg_family",
    "basis_pursuit_family",
    "solve_reference",
    "save_problem",
    "load_problem",
]


@dataclass(frozen=True)
class LocalObjective:
    """One agent's objective: a value callable, its gradient, and metadata.

    For nonsmooth objectives the gradient callable returns a subgradient
    and ``smooth`` is False; finite-difference checks then avoid kinks.
    """

    dim: int
    value: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    smoothness_bound: float | None = None
    smooth: bool = True


@dataclass
class SeparableProblem:
    """A mean-of-locals objective with an optional equality constraint."""

    locals: list[LocalObjective]
    constraint: tuple[np.ndarray, np.ndarray] | None = None
    reference_solution: np.ndarray | None = None
    family: str = "custom"
    local_data: list | None = None
    xi: float | None = None
    seed: int | None = None
    achieved_cond: float | None = None

    def __post_init__(self) -> None:
        if not self.locals:
            raise ValueError("need at least one local objective")
        dims = {loc.dim for loc in self.locals}
        if len(dims) != 1:
            raise ValueError("all local objectives must share one dimension")
        if self.constraint is not None:
            a, b = self.constraint
            a = np.asarray(a, dtype=float)
            b = np.asarray(b, dtype=float)
            if a.ndim != 2 or a.shape[1] != self.dim or b.shape != (a.shape[0],):
                raise ValueError("constraint shapes do not match the problem")
            if a.shape[0] > self.dim:
                raise ValueError("more constraints than variables")
            if np.linalg.matrix_rank(a) < a.shape[0]:
                raise ValueError("constraint matrix must have full row rank")
            self.constraint = (a, b)

    @property
    def n_agents(self) -> int:
        return len(self.locals)

    @property
    def dim(self) -> int:
        return self.locals[0].dim

    def objective_value(self, x: np.ndarray) -> float:
        """Mean of the local objective values at x."""
        return sum(loc.value(x) for loc in self.locals) / self.n_agents

    def mean_gradient(self, x: np.ndarray) -> np.ndarray:
        """Mean of the local gradients at x."""
        g = np.zeros(self.dim)
        for loc in self.locals:
            g += loc.gradient(x)
        return g / self.n_agents

    def smoothness(self) -> float | None:
        """Smoothness bound for the mean objective, if every local has one."""
        bounds = [loc.smoothness_bound for loc in self.locals]
        if any(b is None for b in bounds):
            return None
        return float(np.mean(bounds))


# ---------------------------------------------------------------------------
# per-family local data


@dataclass(frozen=True)
class QpLocalData:
    """Quadratic local objective 0.5 x'Px + q'x with generator internals."""

    p: np.ndarray
    q: np.ndarray
    a: np.ndarray | None = None
    b: np.ndarray | None = None


@dataclass(frozen=True)
class LogRegLocalData:
    """Logistic samples plus this agent's share of the ridge weight."""

    features: np.ndarray
    labels: np.ndarray
    reg: float


@dataclass(frozen=True)
class BasisPursuitLocalData:
    """Rank-deficient least-squares block plus this agent's l1 weight."""

    a: np.ndarray
    b: np.ndarray
    l1: float


def _expit(t: np.ndarray) -> np.ndarray:
    # numerically stable logistic function
    out = np.empty_like(t, dtype=float)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    et = np.exp(t[~pos])
    out[~pos] = et / (1.0 + et)
    return out


def _qp_local(data: QpLocalData) -> LocalObjective:
    p, q = data.p, data.q

    def value(x: np.ndarray) -> float:
        return float(0.5 * x @ p @ x + q @ x)

    def gradient(x: np.ndarray) -> np.ndarray:
        return p @ x + q

    bound = float(np.linalg.eigvalsh(p)[-1])
    return LocalObjective(dim=q.size, value=value, gradient=gradient, smoothness_bound=bound)


def _logreg_local(data: LogRegLocalData) -> LocalObjective:
    feats, labels, reg = data.features, data.labels, data.reg

    def value(x: np.ndarray) -> float:
        z = labels * (feats @ x)
        return float(0.5 * reg * x @ x + np.sum(np.logaddexp(0.0, -z)))

    def gradient(x: np.ndarray) -> np.ndarray:
        z = labels * (feats @ x)
        return reg * x - feats.T @ (labels * _expit(-z))

    bound = reg + 0.25 * float(np.linalg.eigvalsh(feats.T @ feats)[-1])
    return LocalObjective(dim=feats.shape[1], value=value, gradient=gradient, smoothness_bound=bound)


def _bp_local(data: BasisPursuitLocalData) -> LocalObjective:
    a, b, l1 = data.a, data.b, data.l1

    def value(x: np.ndarray) -> float:
        r = a @ x - b
        return float(0.5 * r @ r + l1 * np.sum(np.abs(x)))

    def gradient(x: np.ndarray) -> np.ndarray:
        # subgradient; sign(0) = 0 picks the zero element of the subdifferential
        return a.T @ (a @ x - b) + l1 * np.sign(x)

    bound = float(np.linalg.eigvalsh(a.T @ a)[-1])
    return LocalObjective(
        dim=a.shape[1], value=value, gradient=gradient, smoothness_bound=bound, smooth=False
    )


def _local_hessian(data, x: np.ndarray) -> np.ndarray:
    """Exact local Hessian (smooth part only for basis pursuit)."""
    if isinstance(data, QpLocalData):
        return data.p
    if isinstance(data, LogRegLocalData):
        z = data.labels * (data.features @ x)
        sig = _expit(z)
        w = sig * (1.0 - sig)
        return data.reg * np.eye(x.size) + (data.features.T * w) @ data.features
    if isinstance(data, BasisPursuitLocalData):
        return data.a.T @ data.a
    raise TypeError(f"no Hessian rule for {type(data).__name__}")


# ---------------------------------------------------------------------------
# generators


def _draw_constraint(rng: np.random.Generator, dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Random equality constraint with orthonormal rows and a feasible rhs."""
    hi = max(2, dim // 4)
    m = int(rng.integers(2, hi + 1))
    raw = rng.standard_normal((m, dim))
    q_mat, _ = np.linalg.qr(raw.T)
    f = q_mat[:, :m].T
    x_feas = rng.standard_normal(dim)
    return f, f @ x_feas


def _resolve_constraint(constraint, rng: np.random.Generator, dim: int):
    if constraint is None or constraint is False:
        return None
    if constraint is True:
        return _draw_constraint(rng, dim)
    a, b = constraint
    return np.asarray(a, dtype=float), np.asarray(b, dtype=float)


def _conditioning_transform(
    p_total: np.ndarray, cond_range: tuple[float, float], rng: np.random.Generator
) -> np.ndarray:
    """Symmetric right factor M such that cond(M' P M) lands in cond_range.

    Raising the aggregate to a matrix power rescales its spectrum without
    touching the eigenbasis: cond(P^(1-eta)) = cond(P)^(1-eta), so the
    target is hit exactly (up to roundoff) by solving for the exponent.
    """
    lo, hi = cond_range
    if not 1.0 <= lo <= hi:
        raise ValueError("condition range must satisfy 1 <= lo <= hi")
    vals, vecs = np.linalg.eigh(p_total)
    lam_max = float(vals[-1])
    lam_min = float(vals[0])
    if lam_min <= 1e-12 * lam_max:
        raise ValueError("aggregate matrix is numerically singular; add more rows")
    target = lo * (hi / lo) ** rng.uniform() if hi > lo else float(lo)
    cond0 = lam_max / lam_min
    if abs(np.log(cond0)) < 1e-12:
        raise ValueError("aggregate spectrum is flat; cannot reshape conditioning")
    eta = 1.0 - np.log(target) / np.log(cond0)
    new_vals = vals ** (-eta / 2.0)
    return (vecs * new_vals) @ vecs.T


def qp_family(
    n_agents: int, dim: int, cond_range: tuple[float, float], seed: int
) -> SeparableProblem:
    """Random separable quadratics with a chosen aggregate conditioning.

    Each agent holds a short stack of Gaussian rows, so local curvature is
    rank deficient while the aggregate is positive definite.  The aggregate
    spectrum is reshaped so its condition number falls inside cond_range,
    and the whole family is rescaled so the mean objective has smoothness
    constant 1.

    Row counts per agent scale with the dimension (roughly dim/8 up to
    3 dim/4 rows), so local blocks stay far from full rank.
    """
    if dim < 2:
        raise ValueError("conditioning control needs dim >= 2")
    rng = np.random.default_rng(seed)
    m_lo = max(1, round(5 * dim / 40))
    m_hi = max(m_lo + 1, round(30 * dim / 40))
    if n_agents * (m_hi - 1) < dim + 2:
        raise ValueError(
            "too few agents to assemble a positive definite aggregate at this dimension"
        )
    while True:
        counts = rng.integers(m_lo, m_hi, size=n_agents)
        if counts.sum() >= dim + 2:
            break
    rows = [rng.standard_normal((int(m), dim)) for m in counts]
    rhs = [rng.standard_normal(int(m)) for m in counts]

    p_total = np.zeros((dim, dim))
    for a in rows:
        p_total += a.T @ a
    m_fac = _conditioning_transform(p_total, cond_range, rng)
    rows = [a @ m_fac for a in rows]

    p_locals = [a.T @ a for a in rows]
    p_total = sum(p_locals)
    scale = n_agents / float(np.linalg.eigvalsh(p_total)[-1])
    rows = [np.sqrt(scale) * a for a in rows]
    rhs = [np.sqrt(scale) * b for b in rhs]

    data = []
    for a, b in zip(rows, rhs):
        p = a.T @ a
        data.append(QpLocalData(p=0.5 * (p + p.T), q=-(a.T @ b), a=a, b=b))
    achieved = _aggregate_cond([d.p for d in data])
    lo, hi = cond_range
    if not lo * (1 - 1e-6) <= achieved <= hi * (1 + 1e-6):
        raise RuntimeError(f"conditioning landed at {achieved}, outside [{lo}, {hi}]")
    return SeparableProblem(
        locals=[_qp_local(d) for d in data],
        family="qp",
        local_data=data,
        seed=seed,
        achieved_cond=achieved,
    )


def _aggregate_cond(mats: list[np.ndarray]) -> float:
    vals = np.linalg.eigvalsh(sum(mats))
    return float(vals[-1] / vals[0])


def logreg_family(
    n_agents: int,
    dim: int,
    xi: float,
    seed: int,
    constraint: bool | tuple[np.ndarray, np.ndarray] | None = None,
) -> SeparableProblem:
    """Binary logistic regression split across agents.

    Every agent gets 5 to 29 labeled Gaussian samples; labels come from a
    planted separator with noisy margins.  The ridge term xi/2 ||x||^2 is
    split evenly, xi/(2 n_agents) per agent, so the aggregate matches the
    single ridge-regularized objective.  Pass constraint=True to attach a
    random orthonormal equality constraint, or give (F, e) explicitly.
    """
    if xi < 0:
        raise ValueError("xi must be nonnegative")
    rng = np.random.default_rng(seed)
    planted = rng.standard_normal(dim)
    data = []
    for _ in range(n_agents):
        m = int(rng.integers(5, 30))
        feats = rng.standard_normal((m, dim))
        margin = feats @ planted + 0.5 * rng.standard_normal(m)
        labels = np.where(margin >= 0, 1.0, -1.0)
        data.append(LogRegLocalData(features=feats, labels=labels, reg=xi / n_agents))
    cons = _resolve_constraint(constraint, rng, dim)
    return SeparableProblem(
        locals=[_logreg_local(d) for d in data],
        constraint=cons,
        family="logreg",
        local_data=data,
        xi=xi,
        seed=seed,
    )


def basis_pursuit_family(
    n_agents: int,
    dim: int,
    xi: float,
    seed: int,
    constraint: bool | tuple[np.ndarray, np.ndarray] = True,
    cond_range: tuple[float, float] | None = None,
) -> SeparableProblem:
    """l1-regularized least squares under a shared equality constraint.

    Each agent's data matrix has fewer rows than columns, so no local
    objective identifies the solution on its own.  Measurements are noisy
    projections of one shared dense signal, which keeps the constrained
    minimizer away from the kink set of the l1 term; an unstructured
    right-hand side occasionally pins a coordinate exactly at zero, where
    subgradient flips put a floor on the attainable error.  The l1 weight
    xi is split evenly across agents.  The constraint is mandatory; pass
    True to draw one from the seed.  cond_range optionally reshapes the
    aggregate Gram matrix exactly as in the quadratic family.
    """
    if constraint is None or constraint is False:
        raise ValueError("basis pursuit requires an equality constraint")
    if xi < 0:
        raise ValueError("xi must be nonnegative")
    rng = np.random.default_rng(seed)
    p_lo = max(1, dim // 5)
    if n_agents * (dim - 1) < dim + 2:
        raise ValueError(
            "too few agents to assemble a positive definite aggregate at this dimension"
        )
    while True:
        counts = rng.integers(p_lo, dim, size=n_agents)
        if counts.sum() >= dim + 2:
            break
    rows = [rng.standard_normal((int(m), dim)) for m in counts]

    if cond_range is not None:
        if dim < 2:
            raise ValueError("conditioning control needs dim >= 2")
        p_total = np.zeros((dim, dim))
        for a in rows:
            p_total += a.T @ a
        m_fac = _conditioning_transform(p_total, cond_range, rng)
        rows = [a @ m_fac for a in rows]
    p_total = np.zeros((dim, dim))
    for a in rows:
        p_total += a.T @ a
    scale = n_agents / float(np.linalg.eigvalsh(p_total)[-1])
    rows = [np.sqrt(scale) * a for a in rows]

    signal = rng.standard_normal(dim)
    rhs = [a @ signal + 0.1 * rng.standard_normal(a.shape[0]) for a in rows]
    data = [
        BasisPursuitLocalData(a=a, b=b, l1=xi / n_agents) for a, b in zip(rows, rhs)
    ]
    for d in data:
        if np.linalg.matrix_rank(d.a) >= dim:
            raise RuntimeError("local block unexpectedly reached full rank")
    cons = _resolve_constraint(constraint, rng, dim)
    achieved = _aggregate_cond([d.a.T @ d.a for d in data])
    if cond_range is not None:
        lo, hi = cond_range
        if not lo * (1 - 1e-6) <= achieved <= hi * (1 + 1e-6):
            raise RuntimeError(f"conditioning landed at {achieved}, outside [{lo}, {hi}]")
    return SeparableProblem(
        locals=[_bp_local(d) for d in data],
        constraint=cons,
        family="basis-pursuit",
        local_data=data,
        xi=xi,
        seed=seed,
        achieved_cond=achieved,
    )


# ---------------------------------------------------------------------------
# reference solvers


class ReferenceSolveError(RuntimeError):
    """Raised when no solver can certify a reference solution."""


def solve_reference(problem: SeparableProblem, tol: float = 1e-12) -> np.ndarray:
    """Compute and cache a centralized solution of the problem.

    Quadratic families reduce to (KKT) linear solves.  Smooth families use
    damped Newton iterations on the stationarity conditions.  The
    l1-regularized family is solved by an operator-splitting pass that
    identifies the active sign pattern, followed by a linear polish step
    and an exact optimality certificate.
    """
    if problem.family == "qp" and problem.local_data is not None:
        x = _solve_qp(problem, tol)
    elif problem.family == "logreg" and problem.local_data is not None:
        x = _solve_smooth_newton(problem, tol)
    elif problem.family == "basis-pursuit" and problem.local_data is not None:
        x = _solve_basis_pursuit(problem, tol)
    elif problem.constraint is None:
        x = _solve_generic_qn(problem, tol)
    else:
        raise ReferenceSolveError(
            f"no reference solver for constrained family {problem.family!r}"
        )
    problem.reference_solution = x
    return x


def _solve_qp(problem: SeparableProblem, tol: float) -> np.ndarray:
    p = sum(d.p for d in problem.local_data)
    q = sum(d.q for d in problem.local_data)
    if problem.constraint is None:
        return np.linalg.solve(p, -q)
    f, e = problem.constraint
    m = f.shape[0]
    kkt = np.block([[p, f.T], [f, np.zeros((m, m))]])
    sol = np.linalg.solve(kkt, np.concatenate([-q, e]))
    return sol[: problem.dim]


def _mean_hessian(problem: SeparableProblem, x: np.ndarray) -> np.ndarray:
    h = np.zeros((problem.dim, problem.dim))
    for d in problem.local_data:
        h += _local_hessian(d, x)
    return h / problem.n_agents


def _solve_smooth_newton(problem: SeparableProblem, tol: float) -> np.ndarray:
    """Damped Newton on the (possibly constrained) stationarity system."""
    n = problem.dim
    if problem.constraint is None:
        x = np.zeros(n)
        for _ in range(200):
            g = problem.mean_gradient(x)
            if np.linalg.norm(g) <= tol:
                return x
            h = _mean_hessian(problem, x)
            step = np.linalg.solve(h, -g)
            t = 1.0
            base = problem.objective_value(x)
            # backtracking keeps the early (far from quadratic) phase stable
            while t > 1e-12 and problem.objective_value(x + t * step) > base + 1e-4 * t * (g @ step):
                t *= 0.5
            x = x + t * step
        if np.linalg.norm(problem.mean_gradient(x)) <= 10 * tol:
            return x
        raise ReferenceSolveError("Newton iteration failed to reach the tolerance")

    f, e = problem.constraint
    m = f.shape[0]
    x, *_ = np.linalg.lstsq(f, e, rcond=None)
    beta = np.zeros(m)

    def residual(xv, bv):
        return np.concatenate([problem.mean_gradient(xv) + f.T @ bv, f @ xv - e])

    for _ in range(200):
        r = residual(x, beta)
        if np.linalg.norm(r) <= tol:
            return x
        h = _mean_hessian(problem, x)
        kkt = np.block([[h, f.T], [f, np.zeros((m, m))]])
        delta = np.linalg.solve(kkt, -r)
        t = 1.0
        base = np.linalg.norm(r)
        while t > 1e-12 and np.linalg.norm(residual(x + t * delta[:n], beta + t * delta[n:])) > (1 - 1e-4 * t) * base:
            t *= 0.5
        x = x + t * delta[:n]
        beta = beta + t * delta[n:]
    if np.linalg.norm(residual(x, beta)) <= 10 * tol:
        return x
    raise ReferenceSolveError("constrained Newton failed to reach the tolerance")


def _soft_threshold(v: np.ndarray, t: float) -> np.ndarray:
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def _solve_basis_pursuit(problem: SeparableProblem, tol: float) -> np.ndarray:
    p = sum(d.a.T @ d.a for d in problem.local_data)
    q = -sum(d.a.T @ d.b for d in problem.local_data)
    xi_total = problem.n_agents * problem.local_data[0].l1
    f, e = problem.constraint
    if xi_total == 0.0:
        m = f.shape[0]
        kkt = np.block([[p, f.T], [f, np.zeros((m, m))]])
        sol = np.linalg.solve(kkt, np.concatenate([-q, e]))
        return sol[: problem.dim]
    for iters in (2000, 20000, 100000):
        x = _bp_admm(p, q, xi_total, f, e, iters)
        polished = _bp_polish(p, q, xi_total, f, e, x)
        if polished is not None:
            return polished
    raise ReferenceSolveError("sign pattern of the l1 solution did not stabilize")


def _bp_admm(p, q, xi_total, f, e, iters):
    """Operator splitting on the constrained l1 problem; identifies signs."""
    n = q.size
    m = f.shape[0]
    rho = 1.0
    kkt = np.block([[p + rho * np.eye(n), f.T], [f, np.zeros((m, m))]])
    kkt_inv = np.linalg.inv(kkt)
    x, *_ = np.linalg.lstsq(f, e, rcond=None)
    z = x.copy()
    u = np.zeros(n)
    for it in range(iters):
        rhs = np.concatenate([rho * (z - u) - q, e])
        x = (kkt_inv @ rhs)[:n]
        z_new = _soft_threshold(x + u, xi_total / rho)
        u += x - z_new
        if it % 100 == 99:
            if max(np.linalg.norm(x - z_new), rho * np.linalg.norm(z_new - z)) < 1e-11:
                z = z_new
                break
        z = z_new
    return z


def _bp_polish(p, q, xi_total, f, e, x_rough):
    """Solve exactly on the detected support and certify optimality."""
    n = q.size
    m = f.shape[0]
    for _ in range(4):
        support = np.abs(x_rough) > 1e-9
        if support.sum() < m:
            return None
        signs = np.sign(x_rough[support])
        ps = p[np.ix_(support, support)]
        fs = f[:, support]
        kkt = np.block([[ps, fs.T], [fs, np.zeros((m, m))]])
        rhs = np.concatenate([-q[support] - xi_total * signs, e])
        try:
            sol = np.linalg.solve(kkt, rhs)
        except np.linalg.LinAlgError:
            return None
        x = np.zeros(n)
        x[support] = sol[: support.sum()]
        beta = sol[support.sum():]
        g = p @ x + q + f.T @ beta
        sign_consistent = np.all(np.sign(x[support]) == signs)
        stat_on = np.linalg.norm(g[support] + xi_total * signs) <= 1e-9 * (1 + np.linalg.norm(q))
        dual_off = np.all(np.abs(g[~support]) <= xi_total * (1 - 1e-9)) if (~support).any() else True
        feas = np.linalg.norm(f @ x - e) <= 1e-10 * (1 + np.linalg.norm(e))
        if sign_consistent and stat_on and dual_off and feas:
            return x
        x_rough = x
    return None


def _solve_generic_qn(problem: SeparableProblem, tol: float, max_iters: int = 5000) -> np.ndarray:
    """Centralized quasi-Newton fallback for unconstrained smooth problems."""
    n = problem.dim
    x = np.zeros(n)
    c = np.eye(n)
    g = problem.mean_gradient(x)
    for _ in range(max_iters):
        if np.linalg.norm(g) <= tol:
            return x
        step = -(c @ g)
        t = 1.0
        base = problem.objective_value(x)
        while t > 1e-14 and problem.objective_value(x + t * step) > base + 1e-4 * t * (g @ step):
            t *= 0.5
        x_new = x + t * step
        g_new = problem.mean_gradient(x_new)
        s = x_new - x
        y = g_new - g
        rho = y @ s
        if rho > 1e-10 * np.linalg.norm(y) * np.linalg.norm(s):
            a = np.eye(n) - np.outer(s, y) / rho
            c = a @ c @ a.T + np.outer(s, s) / rho
        x, g = x_new, g_new
    if np.linalg.norm(g) <= 10 * tol:
        return x
    raise ReferenceSolveError("quasi-Newton fallback failed to reach the tolerance")


# ---------------------------------------------------------------------------
# serialization

_FAMILY_BUILDERS = {
    "qp": _qp_local,
    "logreg": _logreg_local,
    "basis-pursuit": _bp_local,
}


def save_problem(problem: SeparableProblem, path: str | Path) -> None:
    if problem.local_data is None or problem.family not in _FAMILY_BUILDERS:
        raise ValueError("only generator-built problems can be serialized")
    locals_payload = []
    for d in problem.local_data:
        if isinstance(d, QpLocalData):
            locals_payload.append(
                {
                    "p": d.p.tolist(),
                    "q": d.q.tolist(),
                    "a": None if d.a is None else d.a.tolist(),
                    "b": None if d.b is None else d.b.tolist(),
                }
            )
        elif isinstance(d, LogRegLocalData):
            locals_payload.append(
                {"features": d.features.tolist(), "labels": d.labels.tolist(), "reg": d.reg}
            )
        else:
            locals_payload.append({"a": d.a.tolist(), "b": d.b.tolist(), "l1": d.l1})
    payload = {
        "family": problem.family,
        "n_agents": problem.n_agents,
        "dim": problem.dim,
        "seed": problem.seed,
        "xi": problem.xi,
        "achieved_cond": problem.achieved_cond,
        "constraint": None
        if problem.constraint is None
        else {"a": problem.constraint[0].tolist(), "b": problem.constraint[1].tolist()},
        "reference_solution": None
        if problem.reference_solution is None
        else problem.reference_solution.tolist(),
        "locals": locals_payload,
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def load_problem(path: str | Path) -> SeparableProblem:
    payload = json.loads(Path(path).read_text())
    family = payload["family"]
    if family not in _FAMILY_BUILDERS:
        raise ValueError(f"unknown problem family {family!r}")
    data: list = []
    for entry in payload["locals"]:
        if family == "qp":
            data.append(
                QpLocalData(
                    p=np.array(entry["p"], dtype=float),
                    q=np.array(entry["q"], dtype=float),
                    a=None if entry.get("a") is None else np.array(entry["a"], dtype=float),
                    b=None if entry.get("b") is None else np.array(entry["b"], dtype=float),
                )
            )
        elif family == "logreg":
            data.append(
                LogRegLocalData(
                    features=np.array(entry["features"], dtype=float),
                    labels=np.array(entry["labels"], dtype=float),
                    reg=float(entry["reg"]),
                )
            )
        else:
            data.append(
                BasisPursuitLocalData(
                    a=np.array(entry["a"], dtype=float),
                    b=np.array(entry["b"], dtype=float),
                    l1=float(entry["l1"]),
                )
            )
    constraint = payload.get("constraint")
    cons = (
        None
        if constraint is None
        else (np.array(constraint["a"], dtype=float), np.array(constraint["b"], dtype=float))
    )
    ref = payload.get("reference_solution")
    builder = _FAMILY_BUILDERS[family]
    return SeparableProblem(
        locals=[builder(d) for d in data],
        constraint=cons,
        reference_solution=None if ref is None else np.array(ref, dtype=float),
        family=family,
        local_data=data,
        xi=payload.get("xi"),
        seed=payload.get("seed"),
        achieved_cond=payload.get("achieved_cond"),
    )
