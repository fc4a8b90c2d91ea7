"""Curvature-pair updates for Hessian and inverse-Hessian estimates.

Both update families come in an inverse form (estimate of the inverse
Hessian, used by the unconstrained method) and a direct form (estimate of
the Hessian itself, used inside saddle-point solves).  Every accepted
update preserves symmetry and positive definiteness and satisfies the
secant equation for its pair.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "CurvaturePair",
    "InverseHessianEstimate",
    "HessianEstimate",
    "CurvatureError",
    "curvature_ok",
    "bfgs_inverse_update",
    "dfp_inverse_update",
    "bfgs_hessian_update",
    "dfp_hessian_update",
    "pd_safeguard",
]

# pairs with y's = 0 carry no curvature information; anything below this
# relative threshold is skipped rather than risking a blow-up
CURVATURE_RTOL = 1e-10

DEFAULT_GAMMA = 1e3
DEFAULT_FLOOR = 1e-8


class CurvatureError(ValueError):
    """Raised when a pair fails the curvature condition; callers keep the
    previous estimate."""


@dataclass(frozen=True)
class CurvaturePair:
    """Step difference s and gradient (or tracker) difference y."""

    s: np.ndarray
    y: np.ndarray

    def __post_init__(self) -> None:
        s = np.asarray(self.s, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if s.shape != y.shape or s.ndim != 1:
            raise ValueError("s and y must be vectors of equal length")
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "y", y)


@dataclass(frozen=True)
class InverseHessianEstimate:
    """Symmetric positive definite estimate of an inverse Hessian.

    gamma is the eigenvalue ceiling enforced by the safeguard; it also
    bounds the step energy a single agent can inject per round.
    """

    c: np.ndarray
    gamma: float = DEFAULT_GAMMA


@dataclass(frozen=True)
class HessianEstimate:
    """Symmetric positive definite estimate of a Hessian."""

    b: np.ndarray


def curvature_ok(pair: CurvaturePair, rtol: float = CURVATURE_RTOL) -> bool:
    """True when y's is safely positive relative to |y||s|."""
    return float(pair.y @ pair.s) >= rtol * np.linalg.norm(pair.y) * np.linalg.norm(pair.s)


def _require_curvature(pair: CurvaturePair) -> float:
    rho = float(pair.y @ pair.s)
    if not curvature_ok(pair):
        raise CurvatureError(f"y's = {rho:.3e} fails the curvature condition")
    return rho


def _sym(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


def bfgs_inverse_update(est: InverseHessianEstimate, pair: CurvaturePair) -> InverseHessianEstimate:
    """Rank-two inverse-Hessian update C' = (I - sy'/r) C (I - ys'/r) + ss'/r
    with r = y's.  The result maps y to s exactly."""
    rho = _require_curvature(pair)
    s, y = pair.s, pair.y
    n = s.size
    a = np.eye(n) - np.outer(s, y) / rho
    c_new = a @ est.c @ a.T + np.outer(s, s) / rho
    return InverseHessianEstimate(c=_sym(c_new), gamma=est.gamma)


def dfp_inverse_update(est: InverseHessianEstimate, pair: CurvaturePair) -> InverseHessianEstimate:
    """Rank-two inverse-Hessian update C' = C - Cyy'C/(y'Cy) + ss'/(y's)."""
    rho = _require_curvature(pair)
    s, y = pair.s, pair.y
    cy = est.c @ y
    denom = float(y @ cy)
    if denom <= 0:
        raise CurvatureError("y'Cy is not positive; estimate lost definiteness")
    c_new = est.c - np.outer(cy, cy) / denom + np.outer(s, s) / rho
    return InverseHessianEstimate(c=_sym(c_new), gamma=est.gamma)


def bfgs_hessian_update(est: HessianEstimate, pair: CurvaturePair) -> HessianEstimate:
    """Direct-form update B' = B - Bss'B/(s'Bs) + yy'/(y's); inverse of the
    inverse-form update applied to B^-1."""
    rho = _require_curvature(pair)
    s, y = pair.s, pair.y
    bs = est.b @ s
    denom = float(s @ bs)
    if denom <= 0:
        raise CurvatureError("s'Bs is not positive; estimate lost definiteness")
    b_new = est.b - np.outer(bs, bs) / denom + np.outer(y, y) / rho
    return HessianEstimate(b=_sym(b_new))


def dfp_hessian_update(est: HessianEstimate, pair: CurvaturePair) -> HessianEstimate:
    """Direct-form update B' = (I - ys'/r) B (I - sy'/r) + yy'/r with r = y's."""
    rho = _require_curvature(pair)
    s, y = pair.s, pair.y
    n = s.size
    a = np.eye(n) - np.outer(y, s) / rho
    b_new = a @ est.b @ a.T + np.outer(y, y) / rho
    return HessianEstimate(b=_sym(b_new))


def pd_safeguard(matrix: np.ndarray, floor: float = DEFAULT_FLOOR, ceiling: float | None = None) -> np.ndarray:
    """Clamp the spectrum of a symmetric matrix into [floor, ceiling].

    Full eigendecomposition; intended as the fallback when a cheap
    definiteness check fails, not as a per-iteration hot path.
    """
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValueError("expected a square matrix")
    scale = max(1.0, float(np.max(np.abs(matrix))))
    if np.max(np.abs(matrix - matrix.T)) > 1e-8 * scale:
        raise ValueError("matrix is not symmetric")
    if ceiling is not None and ceiling < floor:
        raise ValueError("ceiling below floor")
    vals, vecs = np.linalg.eigh(_sym(matrix))
    vals = np.clip(vals, floor, ceiling)
    return _sym((vecs * vals) @ vecs.T)
