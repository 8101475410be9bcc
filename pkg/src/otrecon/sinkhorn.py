"""Entropic optimal transport and the de-biased divergence between point clouds.

Formulation
-----------
For empirical measures a = sum_i a_i delta_{x_i}, b = sum_j b_j delta_{y_j} and
cost C_ij = |x_i - y_j|^2, the regularized transport value is

    OT_eps(a, b) = min_pi <pi, C> + eps * KL(pi | a x b).

Dual potentials are found by log-domain fixed-point iterations

    f_i = -eps * logsumexp_j(log b_j + (g_j - C_ij) / eps)

(and symmetrically for g).  The loop always ends with an f-update, which makes
the row marginals of the implied plan exact, so the dual value reduces to

    OT_eps(a, b) = sum_i a_i f_i + sum_j b_j g_j

with no residual correction term.  The same convention is used for all three
terms of the de-biased divergence

    S_eps(a, b) = OT_eps(a, b) - OT_eps(a, a) / 2 - OT_eps(b, b) / 2.

Self terms use symmetric (averaged) updates, so S_eps(a, a) is exactly zero.
With this convention OT_eps(delta_x, delta_y) = |x - y|^2 with no entropic
constant.  All internal arithmetic is float64.

Gradients follow the envelope theorem: potentials are held fixed at their
converged values and only the explicit dependence of C on the points is
differentiated, i.e. d OT / d C_ij equals the plan entry pi_ij.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ContractError, NumericInputError

__all__ = [
    "EmpiricalMeasure",
    "SinkhornConfig",
    "SinkhornResult",
    "PotentialSolve",
    "sinkhorn_potentials",
    "sinkhorn_divergence",
    "sinkhorn_divergence_grad",
    "sinkhorn_divergence_with_grads",
]

# keeps exp() finite when potentials have not converged; inactive at convergence
_EXP_CLAMP = 60.0


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Weighted point cloud; weights default to uniform and must sum to 1."""

    points: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise ContractError(f"points must be (n, M) with n >= 1, got {pts.shape}")
        if not np.isfinite(pts).all():
            raise NumericInputError("measure points contain non-finite values")
        if self.weights is None:
            w = np.full(pts.shape[0], 1.0 / pts.shape[0], dtype=np.float64)
        else:
            w = np.asarray(self.weights, dtype=np.float64)
            if w.shape != (pts.shape[0],):
                raise ContractError(f"weights shape {w.shape} != ({pts.shape[0]},)")
            if not np.isfinite(w).all():
                raise NumericInputError("weights contain non-finite values")
            if (w <= 0).any():
                raise ContractError("all weights must be > 0")
            if abs(w.sum() - 1.0) > 1e-9:
                raise ContractError(f"weights sum to {w.sum()!r}, expected 1")
        pts = pts.copy()
        pts.flags.writeable = False
        w = w.copy()
        w.flags.writeable = False
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class SinkhornConfig:
    epsilon: float = 0.05
    max_iters: int = 500
    tolerance: float = 1e-6
    cost: str = "squared_euclidean"

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ContractError(f"epsilon must be > 0, got {self.epsilon}")
        if self.max_iters < 1:
            raise ContractError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.tolerance <= 0:
            raise ContractError(f"tolerance must be > 0, got {self.tolerance}")
        if self.cost != "squared_euclidean":
            raise ContractError(f"unsupported cost {self.cost!r}")


@dataclass(frozen=True)
class SinkhornResult:
    ot_ab: float
    ot_aa: float
    ot_bb: float
    divergence: float
    f: np.ndarray
    g: np.ndarray
    iterations_used: int
    converged: bool

    def to_json(self) -> dict:
        return {
            "ot_ab": self.ot_ab,
            "ot_aa": self.ot_aa,
            "ot_bb": self.ot_bb,
            "divergence": self.divergence,
            "f": self.f.tolist(),
            "g": self.g.tolist(),
            "iterations_used": self.iterations_used,
            "converged": self.converged,
        }


class PotentialSolve(NamedTuple):
    f: np.ndarray
    g: np.ndarray
    converged: bool
    iterations: int


def cost_matrix(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances, (n, m)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    sq = ((x[:, None, :] - y[None, :, :]) ** 2).sum(axis=2)
    return np.maximum(sq, 0.0)


def _lse(s: np.ndarray, axis: int) -> np.ndarray:
    m = s.max(axis=axis, keepdims=True)
    return (m + np.log(np.exp(s - m).sum(axis=axis, keepdims=True))).squeeze(axis)


def _softmin_rows(kernel_cols: np.ndarray, pot: np.ndarray, eps: float) -> np.ndarray:
    """-eps * LSE_j(kernel_cols_ij + pot_j / eps); kernel_cols = log w_j - C_ij/eps."""
    return -eps * _lse(kernel_cols + pot[None, :] / eps, axis=1)


def sinkhorn_potentials(
    a: EmpiricalMeasure, b: EmpiricalMeasure, cfg: SinkhornConfig
) -> PotentialSolve:
    """Alternating log-domain updates for the cross problem OT_eps(a, b).

    Iterates g-then-f (ending on f, so the implied plan has exact row
    marginals), stops when the largest potential change drops below
    cfg.tolerance, and recenters the potentials so <a,f> == <b,g>.
    Non-convergence is reported through the flag, never raised.
    """
    if a.dim != b.dim:
        raise ContractError(f"point dims differ: {a.dim} vs {b.dim}")
    cost = cost_matrix(a.points, b.points)
    eps = cfg.epsilon
    ker_b = np.log(b.weights)[None, :] - cost / eps  # rows: softmin targets for f
    ker_a = np.log(a.weights)[None, :] - cost.T / eps  # rows: softmin targets for g
    f = np.zeros(a.n)
    g = np.zeros(b.n)
    converged = False
    iterations = 0
    for iterations in range(1, cfg.max_iters + 1):
        g_new = _softmin_rows(ker_a, f, eps)
        f_new = _softmin_rows(ker_b, g_new, eps)
        delta = max(np.abs(f_new - f).max(), np.abs(g_new - g).max())
        f, g = f_new, g_new
        if delta < cfg.tolerance:
            converged = True
            break
    shift = 0.5 * (float(a.weights @ f) - float(b.weights @ g))
    return PotentialSolve(f - shift, g + shift, converged, iterations)


def _symmetric_potential(m: EmpiricalMeasure, cfg: SinkhornConfig):
    """Averaged fixed-point updates for the self problem OT_eps(m, m); f == g."""
    eps = cfg.epsilon
    ker = np.log(m.weights)[None, :] - cost_matrix(m.points, m.points) / eps
    f = np.zeros(m.n)
    converged = False
    iterations = 0
    for iterations in range(1, cfg.max_iters + 1):
        f_new = 0.5 * (f + _softmin_rows(ker, f, eps))
        delta = np.abs(f_new - f).max()
        f = f_new
        if delta < cfg.tolerance:
            converged = True
            break
    return f, converged, iterations


def _dual_value(a: EmpiricalMeasure, b: EmpiricalMeasure, f, g) -> float:
    return float(a.weights @ f + b.weights @ g)


def _measures_equal(a: EmpiricalMeasure, b: EmpiricalMeasure) -> bool:
    return (
        a.points.shape == b.points.shape
        and np.array_equal(a.points, b.points)
        and np.array_equal(a.weights, b.weights)
    )


def sinkhorn_divergence(
    a: EmpiricalMeasure, b: EmpiricalMeasure, cfg: SinkhornConfig
) -> SinkhornResult:
    """All three OT_eps terms under one config, assembled into S_eps.

    ``iterations_used`` counts the cross-problem iterations; ``converged`` is
    true only if the cross and both self problems all converged.  When a and b
    are the same measure the cross term reuses the symmetric solve, making the
    divergence exactly zero.
    """
    f_aa, conv_aa, _ = _symmetric_potential(a, cfg)
    ot_aa = _dual_value(a, a, f_aa, f_aa)
    if _measures_equal(a, b):
        return SinkhornResult(
            ot_ab=ot_aa,
            ot_aa=ot_aa,
            ot_bb=ot_aa,
            divergence=0.0,
            f=f_aa,
            g=f_aa.copy(),
            iterations_used=0,
            converged=conv_aa,
        )
    f_bb, conv_bb, _ = _symmetric_potential(b, cfg)
    ot_bb = _dual_value(b, b, f_bb, f_bb)
    solve = sinkhorn_potentials(a, b, cfg)
    ot_ab = _dual_value(a, b, solve.f, solve.g)
    return SinkhornResult(
        ot_ab=ot_ab,
        ot_aa=ot_aa,
        ot_bb=ot_bb,
        divergence=ot_ab - 0.5 * ot_aa - 0.5 * ot_bb,
        f=solve.f,
        g=solve.g,
        iterations_used=solve.iterations,
        converged=solve.converged and conv_aa and conv_bb,
    )


def _plan(f, g, cost, wa, wb, eps) -> np.ndarray:
    expo = (f[:, None] + g[None, :] - cost) / eps
    return wa[:, None] * wb[None, :] * np.exp(np.minimum(expo, _EXP_CLAMP))


def _cross_term_grad(points_a, points_b, plan) -> np.ndarray:
    """d<plan, C>/d points_a for fixed plan, C_ij = |x_i - y_j|^2."""
    row = plan.sum(axis=1)
    return 2.0 * (points_a * row[:, None] - plan @ points_b)


def _self_term_grad(points, plan) -> np.ndarray:
    sym = plan + plan.T
    row = sym.sum(axis=1)
    return 2.0 * (points * row[:, None] - sym @ points)


def sinkhorn_divergence_with_grads(
    a: EmpiricalMeasure, b: EmpiricalMeasure, cfg: SinkhornConfig
):
    """Divergence plus envelope gradients w.r.t. both point sets.

    Returns (result, grad_a, grad_b) with grad_* shaped like the point arrays.
    Gradients are exact at convergence; with unconverged potentials they are
    the same fixed-potential approximation, flagged via result.converged.
    """
    result = sinkhorn_divergence(a, b, cfg)
    eps = cfg.epsilon
    if _measures_equal(a, b):
        zero = np.zeros_like(a.points)
        return result, zero, zero.copy()
    cost_ab = cost_matrix(a.points, b.points)
    plan_ab = _plan(result.f, result.g, cost_ab, a.weights, b.weights, eps)
    f_aa, _, _ = _symmetric_potential(a, cfg)
    f_bb, _, _ = _symmetric_potential(b, cfg)
    plan_aa = _plan(f_aa, f_aa, cost_matrix(a.points, a.points), a.weights, a.weights, eps)
    plan_bb = _plan(f_bb, f_bb, cost_matrix(b.points, b.points), b.weights, b.weights, eps)
    grad_a = _cross_term_grad(a.points, b.points, plan_ab) - 0.5 * _self_term_grad(
        a.points, plan_aa
    )
    grad_b = _cross_term_grad(b.points, a.points, plan_ab.T) - 0.5 * _self_term_grad(
        b.points, plan_bb
    )
    return result, grad_a, grad_b


def sinkhorn_divergence_grad(
    a: EmpiricalMeasure, b: EmpiricalMeasure, cfg: SinkhornConfig
) -> np.ndarray:
    """Gradient of S_eps(a, b) with respect to a's points (envelope theorem)."""
    _, grad_a, _ = sinkhorn_divergence_with_grads(a, b, cfg)
    return grad_a
