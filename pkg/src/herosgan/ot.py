"""Entropic optimal transport between feature sets, and the OT supervision loss."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .autodiff import Node, as_node


class DegenerateFeatureError(ValueError):
    """A feature row (or a plan row/column) carries no usable mass or direction."""


class NumericError(ArithmeticError):
    pass


class SinkhornWarning(RuntimeWarning):
    pass


def _lse(a: np.ndarray, axis: int) -> np.ndarray:
    m = a.max(axis=axis, keepdims=True)
    return (m + np.log(np.exp(a - m).sum(axis=axis, keepdims=True))).squeeze(axis)


_ABSORB = 50.0


@dataclass(frozen=True)
class TransportPlan:
    gamma: np.ndarray
    row_marginal: np.ndarray
    col_marginal: np.ndarray
    iterations: int
    residual: float
    converged: bool


def _unit_rows(F: np.ndarray, name: str) -> np.ndarray:
    norms = np.linalg.norm(F, axis=1, keepdims=True)
    if np.any(norms < 1e-12):
        bad = int(np.argmin(norms[:, 0]))
        raise DegenerateFeatureError(f"{name} row {bad} has zero norm")
    return F / norms


def cost_matrix(F_L, F_H) -> np.ndarray:
    """C[i, j] = exp(1 - <f_Li, f_Hj>) on L2-normalized rows, so C lies in [1, e^2]."""
    F_L = np.asarray(getattr(F_L, "data", F_L), dtype=np.float64)
    F_H = np.asarray(getattr(F_H, "data", F_H), dtype=np.float64)
    if F_L.ndim != 2 or F_L.shape != F_H.shape:
        raise ValueError(f"feature sets must both be N x d, got {F_L.shape} and {F_H.shape}")
    sim = _unit_rows(F_L, "F_L") @ _unit_rows(F_H, "F_H").T
    return np.exp(1.0 - np.clip(sim, -1.0, 1.0))


def sinkhorn(C, eps: float = 0.05, max_iter: int = 500, tol: float = 1e-6) -> TransportPlan:
    """Log-stabilized Sinkhorn with uniform marginals.

    The plan is ``exp((f_i + g_j - C_ij) / eps) * u_i * v_j``: scaling vectors
    u, v are iterated with matrix-vector products and folded into the log
    potentials f, g whenever they drift past ``exp(+-_ABSORB)``, so no
    intermediate over- or underflows.  Stops once the larger marginal error
    drops below ``tol``; hitting ``max_iter`` first returns the current plan with
    ``converged=False`` and issues a :class:`SinkhornWarning`.
    """
    C = np.asarray(C, dtype=np.float64)
    if C.ndim != 2:
        raise ValueError(f"cost must be a matrix, got shape {C.shape}")
    if not eps > 0:
        raise ValueError(f"eps must be > 0, got {eps}")
    n, m = C.shape
    r = np.full(n, 1.0 / n)
    c = np.full(m, 1.0 / m)
    # one exact log-domain sweep makes the working kernel well scaled
    f = eps * (np.log(r) - _lse(-C / eps, axis=1))
    g = eps * (np.log(c) - _lse((f[:, None] - C) / eps, axis=0))
    K = np.exp((f[:, None] + g[None, :] - C) / eps)
    u = np.ones(n)
    v = np.ones(m)
    residual = math.inf
    it = 0
    while it < max_iter:
        it += 1
        u = r / (K @ v)
        # rows are exact after the u update, so the column error is the
        # plan's full residual; it falls out of the v update for free
        ktu = K.T @ u
        residual = float(np.abs(v * ktu - c).max())
        if not math.isfinite(residual):
            raise NumericError("sinkhorn produced a non-finite plan")
        if residual < tol:
            break
        v = c / ktu
        if np.abs(np.log(u)).max() > _ABSORB or np.abs(np.log(v)).max() > _ABSORB:
            f += eps * np.log(u)
            g += eps * np.log(v)
            K = np.exp((f[:, None] + g[None, :] - C) / eps)
            u = np.ones(n)
            v = np.ones(m)
    gamma = u[:, None] * K * v[None, :]
    if not np.all(np.isfinite(gamma)):
        raise NumericError("sinkhorn produced a non-finite plan")
    residual = max(
        float(np.abs(gamma.sum(axis=1) - r).max()),
        float(np.abs(gamma.sum(axis=0) - c).max()),
    )
    converged = residual < tol
    if not converged:
        warnings.warn(
            f"sinkhorn stopped after {it} iterations with residual {residual:.3g}",
            SinkhornWarning,
            stacklevel=2,
        )
    return TransportPlan(gamma, r, c, it, residual, converged)


def barycentric_map(plan: TransportPlan | np.ndarray, F, direction: str = "forward") -> np.ndarray:
    """Plan-weighted average of target rows.

    ``forward`` sends each row i to ``sum_j g[i, j] F[j] / sum_j g[i, j]`` (F indexed
    by plan columns); ``inverse`` uses the transposed plan.  The plan is a
    constant here: the result carries no gradient.
    """
    gamma = plan.gamma if isinstance(plan, TransportPlan) else np.asarray(plan, dtype=np.float64)
    if direction == "inverse":
        gamma = gamma.T
    elif direction != "forward":
        raise ValueError(f"direction must be 'forward' or 'inverse', got {direction!r}")
    F = np.asarray(getattr(F, "data", F), dtype=np.float64)
    mass = gamma.sum(axis=1, keepdims=True)
    if np.any(mass <= 0.0):
        raise DegenerateFeatureError("transport plan has a row with zero mass")
    return (gamma @ F) / mass


def ots_loss(
    F_GL,
    F_GH,
    F_L,
    F_H,
    eps: float = 0.05,
    max_iter: int = 500,
    tol: float = 1e-6,
    plan: TransportPlan | None = None,
) -> tuple[Node, TransportPlan]:
    """Mean over rows of ||F_GL - T(F_H)||^2 + ||F_GH - T^-1(F_L)||^2.

    The plan is solved on (F_L, F_H) unless one is supplied; it is never
    differentiated.  Gradients flow into F_GL and F_GH when they are nodes.
    """
    F_GL, F_GH = as_node(F_GL), as_node(F_GH)
    for name, F in (("F_GL", F_GL), ("F_GH", F_GH)):
        if F.shape != np.shape(getattr(F_L, "data", F_L)):
            raise ValueError(f"{name} has shape {F.shape}, expected {np.shape(F_L)}")
    if plan is None:
        plan = sinkhorn(cost_matrix(F_L, F_H), eps=eps, max_iter=max_iter, tol=tol)
    target_l = barycentric_map(plan, F_H, "forward")
    target_h = barycentric_map(plan, F_L, "inverse")
    dl = F_GL - target_l
    dh = F_GH - target_h
    loss = (dl * dl).sum(axis=1).mean() + (dh * dh).sum(axis=1).mean()
    return loss, plan
