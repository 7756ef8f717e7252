"""Modulated Laplace energy regularizer for generator feature layers.

The Laplace energy of a feature vector is the sum of its squared discrete
second differences.  The regularizer squashes that energy through a sigmoid
and penalizes it with ``-log(e) - kappa * log(1 - e)``, whose minimum sits at
``e = 1 / (1 + kappa)``; kappa is the feature's kurtosis.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Node, absolute, as_node, exp, log
from .ot import DegenerateFeatureError

KAPPA_MIN = 0.1
KAPPA_MAX = 10.0


def laplace_energy(h):
    """Sum of squared second differences along the last axis.

    Accepts a numpy array (returns an array, or a float for 1-D input) or a
    Node (returns a Node with the last axis reduced).
    """
    is_node = isinstance(h, Node)
    x = h if is_node else np.asarray(h, dtype=np.float64)
    d = x.shape[-1]
    if d < 3:
        raise ValueError(f"laplace energy needs d >= 3, got {d}")
    lap = x[..., 2:] - 2.0 * x[..., 1:-1] + x[..., :-2]
    energy = (lap * lap).sum(axis=-1)
    if is_node:
        return energy
    return float(energy) if np.ndim(energy) == 0 else energy


def kurtosis_kappa(h, kappa_min: float = KAPPA_MIN, kappa_max: float = KAPPA_MAX) -> float:
    """Raw (non-excess) kurtosis m4 / m2^2, clamped to [kappa_min, kappa_max]."""
    h = np.asarray(getattr(h, "data", h), dtype=np.float64)
    if h.ndim != 1 or h.size < 4:
        raise ValueError(f"kurtosis needs a vector with d >= 4, got shape {h.shape}")
    c = h - h.mean()
    m2 = np.mean(c * c)
    if np.sqrt(m2) <= 1e-8:
        raise DegenerateFeatureError("feature vector has near-zero variance")
    m4 = np.mean(c**4)
    return float(np.clip(m4 / (m2 * m2), kappa_min, kappa_max))


def row_kappas(F, kappa_min: float = KAPPA_MIN, kappa_max: float = KAPPA_MAX) -> np.ndarray:
    """Per-row kappa with the kappa = 1 fallback for flat rows."""
    F = np.asarray(getattr(F, "data", F), dtype=np.float64)
    c = F - F.mean(axis=1, keepdims=True)
    m2 = np.mean(c * c, axis=1)
    m4 = np.mean(c**4, axis=1)
    flat = np.sqrt(m2) <= 1e-8
    kappa = np.clip(m4 / np.where(flat, 1.0, m2 * m2), kappa_min, kappa_max)
    return np.where(flat, 1.0, kappa)


def r_mle_normalized(e, kappa):
    """-log(e) - kappa * log(1 - e) for normalized energy e in (0, 1)."""
    e = np.asarray(e, dtype=np.float64)
    return -np.log(e) - kappa * np.log1p(-e)


def _softplus(z: Node) -> Node:
    # max(z, 0) + log(1 + exp(-|z|)), finite for any z
    az = absolute(z)
    return (z + az) * 0.5 + log(exp(-az) + 1.0)


def r_mle(E_raw, kappa, prescale: tuple[float, float] | None = None):
    """Regularizer value for raw Laplace energy ``E_raw``.

    With ``z = scale * E_raw + shift`` (identity by default) and e = sigmoid(z),
    ``-log(e) - kappa * log(1 - e) = (1 + kappa) * softplus(z) - z``; the
    right-hand form never evaluates log(0).  Returns a Node if ``E_raw`` is one.
    """
    is_node = isinstance(E_raw, Node)
    z = as_node(E_raw)
    if prescale is not None:
        scale, shift = prescale
        z = z * scale + shift
    kappa_arr = np.asarray(kappa, dtype=np.float64)
    if np.any(kappa_arr <= 0):
        raise ValueError("kappa must be > 0")
    out = _softplus(z) * (1.0 + kappa_arr) - z
    if is_node:
        return out
    return float(out.data) if out.data.ndim == 0 else out.data


def mle_loss(
    features,
    kappa=None,
    prescale: tuple[float, float] | None = None,
) -> Node:
    """Mean regularizer over the rows of an N x d feature matrix.

    ``kappa`` defaults to the per-row kurtosis, taken from the current values
    and held constant (no gradient flows through it).
    """
    F = as_node(features)
    if F.ndim != 2 or F.shape[1] < 4:
        raise ValueError(f"features must be N x d with d >= 4, got {F.shape}")
    if kappa is None:
        kappa = row_kappas(F.data)
    return r_mle(laplace_energy(F), kappa, prescale).mean()
