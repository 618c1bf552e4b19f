"""Regression and geometric-invariance losses for planar VO, with gradients.

Predictions are laid out as ``(xi_x, xi_z, theta)``; batched inputs are arrays
of shape ``(n, 3)``.  Angles are used raw (no wrap-around in residuals).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .se2 import Se2

__all__ = [
    "Se2Params",
    "LossWeights",
    "as_params",
    "params_to_se2",
    "regression_loss",
    "rot_invariance_loss",
    "trans_invariance_loss",
    "combined_loss",
    "combined_loss_terms",
    "combined_loss_gradient",
]


class Se2Params(NamedTuple):
    """Raw regression output of a VO head."""

    xi_x: float
    xi_z: float
    theta: float

    @classmethod
    def from_se2(cls, h: Se2) -> "Se2Params":
        return cls(h.x, h.z, h.theta)


def params_to_se2(p) -> Se2:
    xi_x, xi_z, theta = p
    return Se2(theta, xi_x, xi_z)


@dataclass(frozen=True)
class LossWeights:
    lambda_reg: float = 1.0
    lambda_inv_trans: float = 1.0
    lambda_inv_rot: float = 1.0

    def __post_init__(self):
        for name in ("lambda_reg", "lambda_inv_trans", "lambda_inv_rot"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be non-negative")

    @property
    def uses_invariance(self) -> bool:
        return self.lambda_inv_trans > 0 or self.lambda_inv_rot > 0


def as_params(x) -> np.ndarray:
    """Coerce a single prediction or a batch into an ``(n, 3)`` float array."""
    if isinstance(x, Se2):
        x = Se2Params.from_se2(x)
    elif isinstance(x, (list, tuple)) and x and isinstance(x[0], Se2):
        x = [Se2Params.from_se2(h) for h in x]
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"expected (n, 3) predictions, got shape {arr.shape}")
    return arr


def _reduce(per_sample: np.ndarray, single: bool):
    return float(per_sample[0]) if single else per_sample


def _single(x) -> bool:
    return isinstance(x, Se2) or np.ndim(x) == 1


def _trans_residual(fwd: np.ndarray, bwd: np.ndarray) -> np.ndarray:
    c, s = np.cos(fwd[:, 2]), np.sin(fwd[:, 2])
    rx = fwd[:, 0] + c * bwd[:, 0] - s * bwd[:, 1]
    rz = fwd[:, 1] + s * bwd[:, 0] + c * bwd[:, 1]
    return np.stack([rx, rz], axis=1)


def regression_loss(pred, gt):
    """``||xi - xi_hat||^2 + (theta - theta_hat)^2``, per sample for batches."""
    p, g = as_params(pred), as_params(gt)
    return _reduce(np.sum((p - g) ** 2, axis=1), _single(pred))


def rot_invariance_loss(fwd, bwd):
    """``(theta_fwd + theta_bwd)^2``: swapped-pair rotations must cancel."""
    f, b = as_params(fwd), as_params(bwd)
    return _reduce((f[:, 2] + b[:, 2]) ** 2, _single(fwd))


def trans_invariance_loss(fwd, bwd):
    """``||xi_fwd + R(theta_fwd) xi_bwd||^2``."""
    f, b = as_params(fwd), as_params(bwd)
    r = _trans_residual(f, b)
    return _reduce(np.sum(r**2, axis=1), _single(fwd))


def _check_batch(fwd, bwd, gt):
    f, b, g = as_params(fwd), as_params(bwd), as_params(gt)
    if len(f) == 0:
        raise ValueError("empty batch")
    if not (len(f) == len(b) == len(g)):
        raise ValueError("fwd, bwd and gt batches differ in length")
    return f, b, g


def combined_loss_terms(fwd, bwd, gt) -> dict[str, np.ndarray]:
    """Unweighted per-sample loss terms."""
    f, b, g = _check_batch(fwd, bwd, gt)
    return {
        "reg": np.sum((f - g) ** 2, axis=1),
        "inv_trans": np.sum(_trans_residual(f, b) ** 2, axis=1),
        "inv_rot": (f[:, 2] + b[:, 2]) ** 2,
    }


def combined_loss(fwd, bwd, gt, w: LossWeights = LossWeights(), reduction: str = "sum") -> float:
    """Weighted training objective summed (or averaged) over the batch.

    ``fwd`` holds predictions on ``(I_t, I_t+1)``, ``bwd`` on the swapped pair,
    ``gt`` the ground-truth transform for the forward pair.
    """
    terms = combined_loss_terms(fwd, bwd, gt)
    per_sample = (
        w.lambda_reg * terms["reg"]
        + w.lambda_inv_trans * terms["inv_trans"]
        + w.lambda_inv_rot * terms["inv_rot"]
    )
    return float(_batch_reduce(per_sample, reduction))


def _batch_reduce(x: np.ndarray, reduction: str):
    if reduction == "sum":
        return x.sum()
    if reduction == "mean":
        return x.mean()
    raise ValueError(f"unknown reduction {reduction!r}")


def combined_loss_gradient(
    fwd, bwd, gt, w: LossWeights = LossWeights(), reduction: str = "sum"
) -> tuple[np.ndarray, np.ndarray]:
    """Analytic gradient of :func:`combined_loss` w.r.t. every prediction.

    Returns ``(d_fwd, d_bwd)``, each shaped like the ``(n, 3)`` inputs.
    Flatten with ``np.concatenate([d_fwd.ravel(), d_bwd.ravel()])`` for a
    single parameter vector.
    """
    f, b, g = _check_batch(fwd, bwd, gt)
    d_f = 2.0 * w.lambda_reg * (f - g)
    d_b = np.zeros_like(b)

    rot = 2.0 * w.lambda_inv_rot * (f[:, 2] + b[:, 2])
    d_f[:, 2] += rot
    d_b[:, 2] += rot

    if w.lambda_inv_trans:
        r = _trans_residual(f, b)
        c, s = np.cos(f[:, 2]), np.sin(f[:, 2])
        k = 2.0 * w.lambda_inv_trans
        d_f[:, 0] += k * r[:, 0]
        d_f[:, 1] += k * r[:, 1]
        # R^T r
        d_b[:, 0] += k * (c * r[:, 0] + s * r[:, 1])
        d_b[:, 1] += k * (-s * r[:, 0] + c * r[:, 1])
        # r . (dR/dtheta) xi_bwd
        dx = -s * b[:, 0] - c * b[:, 1]
        dz = c * b[:, 0] - s * b[:, 1]
        d_f[:, 2] += k * (r[:, 0] * dx + r[:, 1] * dz)

    if reduction == "mean":
        d_f /= len(f)
        d_b /= len(f)
    elif reduction != "sum":
        raise ValueError(f"unknown reduction {reduction!r}")
    return d_f, d_b
