"""Affine VO estimator on pooled depth features, trained on the combined loss.

Features of a frame pair are ``[phi(I_t), phi(I_t+1), phi(I_t+1) - phi(I_t)]``
where ``phi`` concatenates block means of the raw depth, of every
discretized-depth channel and of the soft top-down projection.  Swapping the
frames therefore swaps the first two blocks and negates the third, which is
how the reversed pairs for the invariance terms are built.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .depth import CameraIntrinsics, DepthImage, _atomic_write, discretize_depth, intrinsics_from_fov, soft_projection
from .losses import LossWeights, Se2Params, as_params, combined_loss, combined_loss_gradient, params_to_se2
from .metrics import VoErrorReport, per_step_vo_error
from .se2 import Se2
from .sim.agent import MOVEMENT_ACTIONS, Action
from .sim.render import render_depth

__all__ = [
    "FeatureConfig",
    "AffineHead",
    "LinearVoModel",
    "FitResult",
    "block_means",
    "frame_features",
    "featurize_pair",
    "featurize",
    "reverse_features",
    "fit",
    "fit_features",
    "predict",
    "predict_batch",
    "ModelEstimator",
    "dropout_average_identity",
    "save_model",
    "load_model",
    "MAX_ENUMERATION",
]

MAX_ENUMERATION = 20
RANK_TOL = 1e-4
UNIFIED = "all"


@dataclass(frozen=True)
class FeatureConfig:
    depth_pool: tuple[int, int] = (4, 8)
    n_bins: int = 20
    ddepth_pool: tuple[int, int] = (1, 2)
    # fine depth rows: a 0.25 m step moves mass between neighbouring rows
    proj_size: tuple[int, int] = (20, 4)
    proj_pool: tuple[int, int] = (20, 2)
    # used only when a sample carries no camera
    hfov: float = 70.0

    def __post_init__(self):
        for name in ("depth_pool", "ddepth_pool", "proj_size", "proj_pool"):
            v = tuple(int(x) for x in getattr(self, name))
            if len(v) != 2 or min(v) < 1:
                raise ValueError(f"{name} must be two positive integers")
            object.__setattr__(self, name, v)
        if self.n_bins < 1:
            raise ValueError("n_bins must be >= 1")
        if self.proj_pool[0] > self.proj_size[0] or self.proj_pool[1] > self.proj_size[1]:
            raise ValueError("proj_pool exceeds proj_size")

    @property
    def frame_dim(self) -> int:
        d, b, p = self.depth_pool, self.ddepth_pool, self.proj_pool
        return d[0] * d[1] + self.n_bins * b[0] * b[1] + p[0] * p[1]

    @property
    def dim(self) -> int:
        return 3 * self.frame_dim

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureConfig":
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})


def _split_starts(n: int, k: int) -> tuple[np.ndarray, np.ndarray]:
    # same partition as np.array_split: the first n % k blocks are one longer
    sizes = np.full(k, n // k)
    sizes[: n % k] += 1
    return np.concatenate([[0], np.cumsum(sizes)[:-1]]), sizes


def block_means(arr: np.ndarray, rows: int, cols: int) -> np.ndarray:
    """Means over a ``rows x cols`` partition of the last two axes, flattened."""
    h, w = arr.shape[-2:]
    if rows > h or cols > w:
        raise ValueError(f"cannot pool a {h}x{w} image into {rows}x{cols} blocks")
    r0, rs = _split_starts(h, rows)
    c0, cs = _split_starts(w, cols)
    sums = np.add.reduceat(np.add.reduceat(np.asarray(arr, float), r0, axis=-2), c0, axis=-1)
    means = sums / np.outer(rs, cs)
    return means.reshape(*arr.shape[:-2], rows * cols).reshape(-1)


def frame_features(depth: DepthImage, K: CameraIntrinsics, config: FeatureConfig) -> np.ndarray:
    dd = discretize_depth(depth, config.n_bins).channels
    sp = soft_projection(depth, K, *config.proj_size).grid
    return np.concatenate(
        [
            block_means(depth.values, *config.depth_pool),
            block_means(dd, *config.ddepth_pool),
            block_means(sp, *config.proj_pool),
        ]
    )


def featurize_pair(d0: DepthImage, d1: DepthImage, K: CameraIntrinsics, config: FeatureConfig) -> np.ndarray:
    if d0.values.shape != d1.values.shape:
        raise ValueError("frames of a pair must have the same shape")
    f0, f1 = frame_features(d0, K, config), frame_features(d1, K, config)
    return np.concatenate([f0, f1, f1 - f0])


def _intrinsics(sample, depth: DepthImage, config: FeatureConfig) -> CameraIntrinsics:
    rig = getattr(sample, "rig", None)
    if rig is not None:
        return rig.K
    return intrinsics_from_fov(config.hfov, depth.width, depth.height)


def featurize(sample, config: FeatureConfig = FeatureConfig()) -> np.ndarray:
    d0, d1 = sample.depths()
    return featurize_pair(d0, d1, _intrinsics(sample, d0, config), config)


def reverse_features(F: np.ndarray, config: FeatureConfig) -> np.ndarray:
    """Features of the swapped pairs, computed from the forward ones."""
    F = np.atleast_2d(F)
    if F.shape[1] != config.dim:
        raise ValueError(f"expected {config.dim} features, got {F.shape[1]}")
    k = config.frame_dim
    return np.concatenate([F[:, k : 2 * k], F[:, :k], -F[:, 2 * k :]], axis=1)


@dataclass(frozen=True)
class AffineHead:
    weight: np.ndarray  # (3, dim)
    bias: np.ndarray  # (3,)

    def __call__(self, F: np.ndarray) -> np.ndarray:
        return F @ self.weight.T + self.bias


@dataclass(frozen=True)
class LinearVoModel:
    heads: dict[str, AffineHead]
    config: FeatureConfig = FeatureConfig()
    loss_weights: LossWeights = LossWeights()
    seed: int = 0

    @property
    def sep_act(self) -> bool:
        return UNIFIED not in self.heads

    def head_for(self, action) -> AffineHead:
        if not self.sep_act:
            if Action.parse(action) == Action.STOP:
                raise ValueError("no estimate for the stop action")
            return self.heads[UNIFIED]
        key = Action.parse(action).value
        if key not in self.heads:
            raise ValueError(f"no model for action {key!r}")
        return self.heads[key]

    @classmethod
    def zeros(cls, config: FeatureConfig = FeatureConfig(), sep_act: bool = False) -> "LinearVoModel":
        keys = [a.value for a in MOVEMENT_ACTIONS] if sep_act else [UNIFIED]
        return cls({k: AffineHead(np.zeros((3, config.dim)), np.zeros(3)) for k in keys}, config)


@dataclass
class FitResult:
    model: LinearVoModel
    loss_curve: list[float]
    train_error: VoErrorReport = field(repr=False, default=None)

    @property
    def final_loss(self) -> float:
        return self.loss_curve[-1]


def predict(model: LinearVoModel, f, action) -> Se2Params:
    f = np.asarray(f, float).reshape(-1)
    if f.shape[0] != model.config.dim:
        raise ValueError(f"expected {model.config.dim} features, got {f.shape[0]}")
    out = model.head_for(action)(f[None, :])[0]
    return Se2Params(float(out[0]), float(out[1]), float(out[2]))


def predict_batch(model: LinearVoModel, F, actions: Sequence) -> np.ndarray:
    F = np.atleast_2d(np.asarray(F, float))
    if len(actions) != len(F):
        raise ValueError("features and actions differ in length")
    keys = np.array([Action.parse(a).value for a in actions])
    out = np.empty((len(F), 3))
    for k in dict.fromkeys(keys):
        sel = keys == k
        out[sel] = model.head_for(k)(F[sel])
    return out


class ModelEstimator:
    """Episode estimator that renders both frames and applies a trained model."""

    def __init__(self, model: LinearVoModel):
        self.model = model

    def __call__(self, obs) -> Se2:
        if obs.rig is None:
            raise ValueError("the model estimator needs a camera rig")
        d0 = render_depth(obs.grid, obs.before, obs.rig, obs.rng)
        d1 = render_depth(obs.grid, obs.after, obs.rig, obs.rng)
        f = featurize_pair(d0, d1, obs.rig.K, self.model.config)
        return params_to_se2(predict(self.model, f, obs.action))


def _whitening(F: np.ndarray, rel_tol: float) -> tuple[np.ndarray, np.ndarray]:
    """Mean and a ``(dim, k)`` map sending centered features to identity covariance.

    Directions whose variance is below ``rel_tol`` times the largest are
    dropped, which also keeps near-collinear features from being overfit.
    """
    mean = F.mean(axis=0)
    X = F - mean
    cov = X.T @ X / len(F)
    vals, vecs = np.linalg.eigh(cov)
    keep = vals > rel_tol * max(vals.max(), 0.0)
    # fix eigenvector signs so the map is reproducible
    vecs = vecs[:, keep]
    vecs = vecs * np.where(vecs[np.abs(vecs).argmax(axis=0), np.arange(vecs.shape[1])] < 0, -1.0, 1.0)
    return mean, vecs / np.sqrt(vals[keep])


def _descend(
    X: np.ndarray,
    Xr: np.ndarray,
    G: np.ndarray,
    w: LossWeights,
    lr: float,
    epochs: int,
    rng: np.random.Generator,
    init_scale: float,
) -> tuple[np.ndarray, np.ndarray, list[float]]:
    """Full-batch gradient descent with Armijo backtracking on whitened features."""
    W = np.zeros((3, X.shape[1]))
    if init_scale > 0:
        W = init_scale * rng.standard_normal(W.shape)
    b = np.zeros(3)

    def loss(W, b):
        return combined_loss(X @ W.T + b, Xr @ W.T + b, G, w, "mean")

    current = loss(W, b)
    curve = [current]
    step = lr
    for _ in range(epochs):
        d_f, d_b = combined_loss_gradient(X @ W.T + b, Xr @ W.T + b, G, w, "mean")
        gW = d_f.T @ X + d_b.T @ Xr
        gb = d_f.sum(axis=0) + d_b.sum(axis=0)
        g2 = float((gW * gW).sum() + gb @ gb)
        if g2 == 0.0:
            break
        while step > 1e-30:
            cand_W, cand_b = W - step * gW, b - step * gb
            cand = loss(cand_W, cand_b)
            if cand <= current - 0.5 * step * g2:
                W, b, current = cand_W, cand_b, cand
                step *= 2.0
                break
            step *= 0.5
        else:
            break
        curve.append(current)
    return W, b, curve


def fit_features(
    F,
    gts,
    actions: Sequence,
    w: LossWeights = LossWeights(),
    lr: float = 1.0,
    epochs: int = 500,
    rng_seed: int = 0,
    sep_act: bool = False,
    config: FeatureConfig = FeatureConfig(),
    F_rev=None,
    rank_tol: float = RANK_TOL,
    init_scale: float = 0.0,
) -> FitResult:
    """Fit on precomputed features.

    Each head is trained in whitened feature coordinates and folded back into
    an affine map on raw features.  With ``sep_act`` one head per movement
    action is fit on that action's samples.  Weights start at zero unless
    ``init_scale`` asks for a seeded Gaussian start.  The loss curve reports the mean
    training loss over all samples after every epoch.
    """
    F = np.atleast_2d(np.asarray(F, float))
    G = as_params(gts)
    if len(F) == 0:
        raise ValueError("empty dataset")
    if not (len(F) == len(G) == len(actions)):
        raise ValueError("features, ground truth and actions differ in length")
    if F.shape[1] != config.dim:
        raise ValueError(f"expected {config.dim} features, got {F.shape[1]}")
    Fr = reverse_features(F, config) if F_rev is None else np.atleast_2d(np.asarray(F_rev, float))
    keys = np.array([Action.parse(a).value for a in actions])
    if Action.STOP.value in keys:
        raise ValueError("stop steps carry no motion to learn")
    groups = {a.value: keys == a.value for a in MOVEMENT_ACTIONS} if sep_act else {UNIFIED: np.ones(len(F), bool)}
    heads, curves = {}, []
    streams = np.random.SeedSequence(int(rng_seed)).spawn(len(groups))
    for stream, (name, sel) in zip(streams, groups.items()):
        if not sel.any():
            raise ValueError(f"no samples for action {name!r}")
        mean, P = _whitening(F[sel], rank_tol)
        rng = np.random.default_rng(stream)
        W, b, curve = _descend((F[sel] - mean) @ P, (Fr[sel] - mean) @ P, G[sel], w, lr, epochs, rng, init_scale)
        W_raw = W @ P.T
        heads[name] = AffineHead(W_raw, b - W_raw @ mean)
        curves.append((sel.sum(), curve))
    # heads stop at different epochs; hold each at its last value
    length = max(len(c) for _, c in curves)
    total = np.zeros(length)
    for n, c in curves:
        total += n * np.concatenate([c, np.full(length - len(c), c[-1])])
    model = LinearVoModel(heads, config, w, int(rng_seed))
    report = per_step_vo_error(predict_batch(model, F, keys), G, list(keys))
    return FitResult(model, list(total / len(F)), report)


def fit(
    dataset,
    w: LossWeights = LossWeights(),
    lr: float = 1.0,
    epochs: int = 500,
    rng_seed: int = 0,
    sep_act: bool = False,
    config: FeatureConfig = FeatureConfig(),
    rank_tol: float = RANK_TOL,
) -> FitResult:
    samples = list(dataset)
    if not samples:
        raise ValueError("empty dataset")
    F = np.array([featurize(s, config) for s in samples])
    gts = [s.gt_params for s in samples]
    return fit_features(
        F, gts, [s.action for s in samples], w, lr, epochs, rng_seed, sep_act, config, rank_tol=rank_tol
    )


def dropout_average_identity(weight, bias, p_keep: float, x) -> tuple[np.ndarray, np.ndarray]:
    """Expected output of an affine layer under Bernoulli input dropout, two ways.

    Returns the probability-weighted mean over all ``2^n`` keep-masks and the
    layer applied to ``p_keep * x``.
    """
    W = np.atleast_2d(np.asarray(weight, float))
    b = np.asarray(bias, float)
    x = np.asarray(x, float).reshape(-1)
    n = len(x)
    if not 0.0 <= p_keep <= 1.0:
        raise ValueError("p_keep must lie in [0, 1]")
    if n > MAX_ENUMERATION:
        raise ValueError(f"enumeration infeasible for {n} inputs (limit {MAX_ENUMERATION})")
    if W.shape[1] != n:
        raise ValueError("weight and input dimensions disagree")
    masks = (np.arange(2**n)[:, None] >> np.arange(n)) & 1
    kept = masks.sum(axis=1)
    prob = np.power(p_keep, kept) * np.power(1.0 - p_keep, n - kept)
    outputs = (masks * x) @ W.T + b
    return prob @ outputs, W @ (p_keep * x) + b


# -- checkpoints --------------------------------------------------------------------


def save_model(path, model: LinearVoModel, extra: dict | None = None):
    doc = {
        "feature_config": model.config.to_dict(),
        "heads": {k: {"weight": h.weight.tolist(), "bias": h.bias.tolist()} for k, h in sorted(model.heads.items())},
        "loss_weights": asdict(model.loss_weights),
        "seed": model.seed,
        "sep_act": model.sep_act,
    }
    if extra:
        doc["extra"] = extra
    _atomic_write(Path(path), (json.dumps(doc, indent=1, sort_keys=True) + "\n").encode())


def load_model(path) -> LinearVoModel:
    try:
        doc = json.loads(Path(path).read_text())
        config = FeatureConfig.from_dict(doc["feature_config"])
        heads = {
            k: AffineHead(np.array(h["weight"], float).reshape(3, config.dim), np.array(h["bias"], float).reshape(3))
            for k, h in doc["heads"].items()
        }
        model = LinearVoModel(heads, config, LossWeights(**doc["loss_weights"]), int(doc["seed"]))
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise ValueError(f"{path}: malformed checkpoint ({exc})") from None
    for h in heads.values():
        if not (np.isfinite(h.weight).all() and np.isfinite(h.bias).all()):
            raise ValueError(f"{path}: non-finite parameters")
    return model
