"""Feature-correspondence visual odometry with depth-based scale.

Pipeline: essential matrix from pixel correspondences (normalized 8-point
inside a seeded robust-sampling loop), decomposition with a cheirality vote,
metric scale from per-point depth, then reduction to a planar transform.

Camera frame is x right, y down, z forward.  The planar agent frame is
x right, z backward, so ``agent = (x_cam, -z_cam)``.  Recovered motions are
point transforms: ``X_t+1 = R X_t + t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .depth import CameraIntrinsics, _atomic_write
from .errors import (
    AmbiguousPose,
    DegenerateGeometry,
    InsufficientCorrespondences,
    NonPlanarMotion,
)
from .losses import Se2Params
from .se2 import Se2

__all__ = [
    "Correspondences",
    "EssentialResult",
    "RecoveredPose",
    "estimate_essential",
    "recover_pose",
    "resolve_scale",
    "planar_vo",
    "planar_vo_oracle",
    "rigid_alignment",
    "depth_alignment_vo",
    "se2_to_camera",
    "camera_to_se2",
    "synthesize_correspondences",
    "perturb",
    "read_correspondences",
    "write_correspondences",
]

RANSAC_ITERATIONS = 200
INLIER_THRESHOLD = 1e-3
LOW_PARALLAX_RAD = 1e-4
MAX_TILT_DEG = 5.0
_RANK_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class Correspondences:
    """Matched pixels between frames ``t`` and ``t + 1`` with their depths.

    ``uv`` / ``uv2`` are continuous image coordinates, shape ``(n, 2)``.
    """

    uv: np.ndarray
    uv2: np.ndarray
    depth: np.ndarray
    depth2: np.ndarray

    def __post_init__(self):
        uv = np.asarray(self.uv, dtype=float).reshape(-1, 2)
        uv2 = np.asarray(self.uv2, dtype=float).reshape(-1, 2)
        d = np.asarray(self.depth, dtype=float).reshape(-1)
        d2 = np.asarray(self.depth2, dtype=float).reshape(-1)
        if not (len(uv) == len(uv2) == len(d) == len(d2)):
            raise ValueError("correspondence arrays differ in length")
        for name, arr in (("uv", uv), ("uv2", uv2), ("depth", d), ("depth2", d2)):
            object.__setattr__(self, name, arr)

    def __len__(self):
        return len(self.uv)

    def swapped(self) -> "Correspondences":
        return Correspondences(self.uv2, self.uv, self.depth2, self.depth)

    def subset(self, mask) -> "Correspondences":
        return Correspondences(self.uv[mask], self.uv2[mask], self.depth[mask], self.depth2[mask])

    def to_array(self) -> np.ndarray:
        return np.column_stack([self.uv, self.uv2, self.depth, self.depth2])

    def __eq__(self, other):
        if not isinstance(other, Correspondences):
            return NotImplemented
        return np.array_equal(self.to_array(), other.to_array())


@dataclass(frozen=True)
class EssentialResult:
    E: np.ndarray
    inlier_mask: np.ndarray
    low_parallax: bool = False
    rotation: np.ndarray | None = None


@dataclass(frozen=True)
class RecoveredPose:
    R: np.ndarray
    t_dir: np.ndarray
    inlier_mask: np.ndarray
    low_parallax: bool = False


def write_correspondences(path, c: Correspondences):
    lines = [",".join(repr(float(v)) for v in row) for row in c.to_array()]
    _atomic_write(Path(path), "".join(line + "\n" for line in lines).encode())


def read_correspondences(path) -> Correspondences:
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        fields = line.split(",")
        if len(fields) != 6:
            raise ValueError(f"{path}:{lineno}: expected 6 fields u,v,u2,v2,d,d2")
        rows.append([float(f) for f in fields])
    arr = np.array(rows, dtype=float).reshape(-1, 6)
    return Correspondences(arr[:, 0:2], arr[:, 2:4], arr[:, 4], arr[:, 5])


# -- camera / planar conversions ---------------------------------------------


def se2_to_camera(h: Se2) -> tuple[np.ndarray, np.ndarray]:
    """Camera-frame ``(R, t)`` of a planar point transform."""
    c, s = math.cos(h.theta), math.sin(h.theta)
    R = np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
    t = np.array([h.x, 0.0, -h.z])
    return R, t


def _yaw(R: np.ndarray) -> float:
    return math.atan2(R[0, 2] - R[2, 0], R[0, 0] + R[2, 2])


def _tilt_deg(R: np.ndarray) -> float:
    return math.degrees(math.acos(np.clip(R[1, 1], -1.0, 1.0)))


def camera_to_se2(R: np.ndarray, t: np.ndarray) -> Se2:
    """Planar reduction: yaw about the camera's vertical axis and (x, -z) translation."""
    return Se2(_yaw(R), t[0], -t[2])


# -- essential matrix -----------------------------------------------------------


def _bearings(uv: np.ndarray, K: CameraIntrinsics) -> np.ndarray:
    h = np.column_stack([uv, np.ones(len(uv))])
    return h @ K.K_inv.T


def _hartley(x: np.ndarray) -> np.ndarray:
    """Similarities moving centroids to 0 and mean distances to sqrt(2).

    ``x`` is ``(..., n, 3)``; returns ``(..., 3, 3)``.
    """
    centroid = x[..., :2].mean(axis=-2)
    dist = np.linalg.norm(x[..., :2] - centroid[..., None, :], axis=-1).mean(axis=-1)
    s = np.where(dist > 0, math.sqrt(2.0) / np.where(dist > 0, dist, 1.0), 1.0)
    T = np.zeros(x.shape[:-2] + (3, 3))
    T[..., 0, 0] = s
    T[..., 1, 1] = s
    T[..., 0, 2] = -s * centroid[..., 0]
    T[..., 1, 2] = -s * centroid[..., 1]
    T[..., 2, 2] = 1.0
    return T


def _eight_point(x1: np.ndarray, x2: np.ndarray):
    """Normalized 8-point fits projected onto the essential manifold.

    Accepts ``(n, 3)`` or batched ``(s, n, 3)`` normalized image points and
    returns ``(E, ok)`` where ``ok`` is False for rank-deficient designs.
    """
    T1, T2 = _hartley(x1), _hartley(x2)
    y1 = np.einsum("...ij,...nj->...ni", T1, x1)
    y2 = np.einsum("...ij,...nj->...ni", T2, x2)
    A = np.einsum("...ni,...nj->...nij", y2, y1).reshape(x1.shape[:-1] + (9,))
    _, s, Vt = np.linalg.svd(A, full_matrices=True)
    ok = (s.shape[-1] >= 8) & (s[..., 7] > _RANK_TOL * s[..., 0])
    F = Vt[..., -1, :].reshape(x1.shape[:-2] + (3, 3))
    E = np.swapaxes(T2, -1, -2) @ F @ T1
    U, _, Vt = np.linalg.svd(E)
    E = U @ (np.array([1.0, 1.0, 0.0])[:, None] * Vt)
    return E, ok


def _sampson(E: np.ndarray, x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
    """Sampson distances; ``E`` may be a stack ``(s, 3, 3)`` giving ``(s, n)``."""
    Ex1 = np.einsum("...ij,nj->...ni", E, x1)
    Etx2 = np.einsum("...ji,nj->...ni", E, x2)
    num = np.einsum("ni,...ni->...n", x2, Ex1) ** 2
    den = Ex1[..., 0] ** 2 + Ex1[..., 1] ** 2 + Etx2[..., 0] ** 2 + Etx2[..., 1] ** 2
    return np.sqrt(num / np.maximum(den, 1e-300))


def _kabsch(b1: np.ndarray, b2: np.ndarray) -> np.ndarray:
    """Rotation best aligning the rows of ``b1`` onto those of ``b2``."""
    U, _, Vt = np.linalg.svd(b2.T @ b1)
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt))])
    return U @ D @ Vt


def _parallax(b1: np.ndarray, b2: np.ndarray, R: np.ndarray) -> np.ndarray:
    rb1 = b1 @ R.T
    cross = np.linalg.norm(np.cross(rb1, b2), axis=1)
    return np.arctan2(cross, np.einsum("ni,ni->n", rb1, b2))


def _unit(x: np.ndarray) -> np.ndarray:
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def estimate_essential(
    c: Correspondences,
    K: CameraIntrinsics,
    rng_seed: int = 0,
    iterations: int = RANSAC_ITERATIONS,
    threshold: float = INLIER_THRESHOLD,
) -> EssentialResult:
    """Estimate ``E`` with ``x2^T E x1 = 0`` for normalized image points.

    A rotation-only fit is tried first; when the median residual parallax is
    below ``LOW_PARALLAX_RAD`` the result is flagged ``low_parallax`` and
    carries that rotation.  Otherwise a normalized 8-point fit on all pairs is
    accepted if every pair is an inlier (Sampson distance below
    ``threshold``); failing that, ``iterations`` seeded 8-point samples vote
    and the winner is refit on its inliers.
    """
    if len(c) < 8:
        raise InsufficientCorrespondences("insufficient correspondences")
    x1, x2 = _bearings(c.uv, K), _bearings(c.uv2, K)
    b1, b2 = _unit(x1), _unit(x2)

    R_rot = _kabsch(b1, b2)
    if np.median(_parallax(b1, b2, R_rot)) < LOW_PARALLAX_RAD:
        # any E = [t]x R fits a pure rotation; pick t along the optical axis
        E = _skew(np.array([0.0, 0.0, 1.0])) @ R_rot
        return EssentialResult(E, np.ones(len(c), bool), True, R_rot)

    E, ok = _eight_point(x1, x2)
    if not ok:
        raise DegenerateGeometry("degenerate geometry")
    inliers = _sampson(E, x1, x2) < threshold
    if not inliers.all():
        rng = np.random.default_rng(rng_seed)
        idx = np.stack([rng.choice(len(c), size=8, replace=False) for _ in range(iterations)])
        cand, ok = _eight_point(x1[idx], x2[idx])
        votes = np.where(ok, (_sampson(cand, x1, x2) < threshold).sum(axis=1), -1)
        best = int(np.argmax(votes))
        if votes[best] > inliers.sum():
            E = cand[best]
            inliers = _sampson(E, x1, x2) < threshold
        if inliers.sum() < 8:
            raise DegenerateGeometry("degenerate geometry")
        refit, ok = _eight_point(x1[inliers], x2[inliers])
        if ok:
            refit_inliers = _sampson(refit, x1, x2) < threshold
            if refit_inliers.sum() >= 8:
                E, inliers = refit, refit_inliers
    return EssentialResult(E, inliers)


def _skew(t: np.ndarray) -> np.ndarray:
    return np.array([[0.0, -t[2], t[1]], [t[2], 0.0, -t[0]], [-t[1], t[0], 0.0]])


def _triangulate_depths(R, t, x1, x2) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares ``(lambda1, lambda2)`` with ``lambda2 x2 = lambda1 R x1 + t``."""
    a = x1 @ R.T
    b = -x2
    # normal equations of the 3x2 system [a b] [l1 l2]^T = -t, per point
    aa = np.einsum("ni,ni->n", a, a)
    bb = np.einsum("ni,ni->n", b, b)
    ab = np.einsum("ni,ni->n", a, b)
    at = -a @ t
    bt = -b @ t
    det = aa * bb - ab**2
    det = np.where(np.abs(det) < 1e-300, np.nan, det)
    l1 = (bb * at - ab * bt) / det
    l2 = (aa * bt - ab * at) / det
    return l1, l2


def recover_pose(e: EssentialResult, c: Correspondences, K: CameraIntrinsics) -> RecoveredPose:
    """Pick the decomposition of ``E`` with the most points in front of both cameras."""
    mask = np.asarray(e.inlier_mask, bool)
    if not mask.any():
        raise DegenerateGeometry("no inliers")
    if e.low_parallax:
        # image geometry cannot fix the baseline direction; take it from depth
        R, disp = rigid_alignment(c.subset(mask), K)
        norm = np.linalg.norm(disp)
        t_dir = disp / norm if norm > 0 else np.array([0.0, 0.0, 1.0])
        return RecoveredPose(R, t_dir, mask, True)

    x1, x2 = _bearings(c.uv[mask], K), _bearings(c.uv2[mask], K)
    U, _, Vt = np.linalg.svd(e.E)
    if np.linalg.det(U) < 0:
        U = -U
    if np.linalg.det(Vt) < 0:
        Vt = -Vt
    W = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    candidates = []
    for R in (U @ W @ Vt, U @ W.T @ Vt):
        for t in (U[:, 2], -U[:, 2]):
            l1, l2 = _triangulate_depths(R, t, x1, x2)
            good = int(np.sum((l1 > 0) & (l2 > 0)))
            candidates.append((good, R, t))
    candidates.sort(key=lambda item: -item[0])
    if candidates[0][0] == candidates[1][0]:
        raise AmbiguousPose("ambiguous pose")
    _, R, t = candidates[0]
    return RecoveredPose(R, t / np.linalg.norm(t), mask)


def resolve_scale(
    r: RecoveredPose, c: Correspondences, K: CameraIntrinsics, mode: str = "projection"
) -> float:
    """Metric length of the translation from depth.

    Inliers are lifted to 3-D in both frames and the frame-``t`` points are
    rotated by ``r.R``.  ``mode="projection"`` averages the displacement
    component along ``r.t_dir``; ``mode="norm"`` averages the full
    displacement length.
    """
    if mode not in ("projection", "norm"):
        raise ValueError(f"unknown scale mode {mode!r}")
    mask = np.asarray(r.inlier_mask, bool)
    if not mask.any():
        raise DegenerateGeometry("no inliers to resolve scale")
    p1 = _bearings(c.uv[mask], K) * c.depth[mask, None]
    p2 = _bearings(c.uv2[mask], K) * c.depth2[mask, None]
    disp = p2 - p1 @ np.asarray(r.R).T
    if mode == "projection":
        return float(np.mean(disp @ r.t_dir))
    return float(np.mean(np.linalg.norm(disp, axis=1)))


def rigid_alignment(c: Correspondences, K: CameraIntrinsics) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares ``(R, t)`` with ``p2 = R p1 + t`` between the depth-lifted points."""
    if len(c) < 3:
        raise InsufficientCorrespondences("insufficient correspondences")
    p1 = _bearings(c.uv, K) * c.depth[:, None]
    p2 = _bearings(c.uv2, K) * c.depth2[:, None]
    c1, c2 = p1.mean(axis=0), p2.mean(axis=0)
    R = _kabsch(p1 - c1, p2 - c2)
    return R, c2 - R @ c1


def depth_alignment_vo(c: Correspondences, K: CameraIntrinsics) -> Se2Params:
    """Planar motion from depth alone; usable when the epipolar geometry is degenerate."""
    R, t = rigid_alignment(c, K)
    return _to_params(R, t)


def _to_params(R: np.ndarray, t: np.ndarray, theta: float | None = None) -> Se2Params:
    h = camera_to_se2(R, t)
    return Se2Params(h.x, h.z, h.theta if theta is None else theta)


def planar_vo(
    c: Correspondences,
    K: CameraIntrinsics,
    scale_mode: str = "projection",
    rng_seed: int = 0,
    max_tilt_deg: float = MAX_TILT_DEG,
) -> Se2Params:
    """Full pipeline: essential matrix, pose, depth scale, planar reduction."""
    e = estimate_essential(c, K, rng_seed=rng_seed)
    pose = recover_pose(e, c, K)
    if _tilt_deg(pose.R) > max_tilt_deg:
        raise NonPlanarMotion("non-planar motion")
    scale = resolve_scale(pose, c, K, scale_mode)
    return _to_params(pose.R, scale * pose.t_dir)


def planar_vo_oracle(
    c: Correspondences,
    K: CameraIntrinsics,
    gt_theta: float,
    scale_mode: str = "projection",
    rng_seed: int = 0,
) -> Se2Params:
    """Same as :func:`planar_vo` but rotates frame-``t`` points by the true yaw."""
    e = estimate_essential(c, K, rng_seed=rng_seed)
    pose = recover_pose(e, c, K)
    R_gt, _ = se2_to_camera(Se2(gt_theta))
    pose = replace(pose, R=R_gt)
    scale = resolve_scale(pose, c, K, scale_mode)
    return _to_params(R_gt, scale * pose.t_dir, theta=gt_theta)


# -- synthetic scenes -----------------------------------------------------------


def synthesize_correspondences(
    motion: Se2,
    K: CameraIntrinsics,
    n_points: int = 60,
    rng: np.random.Generator | int = 0,
    depth_range: tuple[float, float] = (1.0, 8.0),
) -> Correspondences:
    """Exact correspondences of random 3-D points seen before and after ``motion``.

    ``motion`` is a planar point transform from frame ``t`` to ``t + 1``.
    Points are drawn uniformly over the first image and ``depth_range`` and
    kept when they project inside the second image in front of the camera.
    """
    rng = np.random.default_rng(rng)
    R, t = se2_to_camera(motion)
    uv, uv2, d1, d2 = [], [], [], []
    count = 0
    for _ in range(1000):
        m = 4 * n_points
        u = rng.uniform(0.0, K.width, m)
        v = rng.uniform(0.0, K.height, m)
        z = rng.uniform(*depth_range, m)
        p1 = np.column_stack([u, v, np.ones(m)]) @ K.K_inv.T * z[:, None]
        p2 = p1 @ R.T + t
        ok = p2[:, 2] > 0.1
        proj = p2[ok] @ K.K.T
        q = proj[:, :2] / proj[:, 2:3]
        inside = (q[:, 0] >= 0) & (q[:, 0] < K.width) & (q[:, 1] >= 0) & (q[:, 1] < K.height)
        uv.append(np.column_stack([u, v])[ok][inside])
        uv2.append(q[inside])
        d1.append(z[ok][inside])
        d2.append(p2[ok][inside][:, 2])
        count += int(inside.sum())
        if count >= n_points:
            break
    else:
        raise DegenerateGeometry("motion leaves no shared field of view")
    cat = lambda xs: np.concatenate(xs)[:n_points]  # noqa: E731
    return Correspondences(cat(uv), cat(uv2), cat(d1), cat(d2))


def perturb(
    c: Correspondences,
    rng: np.random.Generator | int,
    depth_sigma: float = 0.0,
    pixel_sigma: float = 0.0,
) -> Correspondences:
    """Multiplicative Gaussian depth noise and additive Gaussian pixel noise."""
    rng = np.random.default_rng(rng)
    n = len(c)
    return Correspondences(
        c.uv + pixel_sigma * rng.standard_normal((n, 2)),
        c.uv2 + pixel_sigma * rng.standard_normal((n, 2)),
        c.depth * (1.0 + depth_sigma * rng.standard_normal(n)),
        c.depth2 * (1.0 + depth_sigma * rng.standard_normal(n)),
    )
