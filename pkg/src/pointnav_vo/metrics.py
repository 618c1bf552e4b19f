"""PointGoal navigation metrics and per-step VO error reports."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .losses import as_params

__all__ = [
    "SUCCESS_DISTANCE",
    "NavMetrics",
    "VoErrorReport",
    "success",
    "spl",
    "soft_spl",
    "path_efficiency",
    "episode_metrics",
    "aggregate",
    "per_step_vo_error",
    "sys_error",
]

SUCCESS_DISTANCE = 0.36
COMPONENTS = ("xi_x", "xi_z", "theta")


def success(d_g: float, stopped: bool = True, threshold: float = SUCCESS_DISTANCE) -> int:
    """1 when the agent called stop closer than ``threshold`` to the goal."""
    if d_g < 0:
        raise ValueError("d_g must be non-negative")
    return int(bool(stopped) and d_g < threshold)


def path_efficiency(l: float, l_a: float) -> float:
    """``l / max(l_a, l)``; a zero-length episode counts as fully efficient."""
    if l < 0 or l_a < 0:
        raise ValueError("path lengths must be non-negative")
    denom = max(l_a, l)
    return 1.0 if denom == 0 else l / denom


def spl(s: int, l: float, l_a: float) -> float:
    eff = path_efficiency(l, l_a)
    return float(s) * eff if s else 0.0


def soft_spl(d_init: float, d_g: float, l: float, l_a: float, clamp: bool = False) -> float:
    """``(1 - d_g / d_init) * l / max(l_a, l)``.

    Negative when the agent ends farther away than it started, unless
    ``clamp`` is set.
    """
    if d_init <= 0:
        raise ValueError("degenerate episode")
    value = (1.0 - d_g / d_init) * path_efficiency(l, l_a)
    return max(value, 0.0) if clamp else value


@dataclass(frozen=True)
class NavMetrics:
    success: int
    spl: float
    soft_spl: float
    d_g: float
    d_init: float
    path_length: float
    shortest_length: float

    def row(self) -> tuple:
        return (self.success, self.spl, self.soft_spl, self.d_g)


def episode_metrics(ep, threshold: float = SUCCESS_DISTANCE, clamp_soft: bool = False) -> NavMetrics:
    """Metrics of a finished :class:`~pointnav_vo.sim.episode.Episode`."""
    s = success(ep.d_g, ep.stopped, threshold)
    l, l_a = ep.shortest_length, ep.path_length
    return NavMetrics(
        s,
        spl(s, l, l_a),
        soft_spl(ep.d_init, ep.d_g, l, l_a, clamp_soft) if ep.d_init > 0 else float(s),
        ep.d_g,
        ep.d_init,
        l_a,
        l,
    )


def aggregate(rows: Iterable[NavMetrics]) -> dict[str, float]:
    rows = list(rows)
    if not rows:
        raise ValueError("no episodes to aggregate")
    return {
        "success": float(np.mean([r.success for r in rows])),
        "spl": float(np.mean([r.spl for r in rows])),
        "soft_spl": float(np.mean([r.soft_spl for r in rows])),
        "d_g": float(np.mean([r.d_g for r in rows])),
    }


@dataclass(frozen=True)
class VoErrorReport:
    """Mean absolute error of ``(xi_x, xi_z, theta)``, overall and per action."""

    overall: tuple[float, float, float]
    per_action: dict[str, tuple[float, float, float]] = field(default_factory=dict)
    counts: dict[str, int] = field(default_factory=dict)

    def total(self) -> float:
        return float(sum(self.overall))


def _action_key(a) -> str:
    return getattr(a, "value", a)


def _mae(err: np.ndarray) -> tuple[float, float, float]:
    m = err.mean(axis=0)
    return (float(m[0]), float(m[1]), float(m[2]))


def per_step_vo_error(preds, gts, actions: Sequence | None = None) -> VoErrorReport:
    """Componentwise mean ``|pred - gt|`` over steps, overall and grouped by action."""
    p, g = as_params(preds), as_params(gts)
    if len(p) != len(g) or (actions is not None and len(actions) != len(p)):
        raise ValueError("preds, gts and actions must have equal lengths")
    if len(p) == 0:
        raise ValueError("no steps")
    err = np.abs(p - g)
    per, counts = {}, {}
    if actions is not None:
        keys = np.array([_action_key(a) for a in actions])
        for k in sorted(set(keys)):
            sel = keys == k
            per[k] = _mae(err[sel])
            counts[k] = int(sel.sum())
    return VoErrorReport(_mae(err), per, counts)


def sys_error(train_gts, train_actions, val_gts, val_actions) -> VoErrorReport:
    """Error of a predictor that always outputs the per-action training mean."""
    tg, vg = as_params(train_gts), as_params(val_gts)
    t_keys = np.array([_action_key(a) for a in train_actions])
    v_keys = np.array([_action_key(a) for a in val_actions])
    if len(t_keys) != len(tg) or len(v_keys) != len(vg):
        raise ValueError("gts and actions must have equal lengths")
    preds = np.empty_like(vg)
    for k in set(v_keys):
        train = tg[t_keys == k]
        if len(train) == 0:
            raise ValueError(f"no training samples for action {k!r}")
        preds[v_keys == k] = train.mean(axis=0)
    return per_step_vo_error(preds, vg, list(v_keys))
