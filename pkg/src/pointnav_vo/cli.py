"""Command-line entry point.

Exit codes: 0 success, 2 usage or configuration error, 3 domain error (no
path, degenerate geometry), 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, load_config
from .depth import _atomic_write, intrinsics_from_fov, read_depth, soft_projection, write_pgm
from .errors import DomainError
from .losses import as_params, rot_invariance_loss, trans_invariance_loss
from .metrics import aggregate, episode_metrics, per_step_vo_error, sys_error
from .se2 import Vec2
from .sim import (
    MOVEMENT_ACTIONS,
    AgentState,
    ClassicalEstimator,
    GreedyPolicy,
    augment_turn_pairs,
    empty_scene,
    episode_seed,
    generate_vo_dataset,
    ground_truth_estimator,
    procedural_scene,
    read_dataset,
    read_episode_log,
    read_grid,
    run_episode,
    write_dataset,
    write_episode_log,
    write_grid,
    zero_estimator,
)
from .trainer import ModelEstimator, featurize, fit_features, load_model, predict_batch, reverse_features, save_model

EXIT_OK, EXIT_USAGE, EXIT_DOMAIN, EXIT_IO = 0, 2, 3, 4


class UsageError(Exception):
    pass


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def _write_text(path, text: str):
    _atomic_write(Path(path), text.encode())


def _seed(args, cfg) -> int:
    seed = args.seed if args.seed is not None else cfg["seed"]
    if seed < 0:
        raise UsageError("--seed must be non-negative")
    return int(seed)


def _scene_files(path: Path) -> list[Path]:
    if path.is_file():
        return [path]
    if not path.is_dir():
        raise FileNotFoundError(f"{path}: no such scene file or directory")
    files = sorted(path.glob("*.txt"))
    if not files:
        raise UsageError(f"{path}: no scene files (*.txt)")
    return files


def _point(text: str, name: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(t) for t in text.split(","))
    except ValueError:
        raise UsageError(f"{name} must be comma-separated numbers, got {text!r}") from None
    if len(vals) not in (2, 3) or not all(math.isfinite(v) for v in vals):
        raise UsageError(f"{name} must be X,Z or X,Z,HEADING_DEG")
    return vals


# -- commands ---------------------------------------------------------------------


def cmd_make_scenes(args, cfg) -> int:
    if args.n < 1:
        raise UsageError("number of scenes must be >= 1")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seed = _seed(args, cfg)
    dims = (cfg["scenes.width"], cfg["scenes.height"], cfg["scenes.resolution"])
    for k in range(args.n):
        if args.kind == "empty":
            grid = empty_scene(*dims)
        else:
            rng = np.random.default_rng(episode_seed(seed, k))
            grid = procedural_scene(rng, *dims, n_walls=cfg["scenes.walls"], n_boxes=cfg["scenes.boxes"])
        write_grid(out / f"scene_{k:03d}.txt", grid)
    print(f"wrote {args.n} {args.kind} scenes to {out}")
    return EXIT_OK


def cmd_generate_dataset(args, cfg) -> int:
    if args.n < 1:
        raise UsageError("n must be >= 1")
    scenes = [read_grid(p) for p in _scene_files(Path(args.scenes))]
    seed = _seed(args, cfg)
    ds = generate_vo_dataset(
        scenes,
        args.n,
        cfg.noise_model(),
        seed,
        cfg.camera_rig(),
        cfg["dataset.samples_per_episode"],
        cfg["dataset.max_steps"],
        (cfg["dataset.min_geodesic"], math.inf),
        jobs=args.jobs,
    )
    write_dataset(args.out_dir, ds.samples, ds.manifest)
    man = ds.manifest
    print("action\tcount\tfraction")
    for a in MOVEMENT_ACTIONS:
        print(f"{a.value}\t{man['actions'][a.value]}\t{man['action_fraction'][a.value]:.4f}")
    print(f"collision_rate\t{man['collisions']}\t{man['collision_rate']:.4f}")
    return EXIT_OK


def _estimator(name: str, cfg):
    if name == "gt":
        return ground_truth_estimator
    if name == "zero":
        return zero_estimator
    if name == "classical":
        return ClassicalEstimator(cfg.noise_model(), cfg["sim.n_points"], cfg["sim.scale_mode"])
    if name.startswith("model:"):
        return ModelEstimator(load_model(name[len("model:") :]))
    raise UsageError(f"unknown estimator {name!r} (gt, zero, classical, model:PATH)")


def cmd_simulate(args, cfg) -> int:
    grid = read_grid(args.scene)
    start = _point(args.start, "start")
    goal = _point(args.goal, "goal")
    if len(goal) != 2:
        raise UsageError("goal must be X,Z")
    estimator = _estimator(args.estimator, cfg)
    heading = math.radians(start[2]) if len(start) == 3 else 0.0
    state = AgentState(Vec2(start[0], start[1]), heading)
    ep = run_episode(
        grid,
        state,
        goal,
        GreedyPolicy(),
        estimator,
        cfg.noise_model(),
        episode_seed(_seed(args, cfg), 0),
        cfg["sim.max_steps"],
        cfg.camera_rig(),
        episode_id=args.episode_id or Path(args.log).stem,
    )
    Path(args.log).parent.mkdir(parents=True, exist_ok=True)
    write_episode_log(args.log, ep)
    m = episode_metrics(ep, cfg["metrics.success_distance"], cfg["metrics.clamp_soft_spl"])
    preds = [s.estimate for s in ep.steps]
    print("episode\tS\tSPL\tSoftSPL\td_G\tsteps\tvo_err_x\tvo_err_z\tvo_err_theta")
    err = per_step_vo_error(preds, [s.gt for s in ep.steps]).overall if ep.steps else (0.0, 0.0, 0.0)
    print("\t".join([ep.episode_id, str(m.success), _fmt(m.spl), _fmt(m.soft_spl), _fmt(m.d_g), str(len(ep.steps))] + [_fmt(e) for e in err]))
    return EXIT_OK


def cmd_evaluate(args, cfg) -> int:
    root = Path(args.logs)
    if not root.is_dir():
        raise FileNotFoundError(f"{root}: not a directory")
    files = sorted(root.glob("*.jsonl"))
    if not files:
        raise UsageError(f"{root}: no episode logs (*.jsonl)")
    rows = []
    lines = ["episode\tscene\tS\tSPL\tSoftSPL\td_G"]
    for f in files:
        ep = read_episode_log(f)
        m = episode_metrics(ep, cfg["metrics.success_distance"], cfg["metrics.clamp_soft_spl"])
        rows.append(m)
        lines.append("\t".join([ep.episode_id or f.stem, ep.scene, str(m.success), _fmt(m.spl), _fmt(m.soft_spl), _fmt(m.d_g)]))
    agg = aggregate(rows)
    lines.append("\t".join(["mean", "", _fmt(agg["success"]), _fmt(agg["spl"]), _fmt(agg["soft_spl"]), _fmt(agg["d_g"])]))
    text = "\n".join(lines) + "\n"
    if args.out:
        _write_text(args.out, text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_project_depth(args, cfg) -> int:
    depth = read_depth(args.depth)
    K = intrinsics_from_fov(cfg["camera.hfov"], depth.width, depth.height)
    sp = soft_projection(depth, K, cfg["project.height"], cfg["project.width"])
    write_pgm(args.out, sp.grid)
    print(f"wrote {sp.shape[1]}x{sp.shape[0]} projection to {args.out}")
    return EXIT_OK


def _split(n: int, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    if not 0.0 <= fraction < 1.0:
        raise UsageError("train.val_fraction must be in [0, 1)")
    order = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1,))).permutation(n)
    n_val = int(math.floor(n * fraction))
    return np.sort(order[n_val:]), np.sort(order[:n_val])


def _error_table(model_err, base_err) -> list[str]:
    head = "action\tn\tmodel_xi_x\tmodel_xi_z\tmodel_theta\tsys_xi_x\tsys_xi_z\tsys_theta"
    lines = [head]
    for key in sorted(model_err.per_action):
        cells = [key, str(model_err.counts[key])]
        cells += [_fmt(v) for v in model_err.per_action[key]] + [_fmt(v) for v in base_err.per_action[key]]
        lines.append("\t".join(cells))
    lines.append("\t".join(["all", str(sum(model_err.counts.values()))] + [_fmt(v) for v in model_err.overall + base_err.overall]))
    return lines


def cmd_train(args, cfg) -> int:
    samples = read_dataset(args.dataset)
    if not samples:
        raise UsageError(f"{args.dataset}: empty dataset")
    seed = _seed(args, cfg)
    features = cfg.feature_config()
    train_idx, val_idx = _split(len(samples), cfg["train.val_fraction"], seed)
    train = [samples[i] for i in train_idx]
    if cfg["train.augment_turns"]:
        train = augment_turn_pairs(train)
    if not train:
        raise UsageError("no training samples after the validation split")
    val = [samples[i] for i in val_idx] or train
    F = np.array([featurize(s, features) for s in train])
    result = fit_features(
        F,
        [s.gt_params for s in train],
        [s.action for s in train],
        cfg.loss_weights(),
        cfg["train.lr"],
        cfg["train.epochs"],
        seed,
        cfg["train.sep_act"],
        features,
        rank_tol=cfg["train.rank_tol"],
    )
    Fv = np.array([featurize(s, features) for s in val])
    acts_v = [s.action for s in val]
    gts_v = as_params([s.gt_params for s in val])
    fwd = predict_batch(result.model, Fv, acts_v)
    bwd = predict_batch(result.model, reverse_features(Fv, features), acts_v)
    model_err = per_step_vo_error(fwd, gts_v, acts_v)
    base_err = sys_error([s.gt_params for s in train], [s.action for s in train], gts_v, acts_v)
    inv_rot = float(np.mean(rot_invariance_loss(fwd, bwd)))
    inv_trans = float(np.mean(trans_invariance_loss(fwd, bwd)))
    summary = {
        "final_loss": result.final_loss,
        "epochs_run": len(result.loss_curve) - 1,
        "n_train": len(train),
        "n_val": len(val),
        "val_error": list(model_err.overall),
        "sys_error": list(base_err.overall),
        "val_inv_rot": inv_rot,
        "val_inv_trans": inv_trans,
    }
    save_model(args.out, result.model, summary)
    curve = Path(args.curve) if args.curve else Path(str(args.out) + ".curve.tsv")
    _write_text(curve, "epoch\tloss\n" + "".join(f"{i}\t{float(v)!r}\n" for i, v in enumerate(result.loss_curve)))
    print(f"final_loss\t{result.final_loss:.3e}")
    print(f"validation\t{len(val)} samples" + (" (training set reused)" if not len(val_idx) else ""))
    print("\n".join(_error_table(model_err, base_err)))
    print(f"inv_rot\t{inv_rot:.3e}\ninv_trans\t{inv_trans:.3e}")
    return EXIT_OK


# -- argument parsing ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="key = value configuration file")
    common.add_argument("--seed", type=int, metavar="U64", help="master seed (overrides the config)")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one config key")
    common.add_argument("--jobs", type=int, default=1, metavar="N", help="worker processes")

    parser = argparse.ArgumentParser(prog="pointnav-vo", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-scenes", parents=[common], help="write procedural or empty scene files")
    p.add_argument("out_dir")
    p.add_argument("n", type=int)
    p.add_argument("--kind", choices=["procedural", "empty"], default="procedural")
    p.set_defaults(func=cmd_make_scenes)

    p = sub.add_parser("generate-dataset", parents=[common], help="collect a VO dataset from scenes")
    p.add_argument("scenes", help="scene file or directory of *.txt scenes")
    p.add_argument("n", type=int, help="number of samples")
    p.add_argument("out_dir")
    p.set_defaults(func=cmd_generate_dataset)

    p = sub.add_parser("simulate", parents=[common], help="run one navigation episode")
    p.add_argument("scene")
    p.add_argument("start", help="X,Z or X,Z,HEADING_DEG in meters / degrees")
    p.add_argument("goal", help="X,Z in meters")
    p.add_argument("--estimator", default="gt", help="gt, zero, classical or model:PATH")
    p.add_argument("--log", default="episode.jsonl", help="episode log to write")
    p.add_argument("--episode-id", default="")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("evaluate", parents=[common], help="metrics table for a directory of episode logs")
    p.add_argument("logs")
    p.add_argument("--out", help="also write the table here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("project-depth", parents=[common], help="soft top-down projection of a depth file")
    p.add_argument("depth")
    p.add_argument("out")
    p.set_defaults(func=cmd_project_depth)

    p = sub.add_parser("train", parents=[common], help="fit the affine VO model on a dataset")
    p.add_argument("dataset")
    p.add_argument("out", help="checkpoint path")
    p.add_argument("--curve", help="loss curve path (default: OUT.curve.tsv)")
    p.set_defaults(func=cmd_train)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.jobs < 1:
            raise UsageError("--jobs must be >= 1")
        cfg = load_config(args.config, args.set)
        return args.func(args, cfg)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
