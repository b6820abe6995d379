"""Command-line front end.

Subcommands: run (full pipeline), train (pose / refiner / mapper over
synthetic data), eval (metrics over exported artifacts), export-obj (OBJ
dumps of paths and trajectories).

Exit codes: 0 success, 2 config or schema error, 3 scene parse error,
4 planning infeasible, 5 training failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import io as artio
from .anchors import save_pose_model, save_refiner, train_place_refiner, train_pose_model
from .errors import (
    ConfigError,
    InfeasibleError,
    PipelineStageError,
    SceneError,
    SchemaError,
    TrainingError,
)
from .pipeline import RunConfig, evaluate_artifacts, run_pipeline
from .planner import build_walkable, save_mapper, train_mapper
from .scene import load_mesh, voxelize
from .synth import (
    build_test_room,
    make_mapper_dataset,
    make_pose_dataset,
    make_refiner_dataset,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SCENE = 3
EXIT_INFEASIBLE = 4
EXIT_TRAINING = 5


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, PipelineStageError):
        exc = exc.cause
    if isinstance(exc, TrainingError):
        return EXIT_TRAINING
    if isinstance(exc, InfeasibleError):
        return EXIT_INFEASIBLE
    if isinstance(exc, (SceneError, FileNotFoundError, IsADirectoryError)):
        return EXIT_SCENE
    return EXIT_CONFIG


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sceneplan",
        description="Scene-aware motion plan synthesis: anchors, paths, trajectories.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the full pipeline on a scene")
    run.add_argument("--config", help="JSON config file; flags override its values")
    run.add_argument("--scene", help="OBJ scene file")
    run.add_argument("--actions", help="comma-separated action sequence, e.g. walk,sit")
    run.add_argument("--seed", type=int)
    run.add_argument("--samples", type=int)
    run.add_argument("--cell-size", type=float, dest="cell_size")
    run.add_argument("--field", choices=("standard", "random", "shared", "mapper"))
    run.add_argument("--out", dest="out_dir")
    run.add_argument("--up-axis", choices=("y", "z"), dest="up_axis")
    run.add_argument("--pose-checkpoint", dest="pose_checkpoint")
    run.add_argument("--refiner-checkpoint", dest="refiner_checkpoint")
    run.add_argument("--mapper-checkpoint", dest="mapper_checkpoint")
    run.add_argument("--no-trajectory", action="store_true",
                     help="stop after planning; still writes anchors and paths")
    run.add_argument("--no-metrics", action="store_true")

    train = sub.add_parser("train", help="train a model on synthetic data")
    train.add_argument("what", choices=("pose", "refiner", "mapper"))
    train.add_argument("--out", required=True, help="checkpoint output path")
    train.add_argument("--seed", type=int, default=0)
    train.add_argument("--epochs", type=int, default=40)
    train.add_argument("--samples", type=int, default=0,
                       help="dataset size knob; 0 picks a per-model default")
    train.add_argument("--basis-seed", type=int, default=7, dest="basis_seed")
    train.add_argument("--scene", help="OBJ scene for refiner data (default: built-in room)")

    ev = sub.add_parser("eval", help="compute metrics over exported artifacts")
    ev.add_argument("--anchors", help="anchors.json")
    ev.add_argument("--paths", help="paths.json")
    ev.add_argument("--trajectories", help="trajectories.json")
    ev.add_argument("--k", type=int, default=20, help="cluster count for anchor entropy")
    ev.add_argument("--out", help="write the report here instead of stdout")

    ex = sub.add_parser("export-obj", help="export paths / trajectories as OBJ polylines")
    ex.add_argument("--scene", help="OBJ scene (required with --paths)")
    ex.add_argument("--cell-size", type=float, default=0.25, dest="cell_size")
    ex.add_argument("--up-axis", choices=("y", "z"), default="z", dest="up_axis")
    ex.add_argument("--paths", help="paths.json to export")
    ex.add_argument("--trajectories", help="trajectories.json to export")
    ex.add_argument("--out", required=True, help="output directory")
    return parser


def _cmd_run(args) -> int:
    doc = {}
    if args.config:
        with open(args.config) as fh:
            doc = json.load(fh)
        if not isinstance(doc, dict):
            raise ConfigError("config file must hold a JSON object")
    overrides = {
        "scene": args.scene,
        "seed": args.seed,
        "samples": args.samples,
        "cell_size": args.cell_size,
        "field": args.field,
        "out_dir": args.out_dir,
        "up_axis": args.up_axis,
        "pose_checkpoint": args.pose_checkpoint,
        "refiner_checkpoint": args.refiner_checkpoint,
        "mapper_checkpoint": args.mapper_checkpoint,
    }
    if args.actions is not None:
        overrides["actions"] = tuple(a.strip() for a in args.actions.split(",") if a.strip())
    doc.update({k: v for k, v in overrides.items() if v is not None})
    if args.no_trajectory:
        doc["trajectory"] = False
    if args.no_metrics:
        doc["metrics"] = False
    if "scene" not in doc:
        raise ConfigError("no scene given (use --scene or a config file)")
    if "actions" not in doc:
        raise ConfigError("no action sequence given (use --actions or a config file)")
    config = RunConfig.from_dict(doc)
    manifest = run_pipeline(config)
    print(f"wrote {len(manifest.artifacts) + 1} artifacts to {config.out_dir}")
    for name in [*manifest.artifacts, "manifest.json"]:
        print(f"  {name}")
    return EXIT_OK


def _cmd_train(args) -> int:
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if args.what == "pose":
        n = args.samples or 200
        poses, conds = make_pose_dataset(n, seed=args.seed)
        model, trace = train_pose_model(poses, conds, epochs=args.epochs, seed=args.seed)
        save_pose_model(model, out)
    elif args.what == "refiner":
        if args.scene:
            mesh = load_mesh(args.scene)
        else:
            mesh = build_test_room()
        grid = voxelize(mesh, 0.25)
        n = args.samples or 256
        xs, conds = make_refiner_dataset(grid, n, seed=args.seed, basis_seed=args.basis_seed)
        model, trace = train_place_refiner(xs, conds, basis_seed=args.basis_seed,
                                           epochs=args.epochs, seed=args.seed)
        save_refiner(model, out)
    else:
        n_rooms = args.samples or 6
        dirs, conds = make_mapper_dataset(n_rooms, seed=args.seed,
                                          basis_seed=args.basis_seed)
        model, trace = train_mapper(conds, dirs, basis_seed=args.basis_seed,
                                    epochs=args.epochs, seed=args.seed)
        save_mapper(model, out)
    trace_path = out.with_suffix(out.suffix + ".trace.json")
    artio.save_json({"loss": [float(v) for v in trace]}, trace_path)
    print(f"wrote {out} and {trace_path}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    if not (args.anchors or args.paths or args.trajectories):
        raise ConfigError("nothing to evaluate; pass --anchors, --paths, or --trajectories")
    anchors = artio.load_json(args.anchors) if args.anchors else None
    paths = artio.load_json(args.paths) if args.paths else None
    trajectories = artio.load_json(args.trajectories) if args.trajectories else None
    report = evaluate_artifacts(anchors, paths, trajectories, k=args.k)
    text = artio.canonical_dumps(report)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_export_obj(args) -> int:
    if not (args.paths or args.trajectories):
        raise ConfigError("nothing to export; pass --paths or --trajectories")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.paths:
        if not args.scene:
            raise ConfigError("--paths export needs --scene to recover the floor height")
        mesh = load_mesh(args.scene, up_axis=args.up_axis)
        wmap = build_walkable(voxelize(mesh, args.cell_size))
        docs = artio.load_json(args.paths)
        if not isinstance(docs, list):
            docs = [docs]
        for i, doc in enumerate(docs):
            path = artio.doc_to_path(doc)
            artio.path_to_obj(path, wmap, out_dir / f"path_{i:03d}.obj")
        print(f"wrote {len(docs)} path OBJ files to {out_dir}")
    if args.trajectories:
        docs = artio.load_json(args.trajectories)
        if not isinstance(docs, list):
            docs = [docs]
        for i, doc in enumerate(docs):
            traj = artio.doc_to_trajectory(doc)
            artio.trajectory_to_obj(traj, out_dir / f"trajectory_{i:03d}.obj")
        print(f"wrote {len(docs)} trajectory OBJ files to {out_dir}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = {
        "run": _cmd_run,
        "train": _cmd_train,
        "eval": _cmd_eval,
        "export-obj": _cmd_export_obj,
    }[args.command]
    try:
        return handler(args)
    except Exception as exc:  # mapped onto documented exit codes
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
