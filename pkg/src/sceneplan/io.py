"""Artifact files: canonical JSON writers/loaders with structural validation,
plus OBJ exports of paths and trajectories for eyeballing in a mesh viewer.

All writers emit sorted-key, 2-space-indented JSON so identical content is
identical bytes.
"""

from __future__ import annotations

import json
import math
from typing import Any

import numpy as np

from .anchors import ACTIONS, POSE_DIM, Anchor
from .errors import SchemaError
from .planner import GridPath, WalkableMap
from .trajectory import Trajectory

SCHEMA_VERSION = 1


def canonical_dumps(doc: Any) -> str:
    return json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n"


def save_json(doc: Any, path) -> None:
    with open(path, "w") as fh:
        fh.write(canonical_dumps(doc))


def load_json(path) -> Any:
    with open(path) as fh:
        return json.load(fh)


# ---------------------------------------------------------------------------
# validation helpers: every failure names the offending field path

def _fail(where: str, msg: str):
    raise SchemaError(f"{where}: {msg}")


def _number(v, where: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        _fail(where, f"expected number, got {type(v).__name__}")
    if not math.isfinite(v):
        _fail(where, "expected finite number")
    return float(v)


def _integer(v, where: str) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        _fail(where, f"expected integer, got {type(v).__name__}")
    return v


def _vector(v, n: int, where: str) -> list[float]:
    if not isinstance(v, list) or len(v) != n:
        _fail(where, f"expected list of {n} numbers")
    return [_number(x, f"{where}[{i}]") for i, x in enumerate(v)]


def _cell(v, where: str) -> list[int]:
    if not isinstance(v, list) or len(v) != 3:
        _fail(where, "expected list of 3 integers")
    return [_integer(x, f"{where}[{i}]") for i, x in enumerate(v)]


def _obj(v, where: str) -> dict:
    if not isinstance(v, dict):
        _fail(where, f"expected object, got {type(v).__name__}")
    return v


def _get(doc: dict, key: str, where: str):
    if key not in doc:
        _fail(f"{where}.{key}" if where else key, "missing")
    return doc[key]


def _action(v, where: str) -> str:
    if v not in ACTIONS:
        _fail(where, f"unknown action {v!r}")
    return v


# ---------------------------------------------------------------------------
# anchors

def anchors_to_doc(anchors: list[Anchor]) -> list[dict]:
    doc = []
    for a in anchors:
        scores = None
        if a.scores is not None:
            scores = {k: float(a.scores[k])
                      for k in ("affordance", "penetration", "diversity_penalty")}
        doc.append({
            "action": a.action,
            "t": [float(x) for x in a.t],
            "phi": [float(x) for x in a.phi],
            "theta": [float(x) for x in a.theta],
            "cell": None if a.cell is None else int(a.cell),
            "yaw_deg": None if a.yaw is None else float(math.degrees(a.yaw)),
            "scores": scores,
        })
    return doc


def validate_anchors(doc, require_theta: bool = True) -> None:
    if not isinstance(doc, list):
        _fail("anchors", "expected a list of anchor records")
    for i, rec in enumerate(doc):
        where = f"anchors[{i}]"
        _obj(rec, where)
        _action(_get(rec, "action", where), f"{where}.action")
        _vector(_get(rec, "t", where), 3, f"{where}.t")
        _vector(_get(rec, "phi", where), 6, f"{where}.phi")
        if require_theta or rec.get("theta") is not None:
            _vector(_get(rec, "theta", where), POSE_DIM, f"{where}.theta")
        cell = _get(rec, "cell", where)
        if cell is not None:
            _integer(cell, f"{where}.cell")
        yaw = _get(rec, "yaw_deg", where)
        if yaw is not None:
            _number(yaw, f"{where}.yaw_deg")
        scores = _get(rec, "scores", where)
        if scores is not None:
            _obj(scores, f"{where}.scores")
            for k in ("affordance", "penetration", "diversity_penalty"):
                _number(_get(scores, k, f"{where}.scores"), f"{where}.scores.{k}")


def doc_to_anchors(doc, require_theta: bool = True) -> list[Anchor]:
    validate_anchors(doc, require_theta=require_theta)
    out = []
    for rec in doc:
        theta = rec.get("theta")
        out.append(Anchor(
            t=np.asarray(rec["t"], dtype=float),
            phi=np.asarray(rec["phi"], dtype=float),
            theta=np.zeros(POSE_DIM) if theta is None else np.asarray(theta, dtype=float),
            action=rec["action"],
            cell=None if rec["cell"] is None else int(rec["cell"]),
            yaw=None if rec["yaw_deg"] is None else math.radians(rec["yaw_deg"]),
            scores=rec["scores"],
        ))
    return out


# ---------------------------------------------------------------------------
# grid paths

def path_to_doc(path: GridPath, field_kind: str, field_seed: int | None) -> dict:
    return {
        "start": list(path.cells[0]),
        "goal": list(path.cells[-1]),
        "field": {"kind": field_kind, "seed": field_seed},
        "cells": [list(c) for c in path.cells],
        "cost": float(path.cost),
    }


def validate_path(doc) -> None:
    _obj(doc, "path")
    start = _cell(_get(doc, "start", "path"), "path.start")
    goal = _cell(_get(doc, "goal", "path"), "path.goal")
    field = _obj(_get(doc, "field", "path"), "path.field")
    kind = _get(field, "kind", "path.field")
    if kind not in ("standard", "random", "shared", "mapper"):
        _fail("path.field.kind", f"unknown field kind {kind!r}")
    seed = _get(field, "seed", "path.field")
    if seed is not None:
        _integer(seed, "path.field.seed")
    cells = _get(doc, "cells", "path")
    if not isinstance(cells, list) or not cells:
        _fail("path.cells", "expected a non-empty list of cells")
    parsed = [_cell(c, f"path.cells[{i}]") for i, c in enumerate(cells)]
    _number(_get(doc, "cost", "path"), "path.cost")
    if parsed[0] != start:
        _fail("path.start", "does not match cells[0]")
    if parsed[-1] != goal:
        _fail("path.goal", "does not match cells[-1]")


def doc_to_path(doc) -> GridPath:
    validate_path(doc)
    return GridPath(cells=[tuple(c) for c in doc["cells"]], cost=float(doc["cost"]))


# ---------------------------------------------------------------------------
# trajectories

def trajectory_to_doc(traj: Trajectory) -> dict:
    frames = []
    for t, phi, action in zip(traj.frames_t, traj.frames_phi, traj.actions):
        frames.append({
            "t": [float(x) for x in t],
            "phi": [float(x) for x in phi],
            "action": action,
        })
    return {"fps": 1.0 / traj.frame_interval, "frames": frames}


def validate_trajectory_doc(doc) -> None:
    _obj(doc, "trajectory")
    fps = _number(_get(doc, "fps", "trajectory"), "trajectory.fps")
    if fps <= 0:
        _fail("trajectory.fps", "must be positive")
    frames = _get(doc, "frames", "trajectory")
    if not isinstance(frames, list) or not frames:
        _fail("trajectory.frames", "expected a non-empty list of frames")
    for i, fr in enumerate(frames):
        where = f"trajectory.frames[{i}]"
        _obj(fr, where)
        _vector(_get(fr, "t", where), 3, f"{where}.t")
        _vector(_get(fr, "phi", where), 6, f"{where}.phi")
        _action(_get(fr, "action", where), f"{where}.action")


def doc_to_trajectory(doc) -> Trajectory:
    validate_trajectory_doc(doc)
    frames = doc["frames"]
    return Trajectory(
        frames_t=np.asarray([f["t"] for f in frames], dtype=float),
        frames_phi=np.asarray([f["phi"] for f in frames], dtype=float),
        actions=[f["action"] for f in frames],
        frame_interval=1.0 / float(doc["fps"]),
    )


# ---------------------------------------------------------------------------
# metrics and manifest

def validate_metrics(doc) -> None:
    _obj(doc, "metrics")
    _obj(_get(doc, "config", "metrics"), "metrics.config")
    for key, val in doc.items():
        if key == "config":
            continue
        if isinstance(val, (int, float)) and not isinstance(val, bool):
            _number(val, f"metrics.{key}")
        elif isinstance(val, list):
            for i, x in enumerate(val):
                _number(x, f"metrics.{key}[{i}]")
        elif isinstance(val, dict):
            continue
        else:
            _fail(f"metrics.{key}", "expected number, list, or object")


def validate_manifest(doc) -> None:
    _obj(doc, "manifest")
    _integer(_get(doc, "version", "manifest"), "manifest.version")
    _obj(_get(doc, "config", "manifest"), "manifest.config")
    seeds = _obj(_get(doc, "seeds", "manifest"), "manifest.seeds")
    for stage, vals in seeds.items():
        if not isinstance(vals, list):
            _fail(f"manifest.seeds.{stage}", "expected a list of seeds")
        for i, s in enumerate(vals):
            _integer(s, f"manifest.seeds.{stage}[{i}]")
    arts = _get(doc, "artifacts", "manifest")
    if not isinstance(arts, list):
        _fail("manifest.artifacts", "expected a list of file names")
    for i, a in enumerate(arts):
        if not isinstance(a, str):
            _fail(f"manifest.artifacts[{i}]", "expected string")
    timings = _obj(_get(doc, "timings", "manifest"), "manifest.timings")
    for stage, v in timings.items():
        _number(v, f"manifest.timings.{stage}")


# ---------------------------------------------------------------------------
# OBJ exports for inspection

def path_to_obj(path: GridPath, wmap: WalkableMap, out) -> None:
    """Polyline through the walkable-cell centers at floor height."""
    lines = []
    for cell in path.cells:
        p = wmap.cell_center((cell[0], cell[1]))
        lines.append(f"v {p[0]:.9g} {p[1]:.9g} {p[2]:.9g}")
    for i in range(len(path.cells) - 1):
        lines.append(f"l {i + 1} {i + 2}")
    with open(out, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def trajectory_to_obj(traj: Trajectory, out, bodies=None) -> None:
    """Frame polyline; if proxy bodies are given, each capsule axis is added
    as a separate segment so body extent is visible."""
    from .rotations import rot6d_to_matrix

    lines = []
    for t in traj.frames_t:
        lines.append(f"v {t[0]:.9g} {t[1]:.9g} {t[2]:.9g}")
    for i in range(len(traj.frames_t) - 1):
        lines.append(f"l {i + 1} {i + 2}")
    if bodies is not None:
        if len(bodies) != len(traj.frames_t):
            raise ValueError("need one proxy body per frame")
        vi = len(traj.frames_t)
        for t, phi, body in zip(traj.frames_t, traj.frames_phi, bodies):
            rot = rot6d_to_matrix(phi)
            for p0, p1, _r in body.capsules:
                w0 = t + rot @ np.asarray(p0)
                w1 = t + rot @ np.asarray(p1)
                lines.append(f"v {w0[0]:.9g} {w0[1]:.9g} {w0[2]:.9g}")
                lines.append(f"v {w1[0]:.9g} {w1[1]:.9g} {w1[2]:.9g}")
                lines.append(f"l {vi + 1} {vi + 2}")
                vi += 2
    with open(out, "w") as fh:
        fh.write("\n".join(lines) + "\n")
