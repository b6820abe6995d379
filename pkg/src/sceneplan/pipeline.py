"""End-to-end orchestration: scene load, anchor placement, path planning,
trajectory refinement, metric evaluation, artifact export.

Every stage draws its randomness from seeds mixed out of (master seed,
stage id, flat sample index) with a splitmix64 finalizer, so a run is fully
reproducible from the config alone and samples may be computed in any order.
"""

from __future__ import annotations

import dataclasses
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io as artio
from .anchors import (
    ACTIONS,
    POSE_DIM,
    Anchor,
    PlacementConfig,
    load_pose_model,
    load_refiner,
    place_anchor,
    proxy_body,
    refine_placement,
    sample_pose,
)
from .errors import ConfigError, PipelineStageError
from .metrics import (
    CONTACT_TAU,
    PATH_FRACTIONS,
    anchor_diversity,
    apd,
    contact,
    mean_heading_change,
    non_collision,
    path_deviation_std,
)
from .planner import (
    CostField,
    astar,
    build_walkable,
    field_mapper,
    field_random,
    field_shared,
    field_standard,
    load_mapper,
    mapper_features,
    nearest_walkable_cell,
)
from .scene import bps_basis, load_mesh, voxelize
from .synth import sample_prior_pose
from .trajectory import optimize_trajectory, refine_path, split_path, stitch

FIELD_KINDS = ("standard", "random", "shared", "mapper")

# stage ids for seed mixing; stable across releases
STAGE_POSE = 0
STAGE_ANCHOR = 1
STAGE_REFINE = 2
STAGE_PLAN = 3
STAGE_TRAJ = 4
STAGE_PROBE = 5

_MASK = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


def derive_seed(master: int, stage: int, index: int) -> int:
    """64-bit mix of (master, stage, index); documented so replays survive
    refactors of the execution order."""
    h = _splitmix64(master & _MASK)
    h = _splitmix64(h ^ (stage & _MASK))
    h = _splitmix64(h ^ (index & _MASK))
    return h


@dataclass
class RunConfig:
    scene: str
    actions: tuple[str, ...]
    seed: int = 0
    samples: int = 1
    cell_size: float = 0.25
    field: str = "standard"
    up_axis: str = "z"
    out_dir: str = "out"
    pose_checkpoint: str | None = None
    refiner_checkpoint: str | None = None
    mapper_checkpoint: str | None = None
    anchor_samples: int | None = None     # override samples for the anchor stage
    path_samples: int | None = None       # override probe count for path metrics
    plan: bool = True
    trajectory: bool = True
    metrics: bool = True
    top_k: int | None = None
    contact_tau: float = 0.25
    optimize_iterations: int = 30

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "actions" in doc and isinstance(doc["actions"], (list, tuple)):
            doc = dict(doc)
            doc["actions"] = tuple(doc["actions"])
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


def validate_config(config: RunConfig) -> None:
    if not config.actions:
        raise ConfigError("action sequence is empty")
    for a in config.actions:
        if a not in ACTIONS:
            raise ConfigError(f"unknown action {a!r}; expected one of {ACTIONS}")
    if config.samples < 1:
        raise ConfigError("samples must be >= 1")
    if config.field not in FIELD_KINDS:
        raise ConfigError(f"unknown field kind {config.field!r}; expected one of {FIELD_KINDS}")
    if config.cell_size <= 0:
        raise ConfigError("cell_size must be positive")
    if config.field == "mapper" and config.mapper_checkpoint is None:
        raise ConfigError("field 'mapper' requires mapper_checkpoint")
    if config.up_axis not in ("y", "z"):
        raise ConfigError(f"up_axis must be 'y' or 'z', got {config.up_axis!r}")


@dataclass
class RunManifest:
    version: int
    config: dict
    seeds: dict
    artifacts: list[str]
    timings: dict = field(default_factory=dict)

    def to_doc(self) -> dict:
        return {
            "version": self.version,
            "config": self.config,
            "seeds": self.seeds,
            "artifacts": list(self.artifacts),
            "timings": dict(self.timings),
        }


class _StageGuard:
    """Tracks written artifacts; on stage failure removes partial output and
    re-raises tagged with (stage, sample)."""

    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        self.written: list[Path] = []

    def write_json(self, name: str, doc) -> str:
        path = self.out_dir / name
        artio.save_json(doc, path)
        self.written.append(path)
        return name

    def fail(self, stage: str, sample: int | None, exc: Exception):
        for p in self.written:
            try:
                os.unlink(p)
            except OSError:
                pass
        raise PipelineStageError(stage, sample, exc) from exc


def _make_field(kind: str, seed: int, wmap, grid, mapper_model, features) -> CostField | None:
    if kind == "standard":
        return field_standard()
    if kind == "random":
        return field_random(wmap, seed)
    if kind == "shared":
        return field_shared(wmap, seed)
    return field_mapper(mapper_model, wmap, grid, grid.mesh, seed, features=features)


def run_pipeline(config: RunConfig) -> RunManifest:
    validate_config(config)
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    guard = _StageGuard(out_dir)
    timings: dict[str, float] = {}
    seeds: dict[str, list[int]] = {}
    artifacts: list[str] = []
    master = config.seed
    n_samples = config.anchor_samples or config.samples
    n_actions = len(config.actions)

    pose_model = refiner_model = mapper_model = None
    try:
        if config.pose_checkpoint:
            pose_model = load_pose_model(config.pose_checkpoint)
        if config.refiner_checkpoint:
            refiner_model = load_refiner(config.refiner_checkpoint)
        if config.field == "mapper":
            mapper_model = load_mapper(config.mapper_checkpoint)
    except Exception as exc:
        guard.fail("load-models", None, exc)

    t0 = time.perf_counter()
    try:
        mesh = load_mesh(config.scene, up_axis=config.up_axis)
        grid = voxelize(mesh, config.cell_size)
    except Exception as exc:
        guard.fail("scene", None, exc)
    timings["scene"] = time.perf_counter() - t0

    # anchors: across samples the same action slot repels earlier placements
    t0 = time.perf_counter()
    placement = PlacementConfig(contact_tau=config.contact_tau)
    anchors_per_sample: list[list[Anchor]] = []
    placed_by_slot: list[list[Anchor]] = [[] for _ in range(n_actions)]
    seeds["pose"], seeds["anchors"], seeds["refine"] = [], [], []
    for s in range(n_samples):
        sample_anchors = []
        for ai, action in enumerate(config.actions):
            idx = s * n_actions + ai
            pose_seed = derive_seed(master, STAGE_POSE, idx)
            anchor_seed = derive_seed(master, STAGE_ANCHOR, idx)
            seeds["pose"].append(pose_seed)
            seeds["anchors"].append(anchor_seed)
            try:
                if pose_model is not None:
                    theta = sample_pose(pose_model, action, pose_seed)
                else:
                    theta = sample_prior_pose(action, pose_seed)
                anchor = place_anchor(
                    theta, action, grid,
                    placed=placed_by_slot[ai], seed=anchor_seed,
                    top_k=config.top_k, config=placement,
                )
                if refiner_model is not None:
                    refine_seed = derive_seed(master, STAGE_REFINE, idx)
                    seeds["refine"].append(refine_seed)
                    anchor, _ = refine_placement(refiner_model, anchor, grid,
                                                 seed=refine_seed)
            except Exception as exc:
                guard.fail("anchors", s, exc)
            placed_by_slot[ai].append(anchor)
            sample_anchors.append(anchor)
        anchors_per_sample.append(sample_anchors)
    flat_anchors = [a for sample in anchors_per_sample for a in sample]
    artifacts.append(guard.write_json("anchors.json", artio.anchors_to_doc(flat_anchors)))
    timings["anchors"] = time.perf_counter() - t0

    # planner
    wmap = None
    paths_per_sample: list[list] = []
    if config.plan and n_actions >= 2:
        t0 = time.perf_counter()
        seeds["planner"] = []
        try:
            wmap = build_walkable(grid)
            features = None
            if config.field == "mapper":
                basis = bps_basis(mapper_model.n_basis, mapper_model.basis_seed)
                features = mapper_features(wmap, grid, mesh, basis)
        except Exception as exc:
            guard.fail("planner", None, exc)
        path_docs = []
        for s in range(n_samples):
            sample_paths = []
            for leg in range(n_actions - 1):
                idx = s * (n_actions - 1) + leg
                fseed = derive_seed(master, STAGE_PLAN, idx)
                seeds["planner"].append(fseed)
                try:
                    fld = _make_field(config.field, fseed, wmap, grid,
                                      mapper_model, features)
                    start = nearest_walkable_cell(wmap, anchors_per_sample[s][leg].t)
                    goal = nearest_walkable_cell(wmap, anchors_per_sample[s][leg + 1].t)
                    path = astar(wmap, start, goal, fld)
                except Exception as exc:
                    guard.fail("planner", s, exc)
                sample_paths.append(path)
                path_docs.append(artio.path_to_doc(
                    path, config.field,
                    None if config.field == "standard" else fseed,
                ))
            paths_per_sample.append(sample_paths)
        artifacts.append(guard.write_json("paths.json", path_docs))
        timings["planner"] = time.perf_counter() - t0

    # trajectory
    trajectories = []
    if config.trajectory and paths_per_sample:
        t0 = time.perf_counter()
        seeds["trajectory"] = []
        for s in range(n_samples):
            leg_trajs = []
            for leg, path in enumerate(paths_per_sample[s]):
                idx = s * (n_actions - 1) + leg
                base = derive_seed(master, STAGE_TRAJ, idx)
                seeds["trajectory"].append(base)
                try:
                    segs = split_path(
                        path, anchors_per_sample[s][leg],
                        anchors_per_sample[s][leg + 1], grid,
                        seed=base, pose_model=pose_model,
                    )
                    seg_trajs = []
                    for k, seg in enumerate(segs):
                        traj = refine_path(seg, grid,
                                           seed=derive_seed(base, STAGE_TRAJ, k))
                        traj = optimize_trajectory(
                            traj, grid, iterations=config.optimize_iterations)
                        seg_trajs.append(traj)
                    leg_trajs.append(stitch(seg_trajs))
                except Exception as exc:
                    guard.fail("trajectory", s, exc)
            trajectories.append(stitch(leg_trajs))
        artifacts.append(guard.write_json(
            "trajectories.json", [artio.trajectory_to_doc(t) for t in trajectories]))
        timings["trajectory"] = time.perf_counter() - t0

    # metrics
    if config.metrics:
        t0 = time.perf_counter()
        try:
            report = _metrics_report(config, grid, wmap, flat_anchors,
                                     anchors_per_sample, paths_per_sample,
                                     trajectories, mapper_model)
        except Exception as exc:
            guard.fail("metrics", None, exc)
        artifacts.append(guard.write_json("metrics.json", report))
        timings["metrics"] = time.perf_counter() - t0

    manifest = RunManifest(
        version=artio.SCHEMA_VERSION,
        config=dataclasses.asdict(config),
        seeds=seeds,
        artifacts=artifacts,
        timings={k: round(v, 6) for k, v in timings.items()},
    )
    guard.write_json("manifest.json", manifest.to_doc())
    return manifest


def _metrics_report(config, grid, wmap, flat_anchors, anchors_per_sample,
                    paths_per_sample, trajectories, mapper_model) -> dict:
    k_used = min(20, len(flat_anchors))
    report: dict = {
        "config": {
            "K": k_used,
            "fractions": list(PATH_FRACTIONS),
            "tau": CONTACT_TAU,
            "field": config.field,
            "samples": config.samples,
            "probes": config.path_samples or config.samples,
        }
    }
    if len(flat_anchors) >= 2:
        clusters = anchor_diversity(flat_anchors, k=k_used)
        report["anchor_entropy"] = clusters.entropy
        report["anchor_mean_cluster_distance"] = clusters.mean_cluster_distance

    if paths_per_sample:
        flat_paths = [p for sample in paths_per_sample for p in sample]
        report["mean_heading_change"] = float(
            np.mean([mean_heading_change(p) for p in flat_paths]))
        # deviation probe: re-plan sample 0's first leg under fresh seeds and
        # compare against the deterministic standard-field solution
        features = None
        if config.field == "mapper":
            basis = bps_basis(mapper_model.n_basis, mapper_model.basis_seed)
            features = mapper_features(wmap, grid, grid.mesh, basis)
        ref_path = paths_per_sample[0][0]
        start, goal = ref_path.cells[0], ref_path.cells[-1]
        reference = astar(wmap, (start[0], start[1]), (goal[0], goal[1]))
        n_probe = config.path_samples or config.samples
        probes = []
        for j in range(n_probe):
            pseed = derive_seed(config.seed, STAGE_PROBE, j)
            fld = _make_field(config.field, pseed, wmap, grid, mapper_model, features)
            probes.append(astar(wmap, (start[0], start[1]), (goal[0], goal[1]), fld))
        report["path_deviation_std"] = list(
            path_deviation_std(probes, reference).std)

    if len(trajectories) >= 2:
        n_frames = min(len(t) for t in trajectories)
        flat = np.stack([t.frames_t[:n_frames].ravel() for t in trajectories])
        report["apd"] = apd(flat)
    if trajectories:
        nc, ct = [], []
        for traj in trajectories:
            bodies = [proxy_body(np.zeros(POSE_DIM), act) for act in traj.actions]
            nc.append(non_collision(traj, bodies, grid))
            ct.append(contact(traj, bodies, grid, tau=CONTACT_TAU))
        report["non_collision"] = float(np.mean(nc))
        report["contact"] = float(np.mean(ct))
    return report


# ---------------------------------------------------------------------------
# artifact evaluation (the `eval` subcommand)

def evaluate_artifacts(anchors_doc=None, paths_doc=None, trajectories_doc=None,
                       *, k: int = 20,
                       fractions: tuple[float, ...] = PATH_FRACTIONS) -> dict:
    """Metrics over previously exported artifacts.

    Anchor records without pose vectors fall back to position-only features.
    """
    report: dict = {"config": {"K": k, "fractions": list(fractions)}}
    if anchors_doc is not None:
        has_theta = (
            isinstance(anchors_doc, list)
            and all(isinstance(r, dict) and r.get("theta") is not None
                    for r in anchors_doc)
        )
        mode = "full" if has_theta else "position"
        anchors = artio.doc_to_anchors(anchors_doc, require_theta=False)
        clusters = anchor_diversity(anchors, mode=mode, k=k)
        report["config"]["anchor_mode"] = mode
        report["anchor_entropy"] = clusters.entropy
        report["anchor_mean_cluster_distance"] = clusters.mean_cluster_distance
    if paths_doc is not None:
        if not isinstance(paths_doc, list):
            paths_doc = [paths_doc]
        paths = [artio.doc_to_path(d) for d in paths_doc]
        report["mean_heading_change"] = float(
            np.mean([mean_heading_change(p) for p in paths]))
        # deviation is only defined among paths sharing endpoints; use the
        # most-populated endpoint group and report which one it was
        groups: dict = {}
        for p in paths:
            groups.setdefault((p.cells[0], p.cells[-1]), []).append(p)
        key, group = max(groups.items(), key=lambda kv: len(kv[1]))
        if len(group) >= 2:
            report["path_deviation_std"] = list(
                path_deviation_std(group, group[0], fractions=fractions).std)
            report["config"]["deviation_endpoints"] = [list(key[0]), list(key[1])]
            report["config"]["deviation_paths"] = len(group)
    if trajectories_doc is not None:
        if not isinstance(trajectories_doc, list):
            trajectories_doc = [trajectories_doc]
        trajs = [artio.doc_to_trajectory(d) for d in trajectories_doc]
        if len(trajs) >= 2:
            n_frames = min(len(t) for t in trajs)
            flat = np.stack([t.frames_t[:n_frames].ravel() for t in trajs])
            report["apd"] = apd(flat)
    return report
