"""Shared fixtures: bundled rooms, voxel grids and small trained models.

Model fixtures are session scoped because training, while cheap, is the
dominant cost of the suite; every test that needs a trained network reuses
the same checkpoints.  Wall-clock training times are recorded so the timed
end-to-end tests can account for them.
"""

import os

# keep BLAS single threaded before numpy loads; the timed tests assume it
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
             "NUMEXPR_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import time
from pathlib import Path

import numpy as np
import pytest

from sceneplan.anchors import train_place_refiner, train_pose_model
from sceneplan.planner import build_walkable, train_mapper
from sceneplan.scene import voxelize
from sceneplan.synth import (
    build_test_room,
    build_two_seat_room,
    make_mapper_dataset,
    make_pose_dataset,
    make_refiner_dataset,
)

REPO_ROOT = Path(__file__).resolve().parent.parent
SCENES = REPO_ROOT / "scenes"

CELL = 0.25


@pytest.fixture(scope="session")
def test_room_mesh():
    return build_test_room()


@pytest.fixture(scope="session")
def test_room_grid(test_room_mesh):
    return voxelize(test_room_mesh, CELL)


@pytest.fixture(scope="session")
def test_room_wmap(test_room_grid):
    return build_walkable(test_room_grid)


@pytest.fixture(scope="session")
def two_seat_grid():
    return voxelize(build_two_seat_room(), CELL)


@pytest.fixture(scope="session")
def pose_model_info():
    """Pose prior trained on the synthetic mixture; returns model + timings."""
    t0 = time.perf_counter()
    poses, conds = make_pose_dataset(40, seed=0)
    model, trace = train_pose_model(poses, conds, seed=0, epochs=40)
    return {"model": model, "trace": trace, "train_seconds": time.perf_counter() - t0}


@pytest.fixture(scope="session")
def pose_model(pose_model_info):
    return pose_model_info["model"]


@pytest.fixture(scope="session")
def mapper_info():
    """Direction mapper trained on synthetic room traces; returns model + timings."""
    t0 = time.perf_counter()
    dirs, feats = make_mapper_dataset(16, seed=11, traces_per_room=6)
    t1 = time.perf_counter()
    model, trace = train_mapper(feats, dirs, basis_seed=7, epochs=40, seed=5)
    t2 = time.perf_counter()
    return {
        "model": model,
        "trace": trace,
        "dataset_seconds": t1 - t0,
        "train_seconds": t2 - t1,
    }


@pytest.fixture(scope="session")
def mapper_model(mapper_info):
    return mapper_info["model"]


@pytest.fixture(scope="session")
def refiner_model(test_room_grid):
    offsets, conds = make_refiner_dataset(test_room_grid, 64, seed=3)
    model, _ = train_place_refiner(offsets, conds, basis_seed=7, epochs=40, seed=5)
    return model


@pytest.fixture(scope="session")
def checkpoint_dir(tmp_path_factory, pose_model, mapper_model, refiner_model):
    """Directory with the session models saved as checkpoints for CLI runs."""
    from sceneplan.anchors import save_pose_model, save_refiner
    from sceneplan.planner import save_mapper

    d = tmp_path_factory.mktemp("checkpoints")
    save_pose_model(pose_model, d / "pose.json")
    save_refiner(refiner_model, d / "refiner.json")
    save_mapper(mapper_model, d / "mapper.json")
    return d


@pytest.fixture(scope="session")
def scene_paths():
    paths = {name: SCENES / f"{name}.obj"
             for name in ("test_room", "two_seat_room", "hall", "walled_room")}
    for p in paths.values():
        assert p.exists(), f"bundled scene missing: {p}"
    return paths


