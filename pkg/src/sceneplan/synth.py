"""Synthetic assets: welded box meshes, a few fixed rooms used by the tests
and scripts, and generated training sets for the pose, refiner, and mapper
models.

Room dimensions are chosen binary-exact (0.9375, 0.42 via cell windows,
6.5625) so voxel layer boundaries never land on face planes by accident.
"""

from __future__ import annotations

import math

import numpy as np

from .anchors import ACTIONS, POSE_DIM, action_one_hot
from .planner import astar, build_walkable, field_random, path_points
from .rotations import yaw_to_rot6d
from .scene import TriangleMesh, VoxelGrid, bps_basis, bps_encode, voxelize

FLOOR_THICKNESS = 0.9375
SEAT_HEIGHT = 0.55
SEAT_PAN_BOTTOM = 0.4375   # pan floats: legs omitted so feet fit underneath
TABLE_HEIGHT = 0.72
POSE_MEAN = 2.0
POSE_STD = 0.3
POSE_BLOCK = 6          # one 6-wide mean block per action inside the 32-dim code
MAPPER_FRAME_SPACING = 0.045
MAPPER_CHUNK = 60


def _weld_key(p: np.ndarray) -> tuple:
    return tuple(round(float(c), 9) for c in p)


def box_mesh(lo, hi, subdivisions: int = 1) -> TriangleMesh:
    """Axis-aligned box as a welded triangle mesh with each face split into
    subdivisions x subdivisions quads (two triangles each, outward winding)."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if np.any(hi <= lo):
        raise ValueError("box must have positive extent on every axis")
    s = int(subdivisions)
    if s < 1:
        raise ValueError("subdivisions must be >= 1")
    verts: list[np.ndarray] = []
    index: dict[tuple, int] = {}
    faces: list[tuple[int, int, int]] = []

    def vid(p: np.ndarray) -> int:
        key = _weld_key(p)
        if key not in index:
            index[key] = len(verts)
            verts.append(p)
        return index[key]

    for axis in range(3):
        ua, va = (axis + 1) % 3, (axis + 2) % 3
        for side in (0, 1):
            grid_ids = np.empty((s + 1, s + 1), dtype=int)
            for i in range(s + 1):
                for j in range(s + 1):
                    p = np.empty(3)
                    p[axis] = hi[axis] if side else lo[axis]
                    p[ua] = lo[ua] + (hi[ua] - lo[ua]) * i / s
                    p[va] = lo[va] + (hi[va] - lo[va]) * j / s
                    grid_ids[i, j] = vid(p)
            for i in range(s):
                for j in range(s):
                    a = grid_ids[i, j]
                    b = grid_ids[i + 1, j]
                    c = grid_ids[i + 1, j + 1]
                    d = grid_ids[i, j + 1]
                    if side:
                        faces.append((a, b, c))
                        faces.append((a, c, d))
                    else:
                        faces.append((a, c, b))
                        faces.append((a, d, c))
    return TriangleMesh(
        vertices=np.asarray(verts, dtype=float),
        faces=np.asarray(faces, dtype=np.int64),
    )


def merge_meshes(meshes: list[TriangleMesh]) -> TriangleMesh:
    """Concatenate meshes into one, re-welding shared vertices."""
    verts: list[np.ndarray] = []
    index: dict[tuple, int] = {}
    faces: list[np.ndarray] = []
    for mesh in meshes:
        remap = np.empty(len(mesh.vertices), dtype=np.int64)
        for vi, p in enumerate(mesh.vertices):
            key = _weld_key(p)
            if key not in index:
                index[key] = len(verts)
                verts.append(np.asarray(p, dtype=float))
            remap[vi] = index[key]
        faces.append(remap[mesh.faces])
    return TriangleMesh(
        vertices=np.asarray(verts, dtype=float),
        faces=np.concatenate(faces, axis=0),
    )


def write_obj(mesh: TriangleMesh, path, comment: str | None = None) -> None:
    """Write v/f lines, 1-based indices, '%.9g' floats for byte stability."""
    lines = []
    if comment:
        for row in comment.splitlines():
            lines.append(f"# {row}")
    for v in mesh.vertices:
        lines.append(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}")
    for f in mesh.faces:
        lines.append(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _floor(span_x: float, span_y: float, subdivisions: int = 12) -> TriangleMesh:
    hx, hy = span_x / 2.0, span_y / 2.0
    return box_mesh((-hx, -hy, -FLOOR_THICKNESS), (hx, hy, 0.0), subdivisions)


def _seat(cx: float, cy: float) -> TriangleMesh:
    # pan only; open underneath so a sitter's feet reach the floor
    return box_mesh((cx - 0.25, cy - 0.25, SEAT_PAN_BOTTOM),
                    (cx + 0.25, cy + 0.25, SEAT_HEIGHT), 3)


def build_test_room() -> TriangleMesh:
    """6 x 6 m floor, one table-height block, two seat pans."""
    parts = [
        _floor(6.0, 6.0),
        box_mesh((-0.5, 0.8, 0.0), (0.5, 1.6, TABLE_HEIGHT), 4),
        _seat(-1.25, -1.0),
        _seat(1.25, -1.0),
    ]
    return merge_meshes(parts)


def build_two_seat_room() -> TriangleMesh:
    """Floor plus two identical seat pans at (-1.5, 0) and (1.5, 0)."""
    parts = [
        _floor(6.0, 6.0),
        _seat(-1.5, 0.0),
        _seat(1.5, 0.0),
    ]
    return merge_meshes(parts)


def build_hall() -> TriangleMesh:
    """15.5 x 15.5 m hall with a tall central pillar; at cell size 0.25 the
    voxelization comes out exactly 64 x 64 x 32."""
    parts = [
        _floor(15.5, 15.5, 20),
        box_mesh((-0.5, -0.5, 0.0), (0.5, 0.5, 6.5625), 6),
    ]
    return merge_meshes(parts)


def build_walled_room() -> TriangleMesh:
    """Floor split by a full-width wall; the two halves are disconnected."""
    parts = [
        _floor(8.0, 8.0),
        box_mesh((-0.25, -4.0, 0.0), (0.25, 4.0, 2.0), 4),
    ]
    return merge_meshes(parts)


def build_random_room(seed: int, span: float = 8.0, n_blocks: int = 3) -> TriangleMesh:
    """Floor with a few random blocks, used for mapper training traces."""
    rng = np.random.default_rng(seed)
    parts = [_floor(span, span)]
    margin = span / 2.0 - 1.2
    for _ in range(n_blocks):
        cx, cy = rng.uniform(-margin, margin, size=2)
        wx, wy = rng.uniform(0.3, 1.0, size=2)
        h = rng.uniform(0.3, 1.0)
        parts.append(box_mesh((cx - wx / 2, cy - wy / 2, 0.0), (cx + wx / 2, cy + wy / 2, h), 3))
    return merge_meshes(parts)


# ---------------------------------------------------------------------------
# pose model data: mixture of Gaussians, one mean block per action

def pose_mixture_mean(action: str) -> np.ndarray:
    mu = np.zeros(POSE_DIM)
    a = ACTIONS.index(action)
    mu[POSE_BLOCK * a:POSE_BLOCK * (a + 1)] = POSE_MEAN
    return mu


def sample_prior_pose(action: str, seed: int) -> np.ndarray:
    """Draw one pose vector from the synthetic action mixture."""
    rng = np.random.default_rng(seed)
    return pose_mixture_mean(action) + POSE_STD * rng.standard_normal(POSE_DIM)


def nearest_mixture_action(pose: np.ndarray) -> str:
    """Action whose mixture mean is closest to the pose vector."""
    d = [float(np.sum((pose - pose_mixture_mean(a)) ** 2)) for a in ACTIONS]
    return ACTIONS[int(np.argmin(d))]


def make_pose_dataset(n_per_action: int, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Returns (poses (N,32), one-hot actions (N,5)), N = 5 * n_per_action."""
    rng = np.random.default_rng(seed)
    poses, conds = [], []
    for action in ACTIONS:
        mu = pose_mixture_mean(action)
        poses.append(mu + POSE_STD * rng.standard_normal((n_per_action, POSE_DIM)))
        conds.append(np.tile(action_one_hot(action), (n_per_action, 1)))
    return np.concatenate(poses), np.concatenate(conds)


# ---------------------------------------------------------------------------
# placement refiner data: sub-cell offsets recovered from snapped placements

def make_refiner_dataset(grid: VoxelGrid, n: int, seed: int = 0, *,
                         basis_seed: int = 7, n_basis: int = 256
                         ) -> tuple[np.ndarray, np.ndarray]:
    """Ground-truth placements jittered off the cell lattice.

    x rows are [dt (3), dphi (6)] where dt is the sub-cell translation lost to
    snapping and dphi the orientation residual off the 45-degree fan.
    Conditions are [pose (32), surroundings (n_basis)] at the snapped spot.
    """
    if grid.mesh is None:
        raise ValueError("grid must carry its source mesh for surround encoding")
    rng = np.random.default_rng(seed)
    basis = bps_basis(n_basis, basis_seed)
    cs = grid.cell_size
    free = ~grid.occupied
    cells = np.argwhere(free)
    xs, conds = [], []
    for _ in range(n):
        cell = cells[rng.integers(len(cells))]
        center = grid.cell_center(cell)
        dt = rng.uniform(-cs / 2.0, cs / 2.0, size=3)
        dt[2] *= 0.25          # vertical snapping error is small in practice
        yaw_idx = rng.integers(8)
        yaw_snap = yaw_idx * (math.pi / 4.0)
        yaw_true = yaw_snap + rng.uniform(-math.pi / 8.0, math.pi / 8.0)
        dphi = yaw_to_rot6d(yaw_true) - yaw_to_rot6d(yaw_snap)
        action = ACTIONS[rng.integers(len(ACTIONS))]
        pose = sample_prior_pose(action, int(rng.integers(2**32)))
        feat = bps_encode(grid.mesh, center, 1.0, basis)
        xs.append(np.concatenate([dt, dphi]))
        conds.append(np.concatenate([pose, feat]))
    return np.asarray(xs), np.asarray(conds)


# ---------------------------------------------------------------------------
# mapper data: walking traces through random rooms

def make_mapper_dataset(n_rooms: int, seed: int = 0, *, basis_seed: int = 7,
                        n_basis: int = 256, cell_size: float = 0.25,
                        traces_per_room: int = 3
                        ) -> tuple[np.ndarray, np.ndarray]:
    """Direction targets with local-geometry conditions harvested from
    grid-planned walks.

    Each room contributes a few start/goal walks planned under a randomized
    cost field.  The walks are resampled to a fixed spatial rate and split
    into fixed-length chunks; each chunk yields one (direction, surroundings)
    pair, with the mean travel direction remapped to [0,1]^2 so a sigmoid
    decoder can emit it.
    """
    rng = np.random.default_rng(seed)
    basis = bps_basis(n_basis, basis_seed)
    dirs, conds = [], []
    for room_i in range(n_rooms):
        mesh = build_random_room(seed * 1000 + room_i)
        grid = voxelize(mesh, cell_size)
        wmap = build_walkable(grid)
        walk_cells = np.argwhere(wmap.walkable)
        if len(walk_cells) < 2:
            continue
        for _ in range(traces_per_room):
            a, b = rng.integers(len(walk_cells), size=2)
            if np.all(walk_cells[a] == walk_cells[b]):
                continue
            field = field_random(wmap, int(rng.integers(2**32)))
            try:
                path = astar(wmap, tuple(walk_cells[a]), tuple(walk_cells[b]), field)
            except Exception:
                continue
            pts = path_points(path, wmap)
            frames = _resample_spacing(pts, MAPPER_FRAME_SPACING)
            for c0 in range(0, len(frames) - MAPPER_CHUNK + 1, MAPPER_CHUNK):
                chunk = frames[c0:c0 + MAPPER_CHUNK]
                step = chunk[-1] - chunk[0]
                norm = np.linalg.norm(step[:2])
                if norm < 1e-9:
                    continue
                u = step[:2] / norm
                center = chunk[len(chunk) // 2]
                feat = bps_encode(mesh, center, 1.0, basis)
                dirs.append((u + 1.0) / 2.0)
                conds.append(feat)
    if not dirs:
        raise ValueError("no usable traces; increase rooms or traces per room")
    return np.asarray(dirs), np.asarray(conds)


def _resample_spacing(points: np.ndarray, spacing: float) -> np.ndarray:
    """Resample a polyline at fixed arc-length spacing (keeps both ends)."""
    seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    if total < spacing:
        return points[[0, -1]]
    n = int(total / spacing) + 1
    targets = np.linspace(0.0, total, n)
    out = np.empty((n, points.shape[1]))
    for d in range(points.shape[1]):
        out[:, d] = np.interp(targets, cum, points[:, d])
    return out
