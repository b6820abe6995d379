"""Floor-grid path planning with stochastic edge costs.

The planner walks an 8-connected single floor layer.  Edge cost from p to q is
step_length + (1 - m(p, q)) where step_length is 1 or sqrt(2) in cell units
and m is a cost-field value in [0, 1]: m == 1 recovers plain shortest paths,
smaller m makes a move less attractive.  The heuristic stays Euclidean
distance in cell units, which never overestimates, so paths are cost-optimal
for every field.  Ties pop in (f, h, cell linear index) order.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import NoFloorError, NoPathError
from .nn import CvaeModel, cvae_decode, load_model, make_cvae, save_model, train_cvae
from .scene import TriangleMesh, VoxelGrid, bps_basis, bps_encode_many

# compass order: index k points along angle k * 45 degrees
DIRS = ((1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1))
DIR_INDEX = {d: i for i, d in enumerate(DIRS)}
SQRT2 = math.sqrt(2.0)
STEP_LEN = tuple(1.0 if 0 in d else SQRT2 for d in DIRS)
DIR_ANGLES = np.arange(8) * (math.pi / 4.0)

DEFAULT_BODY_RADIUS = 0.3
DEFAULT_BODY_HEIGHT = 1.7
MAPPER_KAPPA = 4.0
MAPPER_CAGE_HALF_EXTENT = 1.0  # 2 m cubic crop around each cell


@dataclass
class WalkableMap:
    """Boolean walkability over one z-layer of a voxel grid."""

    walkable: np.ndarray        # (nx,ny) bool
    floor_layer: int
    origin: np.ndarray          # grid origin, (3,)
    cell_size: float

    @property
    def shape(self) -> tuple[int, int]:
        return self.walkable.shape

    def cell_center(self, ij) -> np.ndarray:
        i, j = int(ij[0]), int(ij[1])
        return self.origin + (np.array([i, j, self.floor_layer]) + 0.5) * self.cell_size

    def linear_index(self, ij) -> int:
        return int(ij[0]) * self.walkable.shape[1] + int(ij[1])

    def cell3(self, ij) -> tuple[int, int, int]:
        return (int(ij[0]), int(ij[1]), self.floor_layer)


def flat_map(walkable: np.ndarray, cell_size: float = 1.0) -> WalkableMap:
    """Wrap a raw boolean array as a floor at layer 0 (test and oracle helper)."""
    return WalkableMap(
        walkable=np.asarray(walkable, dtype=bool),
        floor_layer=0,
        origin=np.zeros(3),
        cell_size=float(cell_size),
    )


def find_floor_layer(grid: VoxelGrid, min_layer: int = 0) -> int:
    """Lowest z-layer >= min_layer containing a free cell supported by
    occupancy below it (layer 0 counts the grid boundary as support)."""
    occ = grid.occupied
    for k in range(min_layer, grid.dims[2]):
        free = ~occ[:, :, k]
        support = occ[:, :, k - 1] if k > 0 else np.ones(grid.dims[:2], dtype=bool)
        if np.any(free & support):
            return k
    raise NoFloorError("scene has no free floor: no layer has supported free cells")


def _cylinder_kernel(radius: float, cell_size: float) -> np.ndarray:
    """Boolean stamp of column offsets whose cell rectangle comes within
    `radius` (in the xy-plane) of a cell center."""
    reach = int(math.ceil(radius / cell_size)) + 1
    offs = np.arange(-reach, reach + 1)
    dx = np.abs(offs[:, None]) * cell_size - cell_size / 2.0
    dy = np.abs(offs[None, :]) * cell_size - cell_size / 2.0
    d = np.hypot(np.maximum(dx, 0.0), np.maximum(dy, 0.0))
    return d < radius


def build_walkable(grid: VoxelGrid, radius: float = DEFAULT_BODY_RADIUS,
                   height: float = DEFAULT_BODY_HEIGHT) -> WalkableMap:
    """Cells on the floor layer where an upright cylinder (base at the cell
    center, extending `height` up) clears all occupancy and the cell has
    support below.  Space outside the grid counts as free.

    Candidate floor layers are scanned bottom-up; a layer whose clearance
    test rejects every supported cell (e.g. the padding layer below a ground
    slab) is skipped in favor of the next supported layer.
    """
    nx, ny, nz = grid.dims
    kernel = _cylinder_kernel(radius, grid.cell_size)
    k_floor = 0
    while True:
        k_floor = find_floor_layer(grid, k_floor)
        z0 = grid.origin[2] + (k_floor + 0.5) * grid.cell_size
        k_top = min(nz, int(math.floor((z0 + height - grid.origin[2]) / grid.cell_size)) + 1)
        obstacle_2d = np.any(grid.occupied[:, :, k_floor:k_top], axis=2)
        blocked = ndimage.binary_dilation(obstacle_2d, structure=kernel)
        support = grid.occupied[:, :, k_floor - 1] if k_floor > 0 else np.ones((nx, ny), dtype=bool)
        walkable = support & ~grid.occupied[:, :, k_floor] & ~blocked
        if np.any(walkable):
            return WalkableMap(
                walkable=walkable,
                floor_layer=k_floor,
                origin=np.asarray(grid.origin, dtype=float),
                cell_size=grid.cell_size,
            )
        k_floor += 1
        if k_floor >= nz:
            raise NoFloorError("scene has no free floor: clearance test rejected every cell")


@dataclass
class CostField:
    """Per-(cell, direction) cost-field values m in [0, 1].

    kind 'standard' stores no array and reads as a constant 1.  The seed
    records provenance for manifests and exports.
    """

    kind: str
    seed: int | None = None
    values: np.ndarray | None = None  # (nx,ny,8)

    def m(self, i: int, j: int, direction: int) -> float:
        if self.values is None:
            return 1.0
        return float(self.values[i, j, direction])


def field_standard() -> CostField:
    return CostField(kind="standard", seed=None, values=None)


def field_random(wmap: WalkableMap, seed: int) -> CostField:
    """Independent uniform m per ordered (cell, direction) pair."""
    rng = np.random.default_rng(seed)
    nx, ny = wmap.shape
    return CostField(kind="random", seed=seed, values=rng.random((nx, ny, 8)))


def field_shared(wmap: WalkableMap, seed: int) -> CostField:
    """One uniform 8-vector shared by every cell: a global direction bias."""
    rng = np.random.default_rng(seed)
    nx, ny = wmap.shape
    u = rng.random(8)
    return CostField(kind="shared", seed=seed, values=np.broadcast_to(u, (nx, ny, 8)).copy())


@dataclass
class MapperModel:
    """CVAE that decodes (z, BPS context) into a movement direction; the field
    value for compass direction k is exp(kappa * (cos(angle_k - angle) - 1))."""

    cvae: CvaeModel
    kappa: float = MAPPER_KAPPA

    @property
    def basis_seed(self) -> int:
        return self.cvae.basis_seed

    @property
    def n_basis(self) -> int:
        return self.cvae.n_basis


def mapper_decode_direction(model: MapperModel, z: np.ndarray, features: np.ndarray) -> np.ndarray:
    """Unit 2D directions, one per feature row.  The decoder emits the
    direction normalized to [0,1]^2 (its training target); this maps it back."""
    out = np.atleast_2d(cvae_decode(model.cvae, z, features))
    d = 2.0 * out - 1.0
    norms = np.linalg.norm(d, axis=1, keepdims=True)
    d = np.where(norms > 1e-9, d / np.maximum(norms, 1e-12), np.array([1.0, 0.0]))
    return d


def direction_scores(model: MapperModel, z: np.ndarray, features: np.ndarray) -> np.ndarray:
    """(N, 8) von-Mises-shaped soft one-hot over compass directions, in (0, 1]."""
    d = mapper_decode_direction(model, z, features)
    ang = np.arctan2(d[:, 1], d[:, 0])
    cos_delta = np.cos(DIR_ANGLES[None, :] - ang[:, None])
    return np.exp(model.kappa * (cos_delta - 1.0))


def mapper_features(wmap: WalkableMap, grid: VoxelGrid, mesh: TriangleMesh,
                    basis: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """BPS features for every walkable cell center; reusable across episodes
    since they depend only on scene and basis.  Returns (cells (W,2), features)."""
    cells = np.argwhere(wmap.walkable)
    centers = wmap.origin + (
        np.concatenate([cells, np.full((len(cells), 1), wmap.floor_layer)], axis=1) + 0.5
    ) * wmap.cell_size
    feats = bps_encode_many(mesh, centers, MAPPER_CAGE_HALF_EXTENT, basis)
    return cells, feats


def field_mapper(model: MapperModel, wmap: WalkableMap, grid: VoxelGrid,
                 mesh: TriangleMesh, seed: int,
                 features: tuple[np.ndarray, np.ndarray] | None = None,
                 basis_seed: int | None = None) -> CostField:
    """Sample one latent for the episode and decode a direction preference at
    every walkable cell.  Pass `features` (from mapper_features) to amortize
    the BPS encoding across episodes."""
    if model.basis_seed is None:
        raise ValueError("mapper model has no basis seed recorded")
    if basis_seed is not None and basis_seed != model.basis_seed:
        raise ValueError(
            f"basis seed {basis_seed} does not match model basis seed {model.basis_seed}"
        )
    if features is None:
        basis = bps_basis(model.n_basis, model.basis_seed)
        features = mapper_features(wmap, grid, mesh, basis)
    cells, feats = features
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(model.cvae.d_z)
    scores = direction_scores(model, z, feats)
    nx, ny = wmap.shape
    values = np.ones((nx, ny, 8))
    values[cells[:, 0], cells[:, 1], :] = scores
    return CostField(kind="mapper", seed=seed, values=values)


def train_mapper(features: np.ndarray, directions: np.ndarray, *, basis_seed: int,
                 seed: int = 0, epochs: int = 40, batch_size: int = 8,
                 kl_weight: float = 1e-3, learning_rate: float = 1e-4,
                 d_z: int = 32, hidden: int = 256,
                 kappa: float = MAPPER_KAPPA) -> tuple[MapperModel, list[float]]:
    """Fit the direction CVAE on (BPS feature, direction-in-[0,1]^2) pairs."""
    features = np.asarray(features, dtype=float)
    directions = np.asarray(directions, dtype=float)
    model = make_cvae(
        x_dim=2, cond_dim=features.shape[1], d_z=d_z, hidden=hidden,
        seed=seed, output_activation="sigmoid",
    )
    model.basis_seed = basis_seed
    model.n_basis = features.shape[1]
    model, trace = train_cvae(
        model, directions, features, epochs=epochs, batch_size=batch_size,
        kl_weight=kl_weight, learning_rate=learning_rate, seed=seed,
    )
    return MapperModel(cvae=model, kappa=kappa), trace


def save_mapper(model: MapperModel, path):
    save_model(model.cvae, path, kind="mapper", extra={"kappa": model.kappa})


def load_mapper(path) -> MapperModel:
    cvae, kind, extra = load_model(path)
    if kind != "mapper":
        raise ValueError(f"checkpoint kind {kind!r} is not a mapper")
    return MapperModel(cvae=cvae, kappa=float(extra.get("kappa", MAPPER_KAPPA)))


@dataclass
class GridPath:
    """Cell path on the floor layer plus its total adapted cost."""

    cells: list[tuple[int, int, int]]
    cost: float


def _path_cost(cells_2d: list[tuple[int, int]], field: CostField) -> float:
    """Recount the path cost from its steps.  Axial/diagonal step lengths are
    tallied as integers first so equal-cost paths produce bit-equal floats."""
    n_axial = 0
    n_diag = 0
    extra = 0.0
    for (i, j), (i2, j2) in zip(cells_2d[:-1], cells_2d[1:]):
        d = DIR_INDEX[(i2 - i, j2 - j)]
        if STEP_LEN[d] == 1.0:
            n_axial += 1
        else:
            n_diag += 1
        extra += 1.0 - field.m(i, j, d)
    return n_axial * 1.0 + n_diag * SQRT2 + extra


def astar(wmap: WalkableMap, start, goal, field: CostField | None = None) -> GridPath:
    """Cost-optimal path between walkable cells under the adapted edge cost.

    Raises NoPathError when the goal is unreachable; start or goal outside the
    walkable set is a precondition violation and raises ValueError.
    """
    if field is None:
        field = field_standard()
    start = (int(start[0]), int(start[1]))
    goal = (int(goal[0]), int(goal[1]))
    nx, ny = wmap.shape
    for name, cell in (("start", start), ("goal", goal)):
        if not (0 <= cell[0] < nx and 0 <= cell[1] < ny):
            raise ValueError(f"{name} cell {cell} outside grid {wmap.shape}")
        if not wmap.walkable[cell]:
            raise ValueError(f"{name} cell {cell} is not walkable")
    if start == goal:
        return GridPath(cells=[wmap.cell3(start)], cost=0.0)

    def heuristic(c):
        return math.hypot(c[0] - goal[0], c[1] - goal[1])

    g_score = {start: 0.0}
    came_from: dict[tuple[int, int], tuple[int, int]] = {}
    closed: set[tuple[int, int]] = set()
    h0 = heuristic(start)
    open_heap = [(h0, h0, wmap.linear_index(start), start)]
    while open_heap:
        f, h, _, current = heapq.heappop(open_heap)
        if current in closed:
            continue
        if current == goal:
            cells = [current]
            while cells[-1] in came_from:
                cells.append(came_from[cells[-1]])
            cells.reverse()
            return GridPath(
                cells=[wmap.cell3(c) for c in cells],
                cost=_path_cost(cells, field),
            )
        closed.add(current)
        ci, cj = current
        for d, (di, dj) in enumerate(DIRS):
            ni, nj = ci + di, cj + dj
            if not (0 <= ni < nx and 0 <= nj < ny) or not wmap.walkable[ni, nj]:
                continue
            nxt = (ni, nj)
            if nxt in closed:
                continue
            tentative = g_score[current] + STEP_LEN[d] + (1.0 - field.m(ci, cj, d))
            if tentative < g_score.get(nxt, math.inf):
                g_score[nxt] = tentative
                came_from[nxt] = current
                nh = heuristic(nxt)
                heapq.heappush(open_heap, (tentative + nh, nh, wmap.linear_index(nxt), nxt))
    raise NoPathError(f"no path from {start} to {goal}")


def nearest_walkable_cell(wmap: WalkableMap, point) -> tuple[int, int]:
    """Walkable cell whose center is closest to `point` in the xy-plane."""
    cells = np.argwhere(wmap.walkable)
    centers = wmap.origin[:2] + (cells + 0.5) * wmap.cell_size
    p = np.asarray(point, dtype=float)[:2]
    d = np.linalg.norm(centers - p, axis=1)
    best = cells[int(np.argmin(d))]
    return int(best[0]), int(best[1])


def path_points(path: GridPath, wmap: WalkableMap) -> np.ndarray:
    """World-space polyline through the path's cell centers, (N,3)."""
    cells = np.asarray(path.cells, dtype=float)
    return wmap.origin + (cells + 0.5) * wmap.cell_size
