"""Test-local oracles and synthetic fixtures, implemented independently of
the library code they check."""

import heapq
import math

import numpy as np

from sceneplan.scene import VoxelGrid

SQRT2 = math.sqrt(2.0)

# compass order matches the planner: index k is a 45*k degree heading
OCT_STEPS = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)]


def dijkstra_cost(walkable, start, goal, multiplier=None):
    """Reference shortest-path cost on the 8-connected grid.

    Step cost is `length + (1 - m(from_cell, direction))`; `multiplier` is
    either None (all ones) or an (nx, ny, 8) array.  With a unit multiplier
    the cost is re-expressed from integer axial/diagonal step counts so the
    result is bit-comparable.  Returns math.inf when unreachable.
    """
    nx, ny = walkable.shape
    dist = {start: (0.0, 0, 0)}
    heap = [(0.0, 0, 0, start)]
    done = set()
    while heap:
        d, ax, dg, cell = heapq.heappop(heap)
        if cell in done:
            continue
        done.add(cell)
        if cell == goal:
            return ax * 1.0 + dg * SQRT2 if multiplier is None else d
        i, j = cell
        for k, (di, dj) in enumerate(OCT_STEPS):
            ni, nj = i + di, j + dj
            if not (0 <= ni < nx and 0 <= nj < ny) or not walkable[ni, nj]:
                continue
            diag = bool(di and dj)
            length = SQRT2 if diag else 1.0
            m = 1.0 if multiplier is None else float(multiplier[i, j, k])
            nd = d + length + (1.0 - m)
            if nd < dist.get((ni, nj), (math.inf,))[0]:
                dist[(ni, nj)] = (nd, ax + (not diag), dg + diag)
                heapq.heappush(heap, (nd, ax + (not diag), dg + diag, (ni, nj)))
    entry = dist.get(goal)
    if entry is None:
        return math.inf
    return entry[1] * 1.0 + entry[2] * SQRT2 if multiplier is None else entry[0]


def dijkstra_all(walkable, source):
    """Distance map from `source` to every reachable cell (unit multiplier)."""
    nx, ny = walkable.shape
    dist = np.full((nx, ny), np.inf)
    dist[source] = 0.0
    heap = [(0.0, source)]
    while heap:
        d, (i, j) = heapq.heappop(heap)
        if d > dist[i, j]:
            continue
        for di, dj in OCT_STEPS:
            ni, nj = i + di, j + dj
            if not (0 <= ni < nx and 0 <= nj < ny) or not walkable[ni, nj]:
                continue
            nd = d + (SQRT2 if di and dj else 1.0)
            if nd < dist[ni, nj]:
                dist[ni, nj] = nd
                heapq.heappush(heap, (nd, (ni, nj)))
    return dist


def random_map(seed, max_side=32, p_blocked=0.25):
    """Seeded random walkable mask with a reachable far-apart start/goal."""
    rng = np.random.default_rng(seed)
    nx = int(rng.integers(8, max_side + 1))
    ny = int(rng.integers(8, max_side + 1))
    walk = rng.random((nx, ny)) > p_blocked
    free = np.argwhere(walk)
    start = tuple(int(v) for v in free[rng.integers(len(free))])
    dist = dijkstra_all(walk, start)
    reach = np.argwhere(np.isfinite(dist) & walk)
    far = reach[np.argmax(dist[reach[:, 0], reach[:, 1]])]
    goal = (int(far[0]), int(far[1]))
    return walk, start, goal


def make_flat_grid(nx=6, ny=6, nz=8, cell=0.25):
    """Free box over a one-layer floor slab with an exact 1-D linear sdf.

    Uniform in x and y by construction, so placement candidates at the same
    height tie exactly.
    """
    occupied = np.zeros((nx, ny, nz), dtype=bool)
    occupied[:, :, 0] = True
    floor_top = cell  # boundary between layer 0 and layer 1
    zc = (np.arange(nz) + 0.5) * cell
    sdf = np.broadcast_to(zc - floor_top, (nx, ny, nz)).copy()
    return VoxelGrid(origin=np.zeros(3), cell_size=cell, dims=(nx, ny, nz),
                     occupied=occupied, sdf=sdf, watertight=True, mesh=None)


def make_uniform_grid(value, nx=8, ny=8, nz=8, cell=0.25):
    """All-free grid whose sdf is a constant; trilinear interp stays exact."""
    occupied = np.zeros((nx, ny, nz), dtype=bool)
    sdf = np.full((nx, ny, nz), float(value))
    return VoxelGrid(origin=np.zeros(3), cell_size=cell, dims=(nx, ny, nz),
                     occupied=occupied, sdf=sdf, watertight=True, mesh=None)


def make_tie_grid(nx=8, ny=8, nz=12, cell=0.25, value=0.2):
    """Support slab plus constant positive sdf: every candidate whose body
    stays inside the interpolation hull scores identically, forcing exact
    ties between placement candidates."""
    occupied = np.zeros((nx, ny, nz), dtype=bool)
    occupied[:, :, 0] = True
    sdf = np.full((nx, ny, nz), float(value))
    return VoxelGrid(origin=np.zeros(3), cell_size=cell, dims=(nx, ny, nz),
                     occupied=occupied, sdf=sdf, watertight=True, mesh=None)


def splitmix64_reference(x):
    """Independent splitmix64 output function (Steele et al. constants)."""
    mask = (1 << 64) - 1
    z = (x + 0x9E3779B97F4A7C15) & mask
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & mask
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & mask
    return (z ^ (z >> 31)) & mask


def derive_seed_reference(master, stage, index):
    """Fold (master, stage, index) through splitmix64, xor-chaining stages."""
    mask = (1 << 64) - 1
    h = splitmix64_reference(master & mask)
    h = splitmix64_reference(h ^ (stage & mask))
    return splitmix64_reference(h ^ (index & mask))
