"""Triangle-mesh scenes: OBJ ingestion, voxel occupancy with signed distance,
and basis-point-set (BPS) context features.

Voxelization stores the exact nearest-triangle distance at every cell center
(Ericson closest-point-on-triangle, vectorized in chunks).  The sign comes
from +x ray parity evaluated once per (y, z) row of cell centers, with a
fixed jitter ladder retried for rows that graze triangle edges.  Meshes that
fail a welded edge-manifold check are treated as open scans and keep positive
(unsigned) distance everywhere.

Conventions: z is up, gravity is -z, units are meters.  y-up input meshes are
rotated at load time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import MeshParseError, SceneError

_AXES = np.eye(3)
_TINY = 1e-30
_GRAZE_EPS = 1e-9
# (dy, dz) offsets in cell units for parity-ray retry, first entry = no jitter
_ROW_JITTERS = (
    (0.0, 0.0),
    (1.3e-4, 0.7e-4),
    (-0.9e-4, 1.7e-4),
    (1.9e-4, -1.1e-4),
    (-1.5e-4, -0.6e-4),
)


@dataclass
class TriangleMesh:
    """Indexed triangle soup. vertices (V,3) float64, faces (F,3) int64 0-based."""

    vertices: np.ndarray
    faces: np.ndarray
    ignored_lines: int = 0

    def aabb(self) -> tuple[np.ndarray, np.ndarray]:
        if len(self.vertices) == 0:
            raise SceneError("mesh has no vertices")
        return self.vertices.min(axis=0), self.vertices.max(axis=0)


@dataclass
class VoxelGrid:
    """Dense occupancy + signed-distance grid over a mesh AABB (one padding cell).

    `mesh` keeps the source geometry around for operations that need surface
    detail beyond the grid (BPS features, exports).
    """

    origin: np.ndarray        # (3,) min corner of cell (0,0,0)
    cell_size: float
    dims: tuple[int, int, int]
    occupied: np.ndarray      # (nx,ny,nz) bool
    sdf: np.ndarray           # (nx,ny,nz) float64, meters
    watertight: bool
    mesh: TriangleMesh

    def cell_center(self, ijk) -> np.ndarray:
        return self.origin + (np.asarray(ijk, dtype=float) + 0.5) * self.cell_size

    def cell_of_point(self, point) -> tuple[int, int, int]:
        idx = np.floor((np.asarray(point, dtype=float) - self.origin) / self.cell_size)
        idx = np.clip(idx, 0, np.asarray(self.dims) - 1).astype(int)
        return tuple(int(v) for v in idx)

    def linear_index(self, ijk) -> int:
        i, j, k = (int(v) for v in ijk)
        nx, ny, nz = self.dims
        return (i * ny + j) * nz + k

    def from_linear(self, lin: int) -> tuple[int, int, int]:
        nx, ny, nz = self.dims
        i, rem = divmod(int(lin), ny * nz)
        j, k = divmod(rem, nz)
        return i, j, k


def load_mesh(path, up_axis: str = "z") -> TriangleMesh:
    """Parse the OBJ subset: `v x y z` and `f i j k [l ...]` (1-based indices,
    `i/j/k` slash forms tolerated, polygons fan-triangulated).  Comment lines
    and unknown line types are skipped; the latter increment `ignored_lines`.
    """
    if up_axis not in ("z", "y"):
        raise SceneError(f"unknown up axis {up_axis!r}, expected 'z' or 'y'")
    vertices: list[list[float]] = []
    face_rows: list[tuple[int, list[int]]] = []
    ignored = 0
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if parts[0] == "v":
                if len(parts) < 4:
                    raise MeshParseError("vertex needs 3 coordinates", lineno)
                try:
                    vertices.append([float(parts[1]), float(parts[2]), float(parts[3])])
                except ValueError:
                    raise MeshParseError(f"bad vertex coordinates {parts[1:4]}", lineno)
            elif parts[0] == "f":
                if len(parts) < 4:
                    raise MeshParseError("face needs at least 3 indices", lineno)
                try:
                    idx = [int(tok.split("/")[0]) for tok in parts[1:]]
                except ValueError:
                    raise MeshParseError(f"bad face indices {parts[1:]}", lineno)
                face_rows.append((lineno, idx))
            else:
                ignored += 1
    faces: list[list[int]] = []
    n_verts = len(vertices)
    for lineno, idx in face_rows:
        for i in idx:
            if i < 1 or i > n_verts:
                raise MeshParseError(f"face index {i} out of range 1..{n_verts}", lineno)
        zero_based = [i - 1 for i in idx]
        for a, b in zip(zero_based[1:-1], zero_based[2:]):
            faces.append([zero_based[0], a, b])
    verts = np.asarray(vertices, dtype=float).reshape(-1, 3)
    if up_axis == "y":
        # rotate +90 deg about x: (x, y, z)_y-up -> (x, -z, y)_z-up
        verts = np.stack([verts[:, 0], -verts[:, 2], verts[:, 1]], axis=1)
    return TriangleMesh(
        vertices=verts,
        faces=np.asarray(faces, dtype=np.int64).reshape(-1, 3),
        ignored_lines=ignored,
    )


def is_watertight(mesh: TriangleMesh, weld_tol: float = 1e-9) -> bool:
    """Edge-manifold test after welding coincident vertices: every undirected
    edge must be shared by exactly two faces."""
    if len(mesh.faces) < 4:
        return False
    keys = np.round(mesh.vertices / weld_tol).astype(np.int64)
    _, remap = np.unique(keys, axis=0, return_inverse=True)
    f = remap[mesh.faces]
    if np.any(f[:, 0] == f[:, 1]) or np.any(f[:, 1] == f[:, 2]) or np.any(f[:, 0] == f[:, 2]):
        return False
    edges = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    edges.sort(axis=1)
    _, counts = np.unique(edges, axis=0, return_counts=True)
    return bool(np.all(counts == 2))


def _tri_box_overlap(verts: np.ndarray, centers: np.ndarray, half: np.ndarray) -> np.ndarray:
    """Separating-axis triangle vs axis-aligned box, vectorized over box centers.

    Touching counts as overlap (separation requires strict inequality).
    """
    v = verts[None, :, :] - centers[:, None, :]  # (C,3,3)
    edges = np.array([verts[1] - verts[0], verts[2] - verts[1], verts[0] - verts[2]])
    lo = v.min(axis=1)
    hi = v.max(axis=1)
    sep = np.any(lo > half[None, :], axis=1) | np.any(hi < -half[None, :], axis=1)
    normal = np.cross(edges[0], edges[1])
    r = float(np.abs(normal) @ half)
    sep |= np.abs(v[:, 0, :] @ normal) > r
    for e in edges:
        # cross products of the coordinate axes with e, written out
        for axis in ((0.0, -e[2], e[1]), (e[2], 0.0, -e[0]), (-e[1], e[0], 0.0)):
            if abs(axis[0]) + abs(axis[1]) + abs(axis[2]) < 1e-14:
                continue
            axis = np.array(axis)
            r = float(np.abs(axis) @ half)
            p = v @ axis  # (C,3)
            sep |= (p.min(axis=1) > r) | (p.max(axis=1) < -r)
    return ~sep


def _tri_invariants(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> dict:
    """Point-independent quantities of Ericson's closest-point test, kept as
    flat per-component arrays so the pairwise pass never builds (P,T,3)."""
    ab = b - a
    ac = c - a
    d00 = np.einsum("ij,ij->i", ab, ab)
    d01 = np.einsum("ij,ij->i", ab, ac)
    d11 = np.einsum("ij,ij->i", ac, ac)
    return {
        "a": a.T.copy(), "ab": ab.T.copy(), "ac": ac.T.copy(),
        "d00": d00, "d01": d01, "d11": d11,
        "d00g": np.maximum(d00, _TINY),
        "d11g": np.maximum(d11, _TINY),
        "bcg": np.maximum(d00 - 2.0 * d01 + d11, _TINY),
    }


def _pair_dist_sq(points: np.ndarray, td: dict, sel: np.ndarray | None = None) -> np.ndarray:
    """(P,T) squared point-triangle distances from precomputed invariants.

    Region logic follows Ericson; every region's distance comes from the
    algebraic identity |p - q|^2 = |ap|^2 - (projection terms), which avoids
    materializing closest points.  Guarded denominators cover degenerate
    triangles (all regions collapse to edge/vertex answers there).
    """
    def g(name):
        arr = td[name]
        return arr[:, sel] if (sel is not None and arr.ndim == 2) else (
            arr[sel] if sel is not None else arr)

    ax, ay, az = g("a")
    abx, aby, abz = g("ab")
    acx, acy, acz = g("ac")
    d00, d01, d11 = g("d00"), g("d01"), g("d11")
    d00g, d11g, bcg = g("d00g"), g("d11g"), g("bcg")

    apx = points[:, 0:1] - ax[None, :]
    apy = points[:, 1:2] - ay[None, :]
    apz = points[:, 2:3] - az[None, :]
    papsq = apx * apx + apy * apy + apz * apz
    d1 = apx * abx + apy * aby + apz * abz
    d2 = apx * acx + apy * acy + apz * acz
    d3 = d1 - d00
    d4 = d2 - d01
    d5 = d1 - d01
    d6 = d2 - d11
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    dist = papsq - (vb * d1 + vc * d2) / np.maximum(va + vb + vc, _TINY)
    bc_num = d4 - d3
    d56 = d5 - d6
    dist = np.where((va <= 0) & (bc_num >= 0) & (d56 >= 0),
                    (papsq - 2.0 * d1 + d00) - bc_num * bc_num / bcg, dist)
    dist = np.where((vb <= 0) & (d2 >= 0) & (d6 <= 0),
                    papsq - d2 * d2 / d11g, dist)
    dist = np.where((vc <= 0) & (d1 >= 0) & (d3 <= 0),
                    papsq - d1 * d1 / d00g, dist)
    dist = np.where((d6 >= 0) & (d5 <= d6), papsq - 2.0 * d2 + d11, dist)
    dist = np.where((d3 >= 0) & (d4 <= d3), papsq - 2.0 * d1 + d00, dist)
    dist = np.where((d1 <= 0) & (d2 <= 0), papsq, dist)
    return np.maximum(dist, 0.0)


def _point_tri_dist_sq(points: np.ndarray, a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Squared distance from each point to each triangle, (P,T)."""
    return _pair_dist_sq(points, _tri_invariants(a, b, c))


def _brute_tri_distance_sq(pts: np.ndarray, td: dict,
                           sel: np.ndarray | None = None,
                           t_chunk: int = 1024) -> np.ndarray:
    n_tri = td["d00"].shape[0] if sel is None else len(sel)
    best = np.full(len(pts), np.inf)
    idx = np.arange(n_tri) if sel is None else sel
    for t0 in range(0, n_tri, t_chunk):
        d = _pair_dist_sq(pts, td, idx[t0 : t0 + t_chunk])
        np.minimum(best, d.min(axis=1), out=best)
    return best


def _nearest_tri_distance(points: np.ndarray, tri_verts: np.ndarray) -> np.ndarray:
    """Min distance from each point to the triangle set.

    Large inputs go through a spatial-block culling pass: points are binned
    into cubes, and per cube any triangle whose bounding sphere cannot beat
    the cube's centroid-distance upper bound is dropped before the exact
    point-triangle test.  The result is exact either way.
    """
    n_pts, n_tri = len(points), len(tri_verts)
    if n_pts == 0:
        return np.empty(0)
    td = _tri_invariants(tri_verts[:, 0], tri_verts[:, 1], tri_verts[:, 2])
    if n_pts * n_tri <= 1 << 21:
        return np.sqrt(_brute_tri_distance_sq(points, td))

    tri_cent = tri_verts.mean(axis=1)
    tri_rad = np.sqrt(
        np.max(np.sum((tri_verts - tri_cent[:, None, :]) ** 2, axis=2), axis=1)
    )
    span = points.max(axis=0) - points.min(axis=0)
    volume = float(np.prod(np.maximum(span, 1e-6)))
    # aim for ~512 points per cube
    side = max((volume / max(n_pts / 512.0, 1.0)) ** (1.0 / 3.0), 1e-6)
    keys = np.floor(points / side).astype(np.int64)
    _, inverse = np.unique(keys, axis=0, return_inverse=True)
    order = np.argsort(inverse, kind="stable")
    bounds = np.searchsorted(inverse[order], np.arange(inverse.max() + 2))

    out = np.empty(n_pts)
    for b in range(len(bounds) - 1):
        idx = order[bounds[b] : bounds[b + 1]]
        if len(idx) == 0:
            continue
        pts = points[idx]
        center = pts.mean(axis=0)
        r_blk = float(np.sqrt(np.max(np.sum((pts - center) ** 2, axis=1))))
        d_cent = np.linalg.norm(tri_cent - center, axis=1)
        # any point is within r_blk of center, so its nearest triangle is no
        # farther than the closest centroid plus r_blk
        upper = float(d_cent.min()) + r_blk
        keep = np.flatnonzero(d_cent - tri_rad - r_blk <= upper)
        out[idx] = np.sqrt(_brute_tri_distance_sq(pts, td, keep))
    return out


def _cross2(u, v):
    return u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]


def _row_crossings(row_yz: np.ndarray, a2: np.ndarray, b2: np.ndarray, c2: np.ndarray,
                   ax: np.ndarray, bx: np.ndarray, cx: np.ndarray,
                   denom: np.ndarray, graze_tol: np.ndarray):
    """Crossing x-positions of a +x ray at (y,z)=row against projected triangles.

    Returns (xs, grazed) where grazed flags any hit within tolerance of a
    triangle edge (those need a jittered retry).
    """
    p = row_yz[None, :]
    w0 = _cross2(b2 - p, c2 - p)
    w1 = _cross2(c2 - p, a2 - p)
    w2 = _cross2(a2 - p, b2 - p)
    s = np.sign(denom)
    inside = (w0 * s >= -graze_tol) & (w1 * s >= -graze_tol) & (w2 * s >= -graze_tol)
    if not np.any(inside):
        return np.empty(0), False
    near_edge = (np.abs(w0) <= graze_tol) | (np.abs(w1) <= graze_tol) | (np.abs(w2) <= graze_tol)
    grazed = bool(np.any(inside & near_edge))
    xs = (w0[inside] * ax[inside] + w1[inside] * bx[inside] + w2[inside] * cx[inside]) / denom[inside]
    return xs, grazed


def _parity_inside(origin, cell_size, dims, mesh) -> np.ndarray:
    """Odd/even +x ray-parity per cell center; True marks interior cells."""
    nx, ny, nz = dims
    tv = mesh.vertices[mesh.faces]  # (T,3,3)
    a2 = tv[:, 0, 1:]
    b2 = tv[:, 1, 1:]
    c2 = tv[:, 2, 1:]
    denom = _cross2(b2 - a2, c2 - a2)
    scale = max(float(np.abs(tv[:, :, 1:]).max()), 1.0)
    keep = np.abs(denom) > 1e-12 * scale * scale
    tv, a2, b2, c2, denom = tv[keep], a2[keep], b2[keep], c2[keep], denom[keep]
    ax, bx, cx = tv[:, 0, 0], tv[:, 1, 0], tv[:, 2, 0]
    graze_tol = _GRAZE_EPS * np.abs(denom) + 1e-14 * scale * scale

    xs_cells = origin[0] + (np.arange(nx) + 0.5) * cell_size
    ys = origin[1] + (np.arange(ny) + 0.5) * cell_size
    zs = origin[2] + (np.arange(nz) + 0.5) * cell_size
    inside = np.zeros((nx, ny, nz), dtype=bool)
    ray_start = origin[0] - cell_size
    for j in range(ny):
        for k in range(nz):
            base = np.array([ys[j], zs[k]])
            for dy, dz in _ROW_JITTERS:
                row = base + np.array([dy, dz]) * cell_size
                xs, grazed = _row_crossings(row, a2, b2, c2, ax, bx, cx, denom, graze_tol)
                if not grazed:
                    break
            xs = np.sort(xs[xs > ray_start])
            if len(xs) == 0:
                continue
            hits_beyond = len(xs) - np.searchsorted(xs, xs_cells, side="right")
            inside[:, j, k] = (hits_beyond % 2) == 1
    return inside


def voxelize(mesh: TriangleMesh, cell_size: float) -> VoxelGrid:
    """Grid covering the mesh AABB padded by one cell on every side.

    A cell is occupied iff some triangle intersects its closed box.  The sdf
    field holds exact nearest-triangle distance at cell centers, negated
    inside watertight geometry.
    """
    if cell_size <= 0:
        raise SceneError(f"cell_size must be positive, got {cell_size}")
    if len(mesh.faces) == 0:
        raise SceneError("mesh has no faces")
    if not np.all(np.isfinite(mesh.vertices)):
        raise SceneError("mesh has non-finite vertex coordinates")
    lo, hi = mesh.aabb()
    extent = hi - lo
    if np.all(extent <= 0):
        raise SceneError("mesh AABB is degenerate (zero extent on every axis)")
    dims = tuple(int(max(1, math.ceil(e / cell_size - 1e-9))) + 2 for e in extent)
    origin = lo - cell_size
    nx, ny, nz = dims

    occupied = np.zeros(dims, dtype=bool)
    half = np.full(3, cell_size / 2.0)
    verts_by_face = mesh.vertices[mesh.faces]
    for tri in verts_by_face:
        tmin = (tri.min(axis=0) - origin) / cell_size
        tmax = (tri.max(axis=0) - origin) / cell_size
        i0 = np.clip(np.floor(tmin - 1e-9).astype(int), 0, np.array(dims) - 1)
        i1 = np.clip(np.floor(tmax + 1e-9).astype(int), 0, np.array(dims) - 1)
        ii, jj, kk = np.meshgrid(
            np.arange(i0[0], i1[0] + 1),
            np.arange(i0[1], i1[1] + 1),
            np.arange(i0[2], i1[2] + 1),
            indexing="ij",
        )
        idx = np.stack([ii.ravel(), jj.ravel(), kk.ravel()], axis=1)
        centers = origin + (idx + 0.5) * cell_size
        hit = _tri_box_overlap(tri, centers, half)
        sel = idx[hit]
        occupied[sel[:, 0], sel[:, 1], sel[:, 2]] = True

    ii, jj, kk = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij")
    centers = origin + (np.stack([ii.ravel(), jj.ravel(), kk.ravel()], axis=1) + 0.5) * cell_size
    dist = _nearest_tri_distance(centers, verts_by_face).reshape(dims)

    watertight = is_watertight(mesh)
    if watertight:
        inside = _parity_inside(origin, cell_size, dims, mesh)
        sdf = np.where(inside, -dist, dist)
    else:
        sdf = dist
    return VoxelGrid(
        origin=np.asarray(origin, dtype=float),
        cell_size=float(cell_size),
        dims=dims,
        occupied=occupied,
        sdf=sdf,
        watertight=watertight,
        mesh=mesh,
    )


def sdf_at(grid: VoxelGrid, points) -> np.ndarray | float:
    """Trilinear interpolation of the stored sdf at world points.

    Outside the cell-center lattice the value is extrapolated as the clamped
    boundary value plus the Euclidean distance to the lattice box, which keeps
    the field continuous and growing away from the scene.
    """
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    dims = np.asarray(grid.dims)
    cs = grid.cell_size
    lo = grid.origin + 0.5 * cs
    hi = grid.origin + (dims - 0.5) * cs
    clamped = np.clip(pts, lo, hi)
    outside = np.linalg.norm(pts - clamped, axis=1)
    u = (clamped - grid.origin) / cs - 0.5
    i0 = np.clip(np.floor(u).astype(int), 0, dims - 2)
    f = u - i0
    vals = np.zeros(len(pts))
    for dx in (0, 1):
        wx = f[:, 0] if dx else 1.0 - f[:, 0]
        for dy in (0, 1):
            wy = f[:, 1] if dy else 1.0 - f[:, 1]
            for dz in (0, 1):
                wz = f[:, 2] if dz else 1.0 - f[:, 2]
                corner = grid.sdf[i0[:, 0] + dx, i0[:, 1] + dy, i0[:, 2] + dz]
                vals += wx * wy * wz * corner
    vals += outside
    return float(vals[0]) if single else vals


def bps_basis(n_points: int, seed: int) -> np.ndarray:
    """Fixed random basis: n points drawn uniformly inside the unit ball."""
    rng = np.random.default_rng(seed)
    d = rng.standard_normal((n_points, 3))
    d /= np.maximum(np.linalg.norm(d, axis=1, keepdims=True), 1e-12)
    r = rng.random(n_points) ** (1.0 / 3.0)
    return d * r[:, None]


def bps_encode(mesh: TriangleMesh, center, half_extent: float, basis: np.ndarray) -> np.ndarray:
    """Distance from each basis point to the nearest mesh vertex inside a cubic
    cage around `center`, after normalizing the crop into the unit sphere.
    Distances clamp to 1; an empty crop encodes as all ones."""
    center = np.asarray(center, dtype=float)
    rel = mesh.vertices - center
    mask = np.all(np.abs(rel) <= half_extent, axis=1)
    if not np.any(mask):
        return np.ones(len(basis))
    pts = rel[mask] / (half_extent * math.sqrt(3.0))
    diff = basis[:, None, :] - pts[None, :, :]
    d = np.sqrt(np.sum(diff * diff, axis=-1)).min(axis=1)
    return np.minimum(d, 1.0)


def bps_encode_many(mesh: TriangleMesh, centers: np.ndarray, half_extent: float,
                    basis: np.ndarray) -> np.ndarray:
    """bps_encode applied per row of `centers`, (C, len(basis))."""
    out = np.empty((len(centers), len(basis)))
    for i, c in enumerate(centers):
        out[i] = bps_encode(mesh, c, half_extent, basis)
    return out
