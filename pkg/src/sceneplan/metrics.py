"""Diversity and plausibility metrics: cluster entropy over anchors, path
deviation spread, average pairwise distance, Gaussian Frechet distance, and
capsule-based collision / contact rates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .anchors import Anchor, ProxyBody
from .planner import GridPath
from .rotations import rot6d_to_matrix
from .scene import VoxelGrid, sdf_at

PATH_FRACTIONS = (1.0 / 6.0, 1.0 / 3.0, 0.5, 2.0 / 3.0, 5.0 / 6.0)
CONTACT_TAU = 0.05
DEFAULT_K = 20


@dataclass
class ClusterReport:
    k: int
    assignments: np.ndarray        # (N,)
    centers: np.ndarray            # (K,D)
    entropy: float                 # over cluster-size fractions, <= ln K
    mean_cluster_distance: float   # mean distance of samples to their center
    inertia_trace: list[float]     # total within-cluster squared distance per sweep


def _kmeans_pp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: first center uniform, then proportional to squared
    distance from the nearest chosen center."""
    n = len(points)
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    d2 = np.sum((points - centers[0]) ** 2, axis=1)
    for c in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            centers[c:] = points[rng.integers(n, size=k - c)]
            break
        probs = d2 / total
        centers[c] = points[rng.choice(n, p=probs)]
        d2 = np.minimum(d2, np.sum((points - centers[c]) ** 2, axis=1))
    return centers


def kmeans(points: np.ndarray, k: int = DEFAULT_K, seed: int = 0,
           max_iter: int = 100) -> ClusterReport:
    """Lloyd iterations from a seeded k-means++ start until the assignment is
    a fixpoint or max_iter sweeps.  Empty clusters keep their center."""
    points = np.asarray(points, dtype=float)
    if points.ndim != 2:
        raise ValueError("points must be a 2d array")
    if len(points) < k:
        raise ValueError(f"fewer points than K: {len(points)} < {k}")
    rng = np.random.default_rng(seed)
    centers = _kmeans_pp_init(points, k, rng)
    assignments = np.full(len(points), -1)
    inertia_trace: list[float] = []
    for _ in range(max_iter):
        d2 = np.sum((points[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        new_assign = np.argmin(d2, axis=1)
        inertia_trace.append(float(d2[np.arange(len(points)), new_assign].sum()))
        if np.array_equal(new_assign, assignments):
            break
        assignments = new_assign
        for c in range(k):
            mask = assignments == c
            if np.any(mask):
                centers[c] = points[mask].mean(axis=0)
    sizes = np.bincount(assignments, minlength=k)
    fractions = sizes / sizes.sum()
    nonzero = fractions[fractions > 0]
    entropy = float(-np.sum(nonzero * np.log(nonzero)))
    dists = np.linalg.norm(points - centers[assignments], axis=1)
    return ClusterReport(
        k=k,
        assignments=assignments,
        centers=centers,
        entropy=entropy,
        mean_cluster_distance=float(dists.mean()),
        inertia_trace=inertia_trace,
    )


def anchor_features(anchors: list[Anchor], mode: str = "full") -> np.ndarray:
    """Stack anchor parameters into feature rows.

    mode 'full' uses (theta, t, phi), 'position' only (t, phi).  Each block is
    scaled to unit RMS deviation so no block dominates the clustering.
    """
    if mode not in ("full", "position"):
        raise ValueError(f"unknown mode {mode!r}")
    blocks = []
    if mode == "full":
        blocks.append(np.stack([a.theta for a in anchors]))
    blocks.append(np.stack([a.t for a in anchors]))
    blocks.append(np.stack([a.phi for a in anchors]))
    scaled = []
    for b in blocks:
        centered = b - b.mean(axis=0)
        rms = math.sqrt(float(np.mean(centered**2)))
        scaled.append(b / rms if rms > 1e-12 else b)
    return np.concatenate(scaled, axis=1)


def anchor_diversity(anchors: list[Anchor], mode: str = "full", k: int = DEFAULT_K,
                     seed: int = 0) -> ClusterReport:
    """Cluster-entropy diversity over anchor parameter vectors."""
    return kmeans(anchor_features(anchors, mode), k=k, seed=seed)


def point_at_fraction(cells, fraction: float) -> np.ndarray:
    """Point at `fraction` of the path's own arc length, interpolated along
    the cell-index polyline."""
    pts = np.asarray(cells, dtype=float)
    if len(pts) == 1:
        return pts[0]
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    target = fraction * cum[-1]
    return np.array([np.interp(target, cum, pts[:, d]) for d in range(pts.shape[1])])


@dataclass
class PathDeviationReport:
    fractions: tuple[float, ...]
    std: tuple[float, ...]


def path_deviation_std(sampled_paths: list[GridPath], reference: GridPath,
                       fractions: tuple[float, ...] = PATH_FRACTIONS) -> PathDeviationReport:
    """Population std of the distance between each sampled path and the
    reference at fixed arc-length fractions, in cell units."""
    if not sampled_paths:
        raise ValueError("no sampled paths")
    ref_start, ref_goal = reference.cells[0], reference.cells[-1]
    for p in sampled_paths:
        if p.cells[0] != ref_start or p.cells[-1] != ref_goal:
            raise ValueError(
                f"sampled path endpoints {p.cells[0]}..{p.cells[-1]} do not match "
                f"reference {ref_start}..{ref_goal}"
            )
    stds = []
    for f in fractions:
        ref_pt = point_at_fraction(reference.cells, f)
        d = np.array(
            [np.linalg.norm(point_at_fraction(p.cells, f) - ref_pt) for p in sampled_paths]
        )
        stds.append(float(np.std(d)))
    return PathDeviationReport(fractions=tuple(fractions), std=tuple(stds))


def apd(samples: np.ndarray) -> float:
    """Average pairwise L2 distance over all unordered pairs."""
    samples = np.asarray(samples, dtype=float)
    n = len(samples)
    if n < 2:
        raise ValueError("need at least two samples")
    d = np.linalg.norm(samples[:, None, :] - samples[None, :, :], axis=2)
    iu = np.triu_indices(n, k=1)
    return float(d[iu].mean())


def _sqrtm_psd(mat: np.ndarray) -> np.ndarray:
    """Symmetric matrix square root; negative eigenvalues clip to zero."""
    w, v = np.linalg.eigh((mat + mat.T) / 2.0)
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.T


def frechet_gaussian(a: np.ndarray, b: np.ndarray) -> float:
    """Frechet distance between Gaussians fitted to the two sample sets:
    |mu_a - mu_b|^2 + Tr(Sa + Sb - 2 (Sa Sb)^(1/2)).

    The cross term is computed as Tr sqrt(sqrt(Sa) Sb sqrt(Sa)), which is
    symmetric PSD, so a plain eigendecomposition suffices.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    dim = a.shape[1]
    if b.shape[1] != dim:
        raise ValueError("sample sets have different dimensions")
    for name, s in (("a", a), ("b", b)):
        if len(s) < dim + 1:
            raise ValueError(f"set {name} needs at least dim+1={dim + 1} samples, got {len(s)}")
    mu_a, mu_b = a.mean(axis=0), b.mean(axis=0)
    cov_a = np.atleast_2d(np.cov(a, rowvar=False))
    cov_b = np.atleast_2d(np.cov(b, rowvar=False))
    sqrt_a = _sqrtm_psd(cov_a)
    cross = _sqrtm_psd(sqrt_a @ cov_b @ sqrt_a)
    d2 = float(np.sum((mu_a - mu_b) ** 2) + np.trace(cov_a + cov_b - 2.0 * cross))
    return max(d2, 0.0)


def _world_points(body_points: np.ndarray, t: np.ndarray, phi: np.ndarray) -> np.ndarray:
    return t + body_points @ rot6d_to_matrix(phi).T


def non_collision(traj, bodies: list[ProxyBody], grid: VoxelGrid | None) -> float:
    """Fraction of frames whose capsule sample points all have sdf >= 0.
    `grid=None` means an empty scene, where nothing can collide."""
    from .anchors import capsule_sample_points

    if len(bodies) != len(traj.frames_t):
        raise ValueError("need one proxy body per frame")
    if grid is None:
        return 1.0
    ok = 0
    for t, phi, body in zip(traj.frames_t, traj.frames_phi, bodies):
        pts = _world_points(capsule_sample_points(body), t, phi)
        if np.all(np.asarray(sdf_at(grid, pts)) >= 0.0):
            ok += 1
    return ok / len(bodies)


def contact(traj, bodies: list[ProxyBody], grid: VoxelGrid | None,
            tau: float = CONTACT_TAU) -> float:
    """Fraction of frames with at least one designated contact point within
    tau of a surface (|sdf| <= tau)."""
    if len(bodies) != len(traj.frames_t):
        raise ValueError("need one proxy body per frame")
    if grid is None:
        return 0.0
    hits = 0
    for t, phi, body in zip(traj.frames_t, traj.frames_phi, bodies):
        pts = _world_points(
            np.stack([body.contacts[n] for n in body.contact_labels]), t, phi
        )
        if np.any(np.abs(np.asarray(sdf_at(grid, pts))) <= tau):
            hits += 1
    return hits / len(bodies)


def mean_heading_change(path: GridPath) -> float:
    """Mean absolute wrapped heading change between consecutive path steps,
    radians; straight paths score 0."""
    cells = np.asarray(path.cells, dtype=float)[:, :2]
    steps = np.diff(cells, axis=0)
    if len(steps) < 2:
        return 0.0
    ang = np.arctan2(steps[:, 1], steps[:, 0])
    delta = np.diff(ang)
    delta = (delta + math.pi) % (2.0 * math.pi) - math.pi
    return float(np.mean(np.abs(delta)))
