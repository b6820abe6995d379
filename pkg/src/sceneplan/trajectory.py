"""Continuous trajectories from grid paths: spline refinement, jitter,
clearance-aware smoothing, and segment stitching.

A refined segment has a fixed frame count (default 60 at 30 fps), endpoint
translations exactly at its anchors, per-frame 6D headings derived from the
tangent with gravity up, and endpoint headings taken verbatim from the
anchors so stitched junctions agree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .anchors import Anchor, sample_pose
from .errors import InfeasibleError
from .planner import GridPath
from .rotations import heading_to_rot6d
from .scene import VoxelGrid, sdf_at

FRAME_COUNT = 60
FRAME_INTERVAL = 1.0 / 30.0
MAX_SEGMENT_LEN = 3.0
MAX_FRAME_STEP = 0.2
JITTER_ATTEMPTS = 8
INTERMEDIATE_ACTIONS = ("walk", "stand", "squat")

W_SMOOTH = 1.0
W_CLEAR = 10.0
# margin below the 0.01 surface-riding height: the hinge repairs penetration
# without lifting ground-level frames off their support
CLEARANCE = 0.005


@dataclass
class Trajectory:
    frames_t: np.ndarray          # (M,3)
    frames_phi: np.ndarray        # (M,6)
    actions: list[str]
    frame_interval: float = FRAME_INTERVAL

    def __len__(self) -> int:
        return len(self.frames_t)


@dataclass
class PathSegment:
    cells: list[tuple[int, int, int]]
    start: Anchor
    end: Anchor


def validate_trajectory(traj: Trajectory, max_step: float = MAX_FRAME_STEP):
    steps = np.linalg.norm(np.diff(traj.frames_t, axis=0), axis=1)
    if len(steps) and float(steps.max()) > max_step:
        raise ValueError(f"frame step {steps.max():.3f} exceeds limit {max_step}")
    if len(traj.frames_phi) != len(traj.frames_t) or len(traj.actions) != len(traj.frames_t):
        raise ValueError("frame arrays disagree in length")


def _cell_centers(cells, grid: VoxelGrid) -> np.ndarray:
    return grid.origin + (np.asarray(cells, dtype=float) + 0.5) * grid.cell_size


SURFACE_CLEARANCE = 0.01


def drop_to_surface(points: np.ndarray, grid: VoxelGrid,
                    clearance: float = SURFACE_CLEARANCE) -> np.ndarray:
    """Lower each point so it sits `clearance` above the level set, undoing
    the half-cell float of cell centers.  Shift clamped to one cell."""
    points = np.asarray(points, dtype=float).copy()
    dz = np.zeros(len(points))
    cs = grid.cell_size
    probe = points.copy()
    for _ in range(4):
        probe[:, 2] = points[:, 2] + dz
        gap = np.asarray(sdf_at(grid, probe))
        dz = np.clip(dz + (clearance - gap), -cs, 0.5 * cs)
    points[:, 2] += dz
    return points


def _polyline_length(points: np.ndarray) -> float:
    return float(np.sum(np.linalg.norm(np.diff(points, axis=0), axis=1)))


def split_path(path: GridPath, start_anchor: Anchor, end_anchor: Anchor,
               grid: VoxelGrid, max_len: float = MAX_SEGMENT_LEN, seed: int = 0,
               pose_model=None) -> list[PathSegment]:
    """Cut a path into ceil(length / max_len) equal-arc segments.

    Split points become intermediate anchors: seeded action choice among
    walk/stand/squat, pose sampled from `pose_model` (zeros without one),
    heading along the local tangent.
    """
    pts = _cell_centers(path.cells, grid)
    if len(pts) < 2:
        return [PathSegment(cells=list(path.cells), start=start_anchor, end=end_anchor)]
    seg_len = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    total = float(cum[-1])
    n_seg = max(1, math.ceil(total / max_len - 1e-12))
    if n_seg == 1:
        return [PathSegment(cells=list(path.cells), start=start_anchor, end=end_anchor)]

    rng = np.random.default_rng(seed)
    cut_vertex = [0]
    anchors = [start_anchor]
    for s in range(1, n_seg):
        target = total * s / n_seg
        vi = int(np.argmin(np.abs(cum - target)))
        vi = min(max(vi, cut_vertex[-1] + 1), len(pts) - 1 - (n_seg - s))
        cut_vertex.append(vi)
        action = str(rng.choice(INTERMEDIATE_ACTIONS))
        pose_seed = int(rng.integers(2**63))
        theta = (
            sample_pose(pose_model, action, pose_seed)
            if pose_model is not None
            else np.zeros(32)
        )
        prev_pt = pts[max(vi - 1, 0)]
        next_pt = pts[min(vi + 1, len(pts) - 1)]
        try:
            phi = heading_to_rot6d(next_pt - prev_pt)
        except ValueError:
            phi = start_anchor.phi.copy()
        t_cut = drop_to_surface(pts[vi][None, :], grid)[0]
        anchors.append(Anchor(t=t_cut, phi=phi, theta=theta, action=action))
    cut_vertex.append(len(pts) - 1)
    anchors.append(end_anchor)

    segments = []
    for si in range(n_seg):
        a, b = cut_vertex[si], cut_vertex[si + 1]
        segments.append(
            PathSegment(cells=list(path.cells[a : b + 1]), start=anchors[si], end=anchors[si + 1])
        )
    return segments


def _catmull_rom_dense(waypoints: np.ndarray, samples_per_span: int = 24) -> np.ndarray:
    """Uniform Catmull-Rom through all waypoints (endpoint tangents from
    duplicated ends), densely sampled for arc-length work."""
    p = np.concatenate([waypoints[:1], waypoints, waypoints[-1:]], axis=0)
    out = [waypoints[0][None, :]]
    for i in range(1, len(p) - 2):
        m0 = (p[i + 1] - p[i - 1]) / 2.0
        m1 = (p[i + 2] - p[i]) / 2.0
        t = np.linspace(0.0, 1.0, samples_per_span + 1)[1:, None]
        h00 = 2 * t**3 - 3 * t**2 + 1
        h10 = t**3 - 2 * t**2 + t
        h01 = -2 * t**3 + 3 * t**2
        h11 = t**3 - t**2
        out.append(h00 * p[i] + h10 * m0 + h01 * p[i + 1] + h11 * m1)
    return np.concatenate(out, axis=0)


def _arc_resample(points: np.ndarray, n: int) -> np.ndarray:
    seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    targets = np.linspace(0.0, cum[-1], n)
    res = np.stack([np.interp(targets, cum, points[:, d]) for d in range(3)], axis=1)
    res[0] = points[0]
    res[-1] = points[-1]
    return res


def _headings(points: np.ndarray, phi_start: np.ndarray, phi_end: np.ndarray) -> np.ndarray:
    phi = np.zeros((len(points), 6))
    phi[0] = phi_start
    last = phi_start
    for i in range(1, len(points) - 1):
        tangent = points[i + 1] - points[i - 1]
        try:
            last = heading_to_rot6d(tangent)
        except ValueError:
            pass  # vertical or stationary: hold the previous heading
        phi[i] = last
    phi[-1] = phi_end
    return phi


def refine_path(segment: PathSegment, grid: VoxelGrid, seed: int = 0,
                jitter_scale: float = 0.08, frame_count: int = FRAME_COUNT,
                frame_interval: float = FRAME_INTERVAL) -> Trajectory:
    """Spline through the segment's cell centers (endpoints replaced by the
    anchor translations), resampled to `frame_count` frames at equal arc
    length.  Interior waypoints get seeded lateral Gaussian jitter; a draw is
    rejected if any frame leaves free space, retried up to 8 times, then the
    jitter falls back to zero.
    """
    waypoints = drop_to_surface(_cell_centers(segment.cells, grid), grid)
    if len(waypoints) < 2:
        waypoints = np.stack([segment.start.t, segment.end.t])
    waypoints = waypoints.copy()
    waypoints[0] = segment.start.t
    waypoints[-1] = segment.end.t

    rng = np.random.default_rng(seed)
    base = _arc_resample(_catmull_rom_dense(waypoints), frame_count)
    frames = base
    if jitter_scale > 0 and len(waypoints) > 2:
        for _ in range(JITTER_ATTEMPTS):
            jittered = waypoints.copy()
            offsets = rng.normal(0.0, jitter_scale, size=len(waypoints) - 2)
            for wi, off in zip(range(1, len(waypoints) - 1), offsets):
                tangent = waypoints[wi + 1] - waypoints[wi - 1]
                lateral = np.array([-tangent[1], tangent[0], 0.0])
                norm = np.linalg.norm(lateral)
                if norm > 1e-9:
                    jittered[wi] = waypoints[wi] + off * lateral / norm
            cand = _arc_resample(_catmull_rom_dense(jittered), frame_count)
            if np.all(sdf_at(grid, cand) >= 0.0):
                frames = cand
                break
        else:
            frames = base
    # safety clamp: blend any offending frame back toward the unjittered spline
    bad = np.where(sdf_at(grid, frames) < 0.0)[0]
    for fi in bad:
        for blend in np.linspace(0.25, 1.0, 4):
            mixed = (1.0 - blend) * frames[fi] + blend * base[fi]
            if sdf_at(grid, mixed) >= 0.0:
                frames[fi] = mixed
                break

    phi = _headings(frames, segment.start.phi, segment.end.phi)
    actions = [segment.start.action] + ["walk"] * (len(frames) - 2) + [segment.end.action]
    return Trajectory(frames_t=frames, frames_phi=phi, actions=actions,
                      frame_interval=frame_interval)


def positional_encoding(step: int, width: int) -> np.ndarray:
    """Interleaved sinusoids, base 10000: out[2i] = sin(step / 10000^(2i/width)),
    out[2i+1] = cos(...).  Step 0 encodes as [0, 1, 0, 1, ...]."""
    if width <= 0 or width % 2 != 0:
        raise ValueError(f"width must be positive and even, got {width}")
    i = np.arange(width // 2)
    rate = np.power(10000.0, 2.0 * i / width)
    out = np.zeros(width)
    out[0::2] = np.sin(step / rate)
    out[1::2] = np.cos(step / rate)
    return out


def trajectory_energy(points: np.ndarray, grid: VoxelGrid, w_smooth: float = W_SMOOTH,
                      w_clear: float = W_CLEAR, clearance: float = CLEARANCE) -> float:
    """Smoothness (sum of squared second differences) plus squared clearance
    shortfall max(0, clearance - sdf)^2 per frame."""
    dd = points[:-2] - 2.0 * points[1:-1] + points[2:]
    e_smooth = float(np.sum(dd * dd))
    viol = np.maximum(0.0, clearance - sdf_at(grid, points))
    return w_smooth * e_smooth + w_clear * float(np.sum(viol * viol))


def trajectory_energy_grad(points: np.ndarray, grid: VoxelGrid, w_smooth: float = W_SMOOTH,
                           w_clear: float = W_CLEAR, clearance: float = CLEARANCE,
                           fd_step: float | None = None) -> np.ndarray:
    """Gradient of trajectory_energy wrt every frame translation.

    The smoothness part is analytic; the clearance part differentiates the
    sdf by central differences with step cell_size/4, which is exact for the
    trilinear field away from cell boundaries.
    """
    g = np.zeros_like(points)
    dd = points[:-2] - 2.0 * points[1:-1] + points[2:]
    g[:-2] += 2.0 * w_smooth * dd
    g[1:-1] -= 4.0 * w_smooth * dd
    g[2:] += 2.0 * w_smooth * dd

    h = grid.cell_size / 4.0 if fd_step is None else fd_step
    viol = np.maximum(0.0, clearance - sdf_at(grid, points))
    active = np.where(viol > 0.0)[0]
    if len(active):
        probes = []
        for fi in active:
            for ax in range(3):
                e = np.zeros(3)
                e[ax] = h
                probes.append(points[fi] + e)
                probes.append(points[fi] - e)
        vals = sdf_at(grid, np.asarray(probes)).reshape(len(active), 3, 2)
        sdf_grad = (vals[:, :, 0] - vals[:, :, 1]) / (2.0 * h)
        g[active] += -2.0 * w_clear * viol[active, None] * sdf_grad
    return g


def optimize_trajectory(traj: Trajectory, grid: VoxelGrid, iterations: int = 100,
                        step: float = 1e-2, w_smooth: float = W_SMOOTH,
                        w_clear: float = W_CLEAR, clearance: float = CLEARANCE,
                        return_trace: bool = False):
    """Backtracking gradient descent on the trajectory energy, translations
    only, endpoints pinned.  The line search only accepts non-increasing
    energy so the returned trace is monotone."""
    pts = traj.frames_t.copy()
    energy = trajectory_energy(pts, grid, w_smooth, w_clear, clearance)
    floor_sdf = min(0.0, float(np.min(sdf_at(grid, pts))))
    trace = [energy]
    for _ in range(iterations):
        g = trajectory_energy_grad(pts, grid, w_smooth, w_clear, clearance)
        g[0] = 0.0
        g[-1] = 0.0
        alpha = step
        moved = False
        for _ in range(20):
            cand = pts - alpha * g
            cand_e = trajectory_energy(cand, grid, w_smooth, w_clear, clearance)
            # smoothing must never trade free space away: frames may not dip
            # below the zero level set (or below their starting violation)
            if cand_e <= energy and float(np.min(sdf_at(grid, cand))) >= floor_sdf:
                pts, energy, moved = cand, cand_e, True
                break
            alpha *= 0.5
        trace.append(energy)
        if not moved:
            break
    phi = _headings(pts, traj.frames_phi[0], traj.frames_phi[-1])
    out = Trajectory(frames_t=pts, frames_phi=phi, actions=list(traj.actions),
                     frame_interval=traj.frame_interval)
    return (out, trace) if return_trace else out


def stitch(trajectories: list[Trajectory]) -> Trajectory:
    """Concatenate segments, dropping each duplicated junction frame.  A
    junction translation mismatch above 1e-6 raises InfeasibleError."""
    if not trajectories:
        raise ValueError("nothing to stitch")
    t_parts = [trajectories[0].frames_t]
    phi_parts = [trajectories[0].frames_phi]
    actions = list(trajectories[0].actions)
    for prev, nxt in zip(trajectories[:-1], trajectories[1:]):
        gap = float(np.linalg.norm(prev.frames_t[-1] - nxt.frames_t[0]))
        if gap > 1e-6:
            raise InfeasibleError(f"junction mismatch of {gap:.2e} m between segments")
        t_parts.append(nxt.frames_t[1:])
        phi_parts.append(nxt.frames_phi[1:])
        actions.extend(nxt.actions[1:])
    return Trajectory(
        frames_t=np.concatenate(t_parts, axis=0),
        frames_phi=np.concatenate(phi_parts, axis=0),
        actions=actions,
        frame_interval=trajectories[0].frame_interval,
    )
