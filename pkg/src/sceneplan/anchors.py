"""Action-conditioned anchor placement.

An anchor is a body pose (latent theta), a 6D orientation and a translation,
tied to one action label.  Placement enumerates (cell, yaw) candidates on the
voxel grid, scores geometric affordance (contacts near surfaces) against
penetration and a diversity penalty toward already-placed anchors of the same
action, then samples from a temperature softmax over the best candidates.

The proxy body is a deterministic capsule skeleton per action; theta nudges
its proportions through bounded offsets so different poses score differently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import PlacementError
from .nn import CvaeModel, cvae_decode, load_model, make_cvae, save_model, train_cvae
from .rotations import matrix_to_rot6d, rot6d_to_matrix, yaw_to_rot6d
from .scene import VoxelGrid, bps_basis, bps_encode, sdf_at

ACTIONS = ("sit", "lie", "stand", "walk", "squat")
POSE_DIM = 32
N_ORIENTATIONS = 8
REFINER_CAGE_HALF_EXTENT = 1.0

# vertical room a body needs above its cell, per action (meters)
CLEARANCE_HEIGHTS = {"stand": 1.7, "walk": 1.7, "squat": 1.2, "sit": 1.2, "lie": 0.5}


def action_one_hot(action: str) -> np.ndarray:
    if action not in ACTIONS:
        raise ValueError(f"unknown action {action!r}, expected one of {ACTIONS}")
    out = np.zeros(len(ACTIONS))
    out[ACTIONS.index(action)] = 1.0
    return out


@dataclass
class Anchor:
    t: np.ndarray                 # (3,)
    phi: np.ndarray               # (6,) two rotation columns
    theta: np.ndarray             # (32,)
    action: str
    cell: int | None = None       # linear grid cell, when placed on a grid
    yaw: float | None = None
    scores: dict | None = None


@dataclass
class PlacementCandidate:
    cell: int                     # linear cell index
    orientation_index: int        # yaw = index * 45 degrees
    affordance: float = math.nan
    penetration: float = math.nan
    diversity_penalty: float = math.nan
    total_score: float = math.nan

    @property
    def yaw(self) -> float:
        return self.orientation_index * (math.pi / 4.0)


@dataclass
class ProxyBody:
    contacts: dict[str, np.ndarray]          # labeled points, body frame
    contact_labels: tuple[str, ...]          # designated ground contacts
    capsules: list[tuple[np.ndarray, np.ndarray, float]]


@dataclass
class PlacementConfig:
    """Scoring knobs for candidate placement.

    contact_tau is the placement tolerance; it defaults looser than the
    contact metric's tau because cell quantization puts contacts up to half
    a cell diagonal off the surface before refinement."""

    w_penetration: float = 1.0
    w_diversity: float = 0.5
    diversity_sigma: float = 1.0
    contact_tau: float = 0.25
    temperature: float = 0.1
    top_k: int = 20
    capsule_spacing: float = 0.08
    clearance_heights: dict = field(default_factory=lambda: dict(CLEARANCE_HEIGHTS))
    settle: bool = True
    settle_clearance: float = 0.01


def sample_pose(model: CvaeModel, action: str, seed: int) -> np.ndarray:
    """Decode one pose latent for `action` from a seeded standard-normal z."""
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(model.d_z)
    return cvae_decode(model, z, action_one_hot(action))


def _p(x, y, z):
    return np.array([x, y, z], dtype=float)


def proxy_body(theta: np.ndarray, action: str) -> ProxyBody:
    """Capsule skeleton in the body frame (+x forward, z up, gravity -z).

    Origins differ by action: feet level for upright actions, pelvis for sit,
    torso center for lie, so placing the origin at a candidate cell center
    puts the designated contacts where the action needs support.
    """
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (POSE_DIM,):
        raise ValueError(f"pose must have {POSE_DIM} entries, got shape {theta.shape}")
    if action not in ACTIONS:
        raise ValueError(f"unknown action {action!r}")
    sw = 0.10 + 0.02 * math.tanh(theta[0])           # stance half-width
    ff = 0.15 + 0.05 * math.tanh(theta[1])           # foot forward offset (walk)
    hh = 0.02 * math.tanh(theta[2])                  # hand height tweak

    if action in ("stand", "walk"):
        fl = _p(ff if action == "walk" else 0.0, sw, 0.02)
        fr = _p(-0.6 * ff if action == "walk" else 0.0, -sw, 0.02)
        contacts = {
            "foot_l": fl,
            "foot_r": fr,
            "pelvis": _p(0.0, 0.0, 0.90),
            "hand_l": _p(0.0, 0.22, 0.78 + hh),
            "hand_r": _p(0.0, -0.22, 0.78 + hh),
        }
        designated = ("foot_l", "foot_r")
        capsules = [
            (_p(0.0, 0.0, 0.40), _p(0.0, 0.0, 1.55), 0.14),
            (fl + _p(0.0, 0.0, 0.03), _p(0.0, sw, 0.85), 0.07),
            (fr + _p(0.0, 0.0, 0.03), _p(0.0, -sw, 0.85), 0.07),
        ]
    elif action == "squat":
        contacts = {
            "foot_l": _p(0.02, sw, 0.02),
            "foot_r": _p(0.02, -sw, 0.02),
            "pelvis": _p(-0.05, 0.0, 0.45),
            "hand_l": _p(0.25, 0.18, 0.40 + hh),
            "hand_r": _p(0.25, -0.18, 0.40 + hh),
        }
        designated = ("foot_l", "foot_r")
        capsules = [
            (_p(-0.05, 0.0, 0.45), _p(0.02, 0.0, 0.95), 0.14),
            (_p(0.02, sw, 0.05), _p(-0.03, sw, 0.42), 0.08),
            (_p(0.02, -sw, 0.05), _p(-0.03, -sw, 0.42), 0.08),
        ]
    elif action == "sit":
        contacts = {
            "pelvis": _p(0.0, 0.0, 0.0),
            "foot_l": _p(0.35, sw, -0.55),
            "foot_r": _p(0.35, -sw, -0.55),
            "hand_l": _p(0.15, 0.20, 0.05 + hh),
            "hand_r": _p(0.15, -0.20, 0.05 + hh),
        }
        designated = ("pelvis", "foot_l", "foot_r")
        capsules = [
            (_p(0.0, 0.0, 0.08), _p(0.0, 0.0, 0.60), 0.14),
            (_p(0.04, sw, 0.04), _p(0.33, sw, 0.0), 0.07),
            (_p(0.04, -sw, 0.04), _p(0.33, -sw, 0.0), 0.07),
            (_p(0.35, sw, -0.05), _p(0.35, sw, -0.50), 0.06),
            (_p(0.35, -sw, -0.05), _p(0.35, -sw, -0.50), 0.06),
        ]
    else:  # lie
        contacts = {
            "pelvis": _p(0.0, 0.0, -0.10),
            "foot_l": _p(0.80, sw, -0.10),
            "foot_r": _p(0.80, -sw, -0.10),
            "hand_l": _p(-0.25, 0.25, -0.08),
            "hand_r": _p(-0.25, -0.25, -0.08),
        }
        designated = ("pelvis", "foot_l", "foot_r")
        capsules = [(_p(-0.75, 0.0, 0.0), _p(0.85, 0.0, 0.0), 0.14)]
    return ProxyBody(contacts=contacts, contact_labels=designated, capsules=capsules)


def capsule_sample_points(body: ProxyBody, spacing: float = 0.08) -> np.ndarray:
    """Evenly spaced points along every capsule axis, (S,3) in the body frame."""
    pts = []
    for p0, p1, _r in body.capsules:
        n = max(2, int(math.ceil(np.linalg.norm(p1 - p0) / spacing)) + 1)
        pts.append(np.linspace(p0, p1, n))
    return np.concatenate(pts, axis=0)


def _designated_contacts(body: ProxyBody) -> np.ndarray:
    return np.stack([body.contacts[name] for name in body.contact_labels])


def _affordance_penetration(centers: np.ndarray, body: ProxyBody, rot: np.ndarray,
                            grid: VoxelGrid, config: PlacementConfig):
    """Affordance and penetration for the body placed at each center, (N,), (N,).

    Affordance sums over every labeled contact point; the designated subset
    only matters for the contact metric."""
    contacts = np.stack([body.contacts[k] for k in body.contacts]) @ rot.T
    samples = capsule_sample_points(body, config.capsule_spacing) @ rot.T
    n = len(centers)
    pc = (centers[:, None, :] + contacts[None, :, :]).reshape(-1, 3)
    sdf_c = np.asarray(sdf_at(grid, pc)).reshape(n, len(contacts))
    tau = config.contact_tau
    aff = np.exp(-(sdf_c * sdf_c) / (2.0 * tau * tau)).sum(axis=1)
    ps = (centers[:, None, :] + samples[None, :, :]).reshape(-1, 3)
    sdf_s = np.asarray(sdf_at(grid, ps)).reshape(n, len(samples))
    pen = np.maximum(0.0, -sdf_s).sum(axis=1)
    return aff, pen


def _yaw_matrix(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def enumerate_candidates(grid: VoxelGrid) -> list[PlacementCandidate]:
    """One candidate per (cell, yaw) pair over cells whose column still has
    free space; scores start unset."""
    open_column = ~np.all(grid.occupied, axis=2)  # (nx,ny)
    out = []
    nx, ny, nz = grid.dims
    for i in range(nx):
        for j in range(ny):
            if not open_column[i, j]:
                continue
            for k in range(nz):
                lin = grid.linear_index((i, j, k))
                for o in range(N_ORIENTATIONS):
                    out.append(PlacementCandidate(cell=lin, orientation_index=o))
    return out


def score_candidate(candidate: PlacementCandidate, body: ProxyBody, grid: VoxelGrid,
                    config: PlacementConfig | None = None) -> PlacementCandidate:
    """Fill affordance and penetration for one candidate (diversity is set by
    place_anchor, which knows the already-placed anchors)."""
    config = config or PlacementConfig()
    center = grid.cell_center(grid.from_linear(candidate.cell))[None, :]
    aff, pen = _affordance_penetration(
        center, body, _yaw_matrix(candidate.yaw), grid, config
    )
    candidate.affordance = float(aff[0])
    candidate.penetration = float(pen[0])
    return candidate


def diversity_penalty(t, placed: list[Anchor], sigma: float = 1.0) -> float:
    """Sum of Gaussian repulsions from already-placed anchor translations."""
    t = np.asarray(t, dtype=float)
    total = 0.0
    for a in placed:
        d2 = float(np.sum((t - a.t) ** 2))
        total += math.exp(-d2 / (2.0 * sigma * sigma))
    return total


def _valid_cells(grid: VoxelGrid, action: str, config: PlacementConfig) -> np.ndarray:
    """(N,3) indices of free cells with support below and per-action headroom."""
    occ = grid.occupied
    nz = grid.dims[2]
    free = ~occ
    support = np.zeros_like(occ)
    support[:, :, 1:] = occ[:, :, :-1]
    n_up = int(math.ceil(config.clearance_heights[action] / grid.cell_size))
    clear = free.copy()
    for d in range(1, n_up):
        if d >= nz:
            break
        clear[:, :, :-d] &= free[:, :, d:]  # cells above the grid top count free
    return np.argwhere(free & support & clear)


def place_anchor(theta: np.ndarray, action: str, grid: VoxelGrid,
                 placed: list[Anchor] | None = None, seed: int = 0,
                 top_k: int | None = None,
                 config: PlacementConfig | None = None) -> Anchor:
    """Score every valid (cell, yaw) candidate and sample one from a softmax
    over the `top_k` best totals.

    total = affordance - w_penetration * penetration - w_diversity * repulsion
    from same-action anchors in `placed`.  Ranking ties break on lowest cell
    linear index, then orientation index.
    """
    config = config or PlacementConfig()
    if top_k is None:
        top_k = config.top_k
    placed = [a for a in (placed or []) if a.action == action]
    body = proxy_body(theta, action)
    cells = _valid_cells(grid, action, config)
    if len(cells) == 0:
        raise PlacementError(f"scene has no valid placement for action {action!r}")
    centers = grid.cell_center(cells)
    nx, ny, nz = grid.dims
    lins = (cells[:, 0] * ny + cells[:, 1]) * nz + cells[:, 2]

    div = np.zeros(len(cells))
    for a in placed:
        d2 = np.sum((centers - a.t) ** 2, axis=1)
        div += np.exp(-d2 / (2.0 * config.diversity_sigma**2))

    aff = np.empty((len(cells), N_ORIENTATIONS))
    pen = np.empty((len(cells), N_ORIENTATIONS))
    for o in range(N_ORIENTATIONS):
        aff[:, o], pen[:, o] = _affordance_penetration(
            centers, body, _yaw_matrix(o * math.pi / 4.0), grid, config
        )
    total = aff - config.w_penetration * pen - config.w_diversity * div[:, None]

    flat_total = total.ravel()
    flat_lin = np.repeat(lins, N_ORIENTATIONS)
    flat_orient = np.tile(np.arange(N_ORIENTATIONS), len(cells))
    order = np.lexsort((flat_orient, flat_lin, -flat_total))
    top = order[: max(1, top_k)]

    rng = np.random.default_rng(seed)
    if len(top) == 1:
        pick = top[0]
    else:
        s = flat_total[top] / config.temperature
        p = np.exp(s - s.max())
        p /= p.sum()
        pick = top[int(rng.choice(len(top), p=p))]

    ci = int(pick // N_ORIENTATIONS)
    orient = int(pick % N_ORIENTATIONS)
    yaw = orient * math.pi / 4.0
    anchor = Anchor(
        t=centers[ci].copy(),
        phi=yaw_to_rot6d(yaw),
        theta=np.asarray(theta, dtype=float).copy(),
        action=action,
        cell=int(lins[ci]),
        yaw=yaw,
        scores={
            "affordance": float(aff[ci, orient]),
            "penetration": float(pen[ci, orient]),
            "diversity_penalty": float(div[ci]),
        },
    )
    if config.settle:
        anchor = settle_anchor(anchor, grid, body=body, config=config)
    return anchor


def settle_anchor(anchor: Anchor, grid: VoxelGrid, body: ProxyBody | None = None,
                  config: PlacementConfig | None = None) -> Anchor:
    """Shift the anchor vertically so its nearest designated contact rests
    `settle_clearance` above the surface, undoing cell-center quantization.

    The shift is clamped to one cell and dropped entirely if it would push any
    capsule sample point below the zero level set.
    """
    config = config or PlacementConfig()
    if body is None:
        body = proxy_body(anchor.theta, anchor.action)
    rot = _yaw_matrix(anchor.yaw if anchor.yaw is not None else 0.0)
    contacts = _designated_contacts(body) @ rot.T + anchor.t
    cs = grid.cell_size
    # fixed-point on dz: min-sdf can be pinned by a lateral face that a pure
    # vertical drop does not approach, so one Newton step is not enough
    dz = 0.0
    for _ in range(4):
        gap = float(np.min(sdf_at(grid, contacts + [0.0, 0.0, dz])))
        step = config.settle_clearance - gap
        dz = float(np.clip(dz + step, -cs, 0.5 * cs))
    if dz == 0.0:
        return anchor
    moved = anchor.t + np.array([0.0, 0.0, dz])
    samples = capsule_sample_points(body, config.capsule_spacing) @ rot.T + moved
    if float(np.min(sdf_at(grid, samples))) < 0.0:
        return anchor
    return replace(anchor, t=moved)


def refine_placement(model: CvaeModel, anchor: Anchor, grid: VoxelGrid, seed: int = 0,
                     max_retries: int = 8):
    """Sample a sub-cell offset (dt, dphi) from the refiner CVAE conditioned on
    the anchor pose and local BPS context.  |dt| clamps to one cell size; a
    draw whose adjusted orientation cannot be orthonormalized is retried with
    a fresh sub-seed, up to `max_retries`, then raises PlacementError.

    Returns (refined anchor, (dt, dphi) actually applied).
    """
    if model.basis_seed is None or model.n_basis is None:
        raise ValueError("refiner model has no basis-point metadata")
    basis = bps_basis(model.n_basis, model.basis_seed)
    feat = bps_encode(grid.mesh, anchor.t, REFINER_CAGE_HALF_EXTENT, basis)
    cond = np.concatenate([anchor.theta, feat])
    rng = np.random.default_rng(seed)
    for _ in range(max_retries):
        z = rng.standard_normal(model.d_z)
        out = cvae_decode(model, z, cond)
        dt = np.asarray(out[:3], dtype=float)
        norm = float(np.linalg.norm(dt))
        if norm > grid.cell_size:
            dt = dt * (grid.cell_size / norm)
        dphi = np.asarray(out[3:9], dtype=float)
        phi_new = anchor.phi + dphi
        try:
            rot = rot6d_to_matrix(phi_new)
        except ValueError:
            continue
        refined = replace(
            anchor,
            t=anchor.t + dt,
            phi=matrix_to_rot6d(rot),
            theta=anchor.theta.copy(),
        )
        return refined, (dt, dphi)
    raise PlacementError(
        f"refiner produced a degenerate orientation {max_retries} times in a row"
    )


def anchor_energy(t: np.ndarray, anchor: Anchor, grid: VoxelGrid, t_ref: np.ndarray,
                  config: PlacementConfig | None = None, w_reg: float = 1.0) -> float:
    """-affordance + w_penetration * penetration + w_reg * |t - t_ref|^2 with
    the body rotated by the anchor's stored orientation."""
    config = config or PlacementConfig()
    body = proxy_body(anchor.theta, anchor.action)
    rot = rot6d_to_matrix(anchor.phi)
    aff, pen = _affordance_penetration(np.asarray(t, float)[None, :], body, rot, grid, config)
    reg = float(np.sum((np.asarray(t) - t_ref) ** 2))
    return float(-aff[0] + config.w_penetration * pen[0] + w_reg * reg)


def optimize_anchor(anchor: Anchor, grid: VoxelGrid, iterations: int = 10,
                    step: float = 0.05, w_reg: float = 1.0,
                    config: PlacementConfig | None = None,
                    return_trace: bool = False):
    """Projected gradient descent on the anchor translation with backtracking
    line search; the energy sequence never increases.  Orientation and pose
    stay fixed."""
    config = config or PlacementConfig()
    t_ref = anchor.t.copy()
    t = anchor.t.copy()
    h = grid.cell_size / 8.0

    def energy(tv):
        return anchor_energy(tv, anchor, grid, t_ref, config, w_reg)

    e = energy(t)
    trace = [e]
    for _ in range(iterations):
        g = np.zeros(3)
        for ax in range(3):
            d = np.zeros(3)
            d[ax] = h
            g[ax] = (energy(t + d) - energy(t - d)) / (2.0 * h)
        alpha = step
        moved = False
        for _ in range(12):
            cand = t - alpha * g
            ce = energy(cand)
            if ce <= e:
                t, e, moved = cand, ce, True
                break
            alpha *= 0.5
        trace.append(e)
        if not moved:
            break
    out = replace(anchor, t=t, theta=anchor.theta.copy())
    return (out, trace) if return_trace else out


def train_place_refiner(offsets: np.ndarray, conditions: np.ndarray, *, basis_seed: int,
                        seed: int = 0, epochs: int = 40, batch_size: int = 8,
                        kl_weight: float = 1e-3, learning_rate: float = 1e-4,
                        d_z: int = 32, hidden: int = 256) -> tuple[CvaeModel, list[float]]:
    """Fit the placement-refiner CVAE on (offset, pose ++ BPS context) pairs.
    Offsets are 9-vectors: dt (3) then dphi (6)."""
    offsets = np.asarray(offsets, dtype=float)
    conditions = np.asarray(conditions, dtype=float)
    model = make_cvae(
        x_dim=9, cond_dim=conditions.shape[1], d_z=d_z, hidden=hidden, seed=seed
    )
    model.basis_seed = basis_seed
    model.n_basis = conditions.shape[1] - POSE_DIM
    model, trace = train_cvae(
        model, offsets, conditions, epochs=epochs, batch_size=batch_size,
        kl_weight=kl_weight, learning_rate=learning_rate, seed=seed,
    )
    return model, trace


def save_pose_model(model: CvaeModel, path):
    save_model(model, path, kind="pose")


def save_refiner(model: CvaeModel, path):
    save_model(model, path, kind="refiner")


def load_pose_model(path) -> CvaeModel:
    model, kind, _ = load_model(path)
    if kind != "pose":
        raise ValueError(f"checkpoint kind {kind!r} is not a pose model")
    return model


def load_refiner(path) -> CvaeModel:
    model, kind, _ = load_model(path)
    if kind != "refiner":
        raise ValueError(f"checkpoint kind {kind!r} is not a refiner")
    return model


def train_pose_model(poses: np.ndarray, actions_onehot: np.ndarray, *, seed: int = 0,
                     epochs: int = 40, batch_size: int = 8, kl_weight: float = 1e-3,
                     learning_rate: float = 1e-4, d_z: int = 32,
                     hidden: int = 256) -> tuple[CvaeModel, list[float]]:
    """Fit the pose CVAE on (pose, one-hot action) pairs."""
    poses = np.asarray(poses, dtype=float)
    model = make_cvae(
        x_dim=poses.shape[1], cond_dim=len(ACTIONS), d_z=d_z, hidden=hidden, seed=seed
    )
    model, trace = train_cvae(
        model, poses, actions_onehot, epochs=epochs, batch_size=batch_size,
        kl_weight=kl_weight, learning_rate=learning_rate, seed=seed,
    )
    return model, trace
