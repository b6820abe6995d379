"""6D rotation parameterization (first two rotation-matrix columns) and yaw helpers.

Gravity is -z everywhere in this package; yaw rotates about +z, and a body's
forward axis is the first rotation column.
"""

from __future__ import annotations

import numpy as np

ORTHONORMALIZE_EPS = 1e-8


def rot6d_to_matrix(phi: np.ndarray) -> np.ndarray:
    """Gram-Schmidt the two stored columns back into a proper rotation matrix.

    Raises ValueError when the columns cannot be orthonormalized (zero norm
    or near-parallel inputs).
    """
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (6,):
        raise ValueError(f"expected 6 values, got shape {phi.shape}")
    a, b = phi[:3], phi[3:]
    na = np.linalg.norm(a)
    if na <= ORTHONORMALIZE_EPS:
        raise ValueError("first column has near-zero norm")
    c0 = a / na
    b_perp = b - np.dot(c0, b) * c0
    nb = np.linalg.norm(b_perp)
    if nb <= ORTHONORMALIZE_EPS:
        raise ValueError("columns are near-parallel, cannot orthonormalize")
    c1 = b_perp / nb
    c2 = np.cross(c0, c1)
    return np.stack([c0, c1, c2], axis=1)


def matrix_to_rot6d(rot: np.ndarray) -> np.ndarray:
    rot = np.asarray(rot, dtype=float)
    if rot.shape != (3, 3):
        raise ValueError(f"expected 3x3 matrix, got shape {rot.shape}")
    return np.concatenate([rot[:, 0], rot[:, 1]])


def yaw_to_rot6d(yaw: float) -> np.ndarray:
    """6D encoding of a rotation by `yaw` radians about gravity (+z)."""
    c, s = np.cos(yaw), np.sin(yaw)
    return np.array([c, s, 0.0, -s, c, 0.0])


def heading_to_rot6d(forward: np.ndarray) -> np.ndarray:
    """6D rotation whose first column is the horizontal part of `forward`.

    Vertical input (no horizontal component) raises ValueError; callers fall
    back to a previous heading in that case.
    """
    f = np.asarray(forward, dtype=float)
    fxy = np.array([f[0], f[1], 0.0])
    n = np.linalg.norm(fxy)
    if n <= ORTHONORMALIZE_EPS:
        raise ValueError("forward direction has no horizontal component")
    fxy /= n
    left = np.array([-fxy[1], fxy[0], 0.0])
    return np.concatenate([fxy, left])
