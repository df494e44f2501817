"""Rigid transforms and rotation helpers.

A :class:`Pose` maps model-frame points into camera-frame points
(``x_cam = R @ x_model + t``). The same type doubles as a generic rigid
transform, e.g. world-to-camera extrinsics. Rotations are validated on
construction: orthonormal within 1e-9 and right-handed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_ORTHO_TOL = 1e-9


def _as_rotation(m) -> np.ndarray:
    r = np.asarray(m, dtype=np.float64)
    if r.shape != (3, 3):
        raise ValueError(f"rotation must be 3x3, got shape {r.shape}")
    err = np.abs(r.T @ r - np.eye(3)).max()
    if err >= _ORTHO_TOL:
        raise ValueError(f"rotation is not orthonormal (max |R^T R - I| = {err:.3e})")
    if np.linalg.det(r) <= 0:
        raise ValueError("rotation must be right-handed (det > 0)")
    return r


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform: rotation followed by translation, millimeters."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "rotation", _as_rotation(self.rotation))
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        object.__setattr__(self, "translation", t)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform one point (3,) or a batch (N, 3)."""
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation.T + self.translation

    def compose(self, other: "Pose") -> "Pose":
        """Return self ∘ other: apply ``other`` first, then ``self``."""
        return Pose(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def inverse(self) -> "Pose":
        rt = self.rotation.T
        return Pose(rt, -rt @ self.translation)

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.eye(3), np.zeros(3))


def rotation_z(angle_rad: float) -> np.ndarray:
    c, s = np.cos(angle_rad), np.sin(angle_rad)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotation_x(angle_rad: float) -> np.ndarray:
    c, s = np.cos(angle_rad), np.sin(angle_rad)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rotation_about_axis(axis, angle_rad: float) -> np.ndarray:
    """Rodrigues rotation about a (not necessarily unit) axis."""
    a = np.asarray(axis, dtype=np.float64)
    n = np.linalg.norm(a)
    if n == 0:
        raise ValueError("rotation axis must be non-zero")
    x, y, z = a / n
    k = np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])
    return np.eye(3) + np.sin(angle_rad) * k + (1.0 - np.cos(angle_rad)) * (k @ k)


def rotation_angle(r: np.ndarray) -> float:
    """Geodesic angle of a rotation matrix, radians in [0, pi]."""
    tr = np.clip((np.trace(r) - 1.0) / 2.0, -1.0, 1.0)
    return float(np.arccos(tr))


def look_at(eye, target, up) -> Pose:
    """World-to-camera pose for a camera at ``eye`` looking at ``target``.

    Camera convention: x right, y down, z forward (into the scene).
    ``up`` is the world direction that should map to the camera's -y.
    """
    eye = np.asarray(eye, dtype=np.float64)
    fwd = np.asarray(target, dtype=np.float64) - eye
    n = np.linalg.norm(fwd)
    if n == 0:
        raise ValueError("camera eye and target coincide")
    z = fwd / n
    up = np.asarray(up, dtype=np.float64)
    x = np.cross(-up, z)  # camera y points down, so right = (-up) x forward
    nx = np.linalg.norm(x)
    if nx < 1e-12:
        raise ValueError("up direction is parallel to the view direction")
    x = x / nx
    y = np.cross(z, x)
    r = np.stack([x, y, z])  # rows: camera axes in world coordinates
    return Pose(r, -r @ eye)
