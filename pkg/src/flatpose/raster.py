"""Software depth rendering.

A z-buffer rasterizer over pixel centers with perspective-correct depth
interpolation. Cameras look along +z with x right and y down; all depths are
millimeters and 0 marks background. Depth images serialize as 16-bit PNGs in
0.1 mm units, masks as 8-bit PNGs with foreground at 255.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit
from PIL import Image

from .errors import BehindCameraError
from .transforms import Pose

DEPTH_SCALE_MM = 0.1   # one PNG unit in millimeters


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics; principal point in pixels from the top-left."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def to_matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx],
                         [0.0, self.fy, self.cy],
                         [0.0, 0.0, 1.0]])

    @classmethod
    def from_matrix(cls, k: np.ndarray, width: int, height: int) -> "CameraIntrinsics":
        k = np.asarray(k, dtype=np.float64).reshape(3, 3)
        return cls(fx=float(k[0, 0]), fy=float(k[1, 1]),
                   cx=float(k[0, 2]), cy=float(k[1, 2]),
                   width=int(width), height=int(height))


def default_camera(width: int = 640, height: int = 480,
                   focal: float = 580.0) -> CameraIntrinsics:
    """VGA-class camera with the principal point at the image center."""
    return CameraIntrinsics(fx=focal, fy=focal,
                            cx=width / 2.0, cy=height / 2.0,
                            width=width, height=height)


def project(points_cam: np.ndarray, cam: CameraIntrinsics,
            near: float = 1e-9) -> np.ndarray:
    """Project camera-frame points to pixel coordinates.

    Raises :class:`BehindCameraError` when any point sits at or behind the
    near limit, because its image position is undefined.
    """
    pts = np.asarray(points_cam, dtype=np.float64).reshape(-1, 3)
    z = pts[:, 2]
    if np.any(z <= near):
        raise BehindCameraError(
            f"{int(np.sum(z <= near))} point(s) at z <= {near} "
            f"(min z = {z.min():.3f} mm)")
    uv = np.empty((len(pts), 2))
    uv[:, 0] = cam.fx * pts[:, 0] / z + cam.cx
    uv[:, 1] = cam.fy * pts[:, 1] / z + cam.cy
    return uv


@njit(cache=True)
def _raster_kernel(us, vs, zs, tris, height, width, depth):
    for t in range(tris.shape[0]):
        i0, i1, i2 = tris[t, 0], tris[t, 1], tris[t, 2]
        x0, y0 = us[i0], vs[i0]
        x1, y1 = us[i1], vs[i1]
        x2, y2 = us[i2], vs[i2]
        area = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
        if abs(area) < 1e-12:
            continue
        iz0, iz1, iz2 = 1.0 / zs[i0], 1.0 / zs[i1], 1.0 / zs[i2]

        xmin = min(x0, min(x1, x2))
        xmax = max(x0, max(x1, x2))
        ymin = min(y0, min(y1, y2))
        ymax = max(y0, max(y1, y2))
        c0 = max(int(math.floor(xmin - 0.5)), 0)
        c1 = min(int(math.ceil(xmax - 0.5)), width - 1)
        r0 = max(int(math.floor(ymin - 0.5)), 0)
        r1 = min(int(math.ceil(ymax - 0.5)), height - 1)

        for r in range(r0, r1 + 1):
            py = r + 0.5
            for c in range(c0, c1 + 1):
                px = c + 0.5
                w0 = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
                w1 = (x0 - x2) * (py - y2) - (y0 - y2) * (px - x2)
                w2 = (x1 - x0) * (py - y0) - (y1 - y0) * (px - x0)
                if area > 0.0:
                    if w0 < 0.0 or w1 < 0.0 or w2 < 0.0:
                        continue
                else:
                    if w0 > 0.0 or w1 > 0.0 or w2 > 0.0:
                        continue
                inv_z = (w0 * iz0 + w1 * iz1 + w2 * iz2) / area
                if inv_z <= 0.0:
                    continue
                z = 1.0 / inv_z
                if depth[r, c] == 0.0 or z < depth[r, c]:
                    depth[r, c] = z


def render_depth(mesh, pose: Pose, cam: CameraIntrinsics,
                 near: float = 1.0) -> np.ndarray:
    """Render a posed mesh to a depth image in millimeters (0 = background)."""
    verts_cam = pose.apply(mesh.vertices)
    if np.any(verts_cam[:, 2] <= near):
        raise BehindCameraError(
            f"mesh crosses the near plane at {near} mm "
            f"(min z = {verts_cam[:, 2].min():.3f} mm)")
    z = verts_cam[:, 2]
    us = cam.fx * verts_cam[:, 0] / z + cam.cx
    vs = cam.fy * verts_cam[:, 1] / z + cam.cy
    depth = np.zeros((cam.height, cam.width), dtype=np.float64)
    _raster_kernel(us, vs, z, np.ascontiguousarray(mesh.triangles),
                   cam.height, cam.width, depth)
    return depth


def render_scene(meshes_with_poses, cam: CameraIntrinsics,
                 near: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Render several posed meshes into one depth map plus an instance map.

    The instance map holds the index of the winning (closest) mesh per
    pixel, -1 on background. An empty scene gives an all-zero depth map.
    """
    depth = np.zeros((cam.height, cam.width), dtype=np.float64)
    instances = np.full((cam.height, cam.width), -1, dtype=np.int32)
    for idx, (mesh, pose) in enumerate(meshes_with_poses):
        solo = render_depth(mesh, pose, cam, near=near)
        closer = (solo > 0) & ((depth == 0) | (solo < depth))
        depth[closer] = solo[closer]
        instances[closer] = idx
    return depth, instances


def combine_depths(depths: list[np.ndarray]) -> np.ndarray:
    """Merge per-object depth images, keeping the closest surface per pixel."""
    if not depths:
        raise ValueError("need at least one depth image")
    out = depths[0].copy()
    for d in depths[1:]:
        closer = (d > 0) & ((out == 0) | (d < out))
        out[closer] = d[closer]
    return out


def visibility_mask(scene_depth: np.ndarray, object_depth: np.ndarray,
                    tol: float = 1e-6) -> np.ndarray:
    """Pixels where the object is the surface the camera actually sees."""
    return (object_depth > 0) & (object_depth <= scene_depth + tol)


def warm_up() -> None:
    """Trigger the rasterizer JIT once so later renders run at full speed."""
    us = np.array([1.0, 9.0, 5.0])
    vs = np.array([1.0, 1.0, 9.0])
    zs = np.array([10.0, 10.0, 10.0])
    tris = np.array([[0, 1, 2]], dtype=np.int32)
    depth = np.zeros((12, 12))
    _raster_kernel(us, vs, zs, tris, 12, 12, depth)


# ---------------------------------------------------------------------------
# image IO


def save_depth_png(path, depth_mm: np.ndarray,
                   scale: float = DEPTH_SCALE_MM) -> None:
    """Write depth as a 16-bit PNG in ``scale`` millimeter units."""
    quant = np.round(depth_mm / scale)
    if quant.max() > 65535:
        raise ValueError(
            f"depth {depth_mm.max():.1f} mm exceeds the 16-bit range "
            f"at {scale} mm per unit")
    arr = quant.astype("<u2")
    Image.fromarray(arr).save(Path(path))


def load_depth_png(path, scale: float = DEPTH_SCALE_MM) -> np.ndarray:
    """Read a 16-bit depth PNG back to millimeters."""
    arr = np.asarray(Image.open(Path(path)), dtype=np.uint16)
    return arr.astype(np.float64) * scale


def save_mask_png(path, mask: np.ndarray) -> None:
    Image.fromarray(np.where(mask, 255, 0).astype(np.uint8), mode="L").save(
        Path(path))


def load_mask_png(path) -> np.ndarray:
    return np.asarray(Image.open(Path(path)), dtype=np.uint8) > 127
