"""Pluggable pose estimators: a noisy oracle and a contour matcher.

The oracle perturbs ground-truth annotations with controllable rotation,
translation, and drop noise, which makes it the reference driver for the
evaluation pipeline. The contour matcher is a classical estimator for flat
parts resting on a known plane: it back-projects mask boundaries onto the
plane, classifies each connected component against a profile library, and
recovers the in-plane pose by rotation search plus ICP refinement.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .docparse import Profile2D
from .errors import UnsupportedInputError
from .geometry import SymmetrySet, TriMesh
from .raster import CameraIntrinsics
from .scenegen import SceneAnnotation
from .transforms import Pose, rotation_about_axis, rotation_x, rotation_z

MIN_COMPONENT_PX = 50
_GRID_STEP_DEG = 1.0
_ICP_ITERATIONS = 10
_N_GRID_POINTS = 96
_N_ICP_POINTS = 200
_TIE_EPS = 1e-6


@dataclass(frozen=True)
class Detection:
    """One recovered instance: class, confidence, pose, and pixel box."""

    category_id: int
    score: float
    pose: Pose
    bbox: list[float] | None = None        # [x, y, w, h] px, when known


@dataclass(frozen=True)
class EstimatorInput:
    """One frame handed to an estimator.

    Exactly one payload kind must be present: an instance ``mask``
    (optionally accompanied by its ``depth`` map) for the synthetic path,
    or a single-channel ``intensity`` image for the real path.
    """

    cam: CameraIntrinsics
    frame_id: int = 0
    mask: np.ndarray | None = None
    depth: np.ndarray | None = None
    intensity: np.ndarray | None = None

    def __post_init__(self):
        has_mask = self.mask is not None
        has_intensity = self.intensity is not None
        if has_mask == has_intensity:
            raise ValueError(
                "provide exactly one payload: mask (+ depth) or intensity")
        if self.depth is not None and not has_mask:
            raise ValueError("a depth map only accompanies a mask payload")


@dataclass(frozen=True)
class EstimatorOutput:
    """Detections in descending score order plus timing and diagnostics."""

    detections: list[Detection]
    compute_time_ms: float
    diagnostics: list[str] = field(default_factory=list)

    def __post_init__(self):
        scores = [d.score for d in self.detections]
        if any(b > a for a, b in zip(scores, scores[1:])):
            raise ValueError("detections must be sorted by descending score")


# ---------------------------------------------------------------------------
# noisy oracle


def oracle_estimate(annotation: SceneAnnotation,
                    noise: tuple[float, float, float] = (0.0, 0.0, 0.0),
                    rng_seed: int = 0,
                    models: dict[int, tuple[TriMesh, SymmetrySet]] | None
                    = None) -> EstimatorOutput:
    """Ground truth perturbed by (rotation deg sigma, translation mm sigma,
    drop probability).

    Each instance survives with probability 1 - drop and is perturbed by a
    random axis-angle rotation (angle drawn as the absolute value of a
    zero-mean normal) and Gaussian translation noise. Scores are the
    survival probability. Output is deterministic for a fixed seed. When
    ``models`` is given, detections carry projected bounding boxes.
    """
    sigma_rot_deg, sigma_trans, drop = noise
    if sigma_rot_deg < 0 or sigma_trans < 0:
        raise ValueError("noise sigmas must be non-negative")
    if not 0.0 <= drop < 1.0:
        raise ValueError("drop probability must be in [0, 1)")

    rng = np.random.default_rng(rng_seed)
    start = time.perf_counter()
    detections = []
    for cat, pose, _visib in annotation.instances:
        if rng.random() < drop:
            continue
        axis = rng.normal(size=3)
        norm = np.linalg.norm(axis)
        axis = axis / norm if norm > 1e-12 else np.array([0.0, 0.0, 1.0])
        angle = abs(rng.normal(0.0, math.radians(sigma_rot_deg)))
        shift = rng.normal(0.0, sigma_trans, size=3)
        est = Pose(rotation_about_axis(axis, angle) @ pose.rotation,
                   pose.translation + shift)
        bbox = None
        if models is not None and cat in models:
            from .metrics import _projected_bbox

            bbox = _projected_bbox(models[cat][0], est, annotation.cam)
        detections.append(Detection(category_id=cat, score=1.0 - drop,
                                    pose=est, bbox=bbox))
    elapsed = (time.perf_counter() - start) * 1000.0
    return EstimatorOutput(detections=detections, compute_time_ms=elapsed)


# ---------------------------------------------------------------------------
# contour matcher: mask handling


def _label_components(mask: np.ndarray) -> list[np.ndarray]:
    """4-connected components of a boolean mask as separate masks."""
    h, w = mask.shape
    labels = np.full((h, w), -1, dtype=np.int32)
    components = []
    for r, c in zip(*np.nonzero(mask)):
        if labels[r, c] >= 0:
            continue
        idx = len(components)
        labels[r, c] = idx
        stack = [(int(r), int(c))]
        pixels = [(int(r), int(c))]
        while stack:
            y, x = stack.pop()
            for ny, nx in ((y - 1, x), (y + 1, x), (y, x - 1), (y, x + 1)):
                if (0 <= ny < h and 0 <= nx < w and mask[ny, nx]
                        and labels[ny, nx] < 0):
                    labels[ny, nx] = idx
                    stack.append((ny, nx))
                    pixels.append((ny, nx))
        comp = np.zeros((h, w), dtype=bool)
        rows, cols = zip(*pixels)
        comp[list(rows), list(cols)] = True
        components.append(comp)
    return components


def _component_masks(inp: EstimatorInput) -> list[np.ndarray]:
    """Split the input payload into per-instance boolean masks.

    Integer masks use negative values as background when any are present
    (instance maps), zero otherwise (binary or id images); every id region
    is additionally split into connected components. Intensity payloads
    treat any positive value as foreground.
    """
    if inp.intensity is not None:
        return _label_components(np.asarray(inp.intensity) > 0)
    mask = np.asarray(inp.mask)
    if mask.dtype == bool:
        return _label_components(mask)
    background_negative = bool((mask < 0).any()) if \
        np.issubdtype(mask.dtype, np.signedinteger) else False
    ids = np.unique(mask)
    ids = ids[ids >= 0] if background_negative else ids[ids > 0]
    out = []
    for val in ids:
        out.extend(_label_components(mask == val))
    return out


def _boundary_pixels(mask: np.ndarray) -> np.ndarray:
    """(N, 2) rows/cols of mask pixels with a background 4-neighbor."""
    h, w = mask.shape
    padded = np.zeros((h + 2, w + 2), dtype=bool)
    padded[1:-1, 1:-1] = mask
    interior = (padded[1:-1, 1:-1] & padded[:-2, 1:-1] & padded[2:, 1:-1]
                & padded[1:-1, :-2] & padded[1:-1, 2:])
    rows, cols = np.nonzero(mask & ~interior)
    return np.column_stack([rows, cols])


def _backproject_to_plane(pixels: np.ndarray, cam: CameraIntrinsics,
                          plane: Pose, height: float) -> np.ndarray:
    """Intersect pixel-center rays with the plane lifted by ``height``.

    Returns (N, 2) xy coordinates in the plane frame; grazing or backward
    rays are dropped.
    """
    u = pixels[:, 1] + 0.5
    v = pixels[:, 0] + 0.5
    rays = np.column_stack([(u - cam.cx) / cam.fx,
                            (v - cam.cy) / cam.fy,
                            np.ones(len(pixels))])
    normal = plane.rotation[:, 2]
    offset = float(normal @ plane.translation) + height
    denom = rays @ normal
    ok = np.abs(denom) > 1e-9
    t = np.where(ok, offset / np.where(ok, denom, 1.0), -1.0)
    ok &= t > 0
    points_cam = rays[ok] * t[ok, None]
    return plane.inverse().apply(points_cam)[:, :2]


# ---------------------------------------------------------------------------
# contour matcher: 2D registration


def _resample_loops(loops: list[np.ndarray], n_total: int) -> np.ndarray:
    """Even arc-length resampling across loops, proportional to length."""
    lengths = []
    closed_loops = []
    for loop in loops:
        closed = np.vstack([loop, loop[:1]])
        seg = np.linalg.norm(np.diff(closed, axis=0), axis=1)
        closed_loops.append((closed, seg))
        lengths.append(float(seg.sum()))
    total = sum(lengths)
    pts = []
    for (closed, seg), length in zip(closed_loops, lengths):
        n = max(8, int(round(n_total * length / total))) if total else 8
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        s = np.linspace(0.0, cum[-1], n, endpoint=False)
        idx = np.clip(np.searchsorted(cum, s, side="right") - 1,
                      0, len(seg) - 1)
        denom = np.where(seg[idx] > 0, seg[idx], 1.0)
        frac = (s - cum[idx]) / denom
        pts.append(closed[idx] + frac[:, None] * (closed[idx + 1]
                                                  - closed[idx]))
    return np.vstack(pts)


def _subsample(points: np.ndarray, n: int) -> np.ndarray:
    if len(points) <= n:
        return points
    idx = np.linspace(0, len(points) - 1, n).astype(int)
    return points[idx]


def _symmetric_nn_distance(a: np.ndarray, b: np.ndarray) -> float:
    d2 = ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=2)
    fwd = np.sqrt(d2.min(axis=1)).mean()
    bwd = np.sqrt(d2.min(axis=0)).mean()
    return float(0.5 * (fwd + bwd))


def _grid_search_rotation(model_c: np.ndarray, obs_c: np.ndarray) -> float:
    """Best in-plane angle over a fixed grid, both point sets centered.

    Near-tied optima (symmetric shapes) resolve to the angle closest to
    the identity, negative before positive on an exact tie.
    """
    angles = np.deg2rad(np.arange(0.0, 360.0, _GRID_STEP_DEG))
    dists = np.empty(len(angles))
    for start in range(0, len(angles), 45):
        chunk = angles[start:start + 45]
        cos, sin = np.cos(chunk), np.sin(chunk)
        rx = np.outer(cos, model_c[:, 0]) - np.outer(sin, model_c[:, 1])
        ry = np.outer(sin, model_c[:, 0]) + np.outer(cos, model_c[:, 1])
        rot = np.stack([rx, ry], axis=-1)               # (A, M, 2)
        d2 = ((rot[:, :, None, :] - obs_c[None, None, :, :]) ** 2).sum(-1)
        fwd = np.sqrt(d2.min(axis=2)).mean(axis=1)
        bwd = np.sqrt(d2.min(axis=1)).mean(axis=1)
        dists[start:start + 45] = 0.5 * (fwd + bwd)
    best = dists.min()
    candidates = angles[dists <= best + _TIE_EPS]
    signed = np.where(candidates > math.pi, candidates - 2.0 * math.pi,
                      candidates)
    order = sorted(signed, key=lambda a: (abs(a), a))
    return float(order[0])


def _rot2(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def _icp_refine(model: np.ndarray, obs: np.ndarray, rot: np.ndarray,
                trans: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Point-to-point 2D ICP: fixed iteration count, rigid update by SVD."""
    for _ in range(_ICP_ITERATIONS):
        moved = model @ rot.T + trans
        d2 = ((moved[:, None, :] - obs[None, :, :]) ** 2).sum(axis=2)
        nearest = obs[d2.argmin(axis=1)]
        mu_m = model.mean(axis=0)
        mu_n = nearest.mean(axis=0)
        h = (model - mu_m).T @ (nearest - mu_n)
        u, _, vt = np.linalg.svd(h)
        flip = np.sign(np.linalg.det(vt.T @ u.T))
        rot = vt.T @ np.diag([1.0, flip]) @ u.T
        trans = mu_n - rot @ mu_m
    return rot, trans


@dataclass
class _Registration:
    category_id: int
    residual_mm: float
    normalized: float                       # residual over profile perimeter
    angle: float
    flipped: bool
    trans: np.ndarray
    thickness: float


def _register_component(obs: np.ndarray, mesh: TriMesh, profile: Profile2D,
                        flipped: bool) -> tuple[float, float, np.ndarray]:
    """Align profile points (optionally mirrored) to observed plane points.

    The profile is centered the same way extrusion centers the mesh, so
    the recovered transform maps mesh coordinates directly. Returns
    (residual mm, in-plane angle, translation).
    """
    from .geometry import centered_profile

    centered, _offset = centered_profile(profile)
    model = _resample_loops([centered.outer, *centered.holes], _N_ICP_POINTS)
    if flipped:
        model = model * np.array([1.0, -1.0])
    model_grid = _subsample(model, _N_GRID_POINTS)
    obs_grid = _subsample(obs, _N_GRID_POINTS)

    model_mu = model_grid.mean(axis=0)
    obs_mu = obs_grid.mean(axis=0)
    angle = _grid_search_rotation(model_grid - model_mu, obs_grid - obs_mu)
    rot = _rot2(angle)
    trans = obs_mu - rot @ model_mu

    obs_icp = _subsample(obs, _N_ICP_POINTS)
    rot, trans = _icp_refine(model, obs_icp, rot, trans)
    residual = _symmetric_nn_distance(model @ rot.T + trans, obs_icp)
    final_angle = math.atan2(rot[1, 0], rot[0, 0])
    return residual, final_angle, trans


def _pixel_bbox(mask: np.ndarray) -> list[float]:
    rows, cols = np.nonzero(mask)
    return [float(cols.min()), float(rows.min()),
            float(cols.max() - cols.min() + 1),
            float(rows.max() - rows.min() + 1)]


def contour_estimate(inp: EstimatorInput,
                     library: list[tuple[TriMesh, Profile2D, SymmetrySet]],
                     plane: Pose | None) -> EstimatorOutput:
    """Classify and pose flat parts resting on a known plane.

    Per connected component: boundary pixels are back-projected onto the
    plane (lifted to each candidate's top face), the component is
    classified as the library entry with the smallest registration
    residual normalized by profile perimeter, and the best 2D alignment
    (both mirror hypotheses, 1 degree rotation grid, ICP refinement) is
    lifted to a 6D camera-frame pose. Scores are 1 / (1 + residual mm).
    Components below the pixel minimum are skipped and reported in the
    diagnostics.
    """
    if plane is None:
        raise UnsupportedInputError(
            "contour estimation requires the ground-plane frame")
    start = time.perf_counter()
    diagnostics: list[str] = []
    detections: list[Detection] = []

    for comp in _component_masks(inp):
        n_px = int(comp.sum())
        if n_px < MIN_COMPONENT_PX:
            diagnostics.append(
                f"skipped component with {n_px} px "
                f"(minimum {MIN_COMPONENT_PX})")
            continue
        boundary = _boundary_pixels(comp)
        obs_by_height: dict[float, np.ndarray] = {}
        best: _Registration | None = None
        for mesh, profile, _syms in library:
            thickness = float(np.ptp(mesh.vertices[:, 2]))
            key = round(thickness, 9)
            if key not in obs_by_height:
                obs_by_height[key] = _backproject_to_plane(
                    boundary, inp.cam, plane, thickness)
            obs = obs_by_height[key]
            if len(obs) < 3:
                continue
            perimeter = profile.perimeter()
            for flipped in (False, True):
                residual, angle, trans = _register_component(
                    obs, mesh, profile, flipped)
                normalized = residual / perimeter
                if best is None or normalized < best.normalized:
                    best = _Registration(
                        category_id=profile.category_id,
                        residual_mm=residual, normalized=normalized,
                        angle=angle, flipped=flipped, trans=trans,
                        thickness=thickness)
        if best is None:
            diagnostics.append("component had no usable plane projection")
            continue
        rot3 = rotation_z(best.angle)
        if best.flipped:
            rot3 = rot3 @ rotation_x(math.pi)
        pose_plane = Pose(rot3, np.array([best.trans[0], best.trans[1],
                                          best.thickness / 2.0]))
        detections.append(Detection(
            category_id=best.category_id,
            score=1.0 / (1.0 + best.residual_mm),
            pose=plane.compose(pose_plane),
            bbox=_pixel_bbox(comp)))

    detections.sort(key=lambda d: -d.score)
    elapsed = (time.perf_counter() - start) * 1000.0
    return EstimatorOutput(detections=detections, compute_time_ms=elapsed,
                           diagnostics=diagnostics)
