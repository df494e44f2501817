"""Synthetic pose dataset generation.

Parts rest flat on the z = 0 plane with non-overlapping footprints, a camera
on a randomized ring looks at the table center, and each view is rendered to
a depth image plus per-instance visibility masks. Scenes serialize to the
standard per-scene JSON layout (ground-truth poses, camera parameters, pixel
statistics) so existing pose-benchmark tooling can read them. Generation is
fully driven by one seeded generator: the same seed yields byte-identical
datasets.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import ConvexHull

from .errors import BehindCameraError, PlacementError
from .geometry import SymmetrySet, TriMesh, write_models
from .raster import (
    DEPTH_SCALE_MM,
    CameraIntrinsics,
    combine_depths,
    default_camera,
    render_depth,
    save_depth_png,
    save_mask_png,
    visibility_mask,
)
from .transforms import Pose, look_at, rotation_x, rotation_z


@dataclass(frozen=True)
class GenConfig:
    """Knobs for scene layout and camera sampling."""

    n_objects_min: int = 3
    n_objects_max: int = 6
    placement_extent: float = 160.0        # half-size of the placement square
    margin: float = 5.0                    # min gap between part footprints
    flip_probability: float = 0.5          # chance a part lies on its back
    cam_distance: tuple = (700.0, 1300.0)  # mm from the table center
    cam_elevation_deg: tuple = (35.0, 80.0)
    max_placement_tries: int = 100
    max_camera_tries: int = 50


@dataclass(frozen=True)
class Placement:
    """One part instance laid out in world coordinates."""

    category_id: int
    world_pose: Pose


# ---------------------------------------------------------------------------
# layout


def _convex_footprint(mesh: TriMesh, rotation: np.ndarray) -> np.ndarray:
    """Convex hull (CCW) of the part's xy extent under a world rotation."""
    xy = (mesh.vertices @ rotation.T)[:, :2]
    hull = ConvexHull(xy)
    return xy[hull.vertices]


def _separated(hull_a: np.ndarray, hull_b: np.ndarray, margin: float) -> bool:
    """Separating-axis gap test over both hulls' edge normals.

    Conservative: requires a gap larger than ``margin`` along some edge
    normal, which can reject a few legal layouts but never accepts an
    overlapping one.
    """
    for poly, other in ((hull_a, hull_b), (hull_b, hull_a)):
        n = len(poly)
        for i in range(n):
            edge = poly[(i + 1) % n] - poly[i]
            axis = np.array([-edge[1], edge[0]])
            norm = math.hypot(axis[0], axis[1])
            if norm < 1e-12:
                continue
            axis = axis / norm
            a = poly @ axis
            b = other @ axis
            gap = max(b.min() - a.max(), a.min() - b.max())
            if gap > margin:
                return True
    return False


def sample_resting_rotation(rng: np.random.Generator,
                            flip_probability: float = 0.5) -> np.ndarray:
    """Rotation of a flat part lying on the table: spin about z, maybe
    flipped onto its other face."""
    theta = rng.uniform(0.0, 2.0 * math.pi)
    r = rotation_z(theta)
    if rng.random() < flip_probability:
        r = r @ rotation_x(math.pi)
    return r


def compose_scene(models: dict[int, tuple[TriMesh, SymmetrySet]],
                  rng: np.random.Generator,
                  config: GenConfig = GenConfig()) -> list[Placement]:
    """Lay out a handful of parts with pairwise-separated footprints."""
    if not models:
        raise PlacementError("no models to place")
    n = int(rng.integers(config.n_objects_min, config.n_objects_max + 1))
    cats = rng.choice(sorted(models), size=n, replace=True)

    placements: list[Placement] = []
    hulls: list[np.ndarray] = []
    for cat in cats:
        mesh = models[int(cat)][0]
        thickness = float(np.ptp(mesh.vertices[:, 2]))
        placed = False
        for _ in range(config.max_placement_tries):
            rot = sample_resting_rotation(rng, config.flip_probability)
            xy = rng.uniform(-config.placement_extent,
                             config.placement_extent, size=2)
            hull = _convex_footprint(mesh, rot) + xy
            if all(_separated(hull, h, config.margin) for h in hulls):
                pose = Pose(rot, np.array([xy[0], xy[1], thickness / 2.0]))
                placements.append(Placement(int(cat), pose))
                hulls.append(hull)
                placed = True
                break
        if not placed:
            # crowded table: drop this instance rather than overlap
            continue
    if not placements:
        raise PlacementError(
            f"could not place any of {n} objects in "
            f"{config.max_placement_tries} tries each")
    return placements


def sample_camera(rng: np.random.Generator,
                  config: GenConfig = GenConfig()) -> Pose:
    """World-to-camera pose on a randomized ring looking at the origin."""
    azimuth = rng.uniform(0.0, 2.0 * math.pi)
    elevation = math.radians(rng.uniform(*config.cam_elevation_deg))
    distance = rng.uniform(*config.cam_distance)
    eye = distance * np.array([math.cos(elevation) * math.cos(azimuth),
                               math.cos(elevation) * math.sin(azimuth),
                               math.sin(elevation)])
    return look_at(eye, np.zeros(3), np.array([0.0, 0.0, 1.0]))


# ---------------------------------------------------------------------------
# rendering


@dataclass
class RenderedView:
    """Depth, per-instance visibility masks, and bookkeeping for one image."""

    scene_depth: np.ndarray
    object_depths: list[np.ndarray]
    visib_masks: list[np.ndarray]
    poses_cam: list[Pose]                   # model-to-camera, placement order
    categories: list[int] = field(default_factory=list)


@dataclass(frozen=True)
class SceneAnnotation:
    """Ground truth for one image: camera plus posed, visibility-rated
    instances."""

    image_id: int
    cam: CameraIntrinsics
    instances: list[tuple[int, Pose, float]]    # (category, pose, visible)


def annotate_view(view: RenderedView, cam: CameraIntrinsics,
                  image_id: int) -> SceneAnnotation:
    """Condense a rendered view into its per-instance annotation."""
    instances = []
    for cat, pose, solo, visib in zip(view.categories, view.poses_cam,
                                      view.object_depths, view.visib_masks):
        solo_px = int((solo > 0).sum())
        fract = float(visib.sum() / solo_px) if solo_px else 0.0
        instances.append((cat, pose, fract))
    return SceneAnnotation(image_id=image_id, cam=cam, instances=instances)


def render_view(models: dict[int, tuple[TriMesh, SymmetrySet]],
                placements: list[Placement], world_to_cam: Pose,
                cam: CameraIntrinsics) -> RenderedView:
    depths = []
    poses = []
    cats = []
    for placement in placements:
        pose_cam = world_to_cam.compose(placement.world_pose)
        mesh = models[placement.category_id][0]
        depths.append(render_depth(mesh, pose_cam, cam))
        poses.append(pose_cam)
        cats.append(placement.category_id)
    scene = combine_depths(depths)
    masks = [visibility_mask(scene, d) for d in depths]
    return RenderedView(scene_depth=scene, object_depths=depths,
                        visib_masks=masks, poses_cam=poses, categories=cats)


def _mask_bbox(mask: np.ndarray) -> list[int]:
    """Tight [x, y, w, h] box of a boolean mask, or all -1 when empty."""
    rows, cols = np.nonzero(mask)
    if len(rows) == 0:
        return [-1, -1, -1, -1]
    return [int(cols.min()), int(rows.min()),
            int(cols.max() - cols.min() + 1), int(rows.max() - rows.min() + 1)]


# ---------------------------------------------------------------------------
# dataset writer


def _round_list(values, digits):
    return [round(float(v), digits) for v in np.asarray(values).ravel()]


def write_dataset(root, models: dict[int, tuple[TriMesh, SymmetrySet]],
                  n_scenes: int, images_per_scene: int, seed: int,
                  config: GenConfig = GenConfig(),
                  cam: CameraIntrinsics | None = None,
                  split: str = "train") -> Path:
    """Generate a complete dataset under ``root``; returns the split path.

    One seeded generator drives every sample in a fixed order, so a given
    (seed, config, models) triple always produces byte-identical files.
    """
    cam = cam or default_camera()
    root = Path(root)
    rng = np.random.default_rng(seed)

    write_models(models, root / "models")
    (root / "camera.json").write_text(json.dumps({
        "cx": cam.cx, "cy": cam.cy, "fx": cam.fx, "fy": cam.fy,
        "width": cam.width, "height": cam.height,
        "depth_scale": DEPTH_SCALE_MM,
    }, indent=1, sort_keys=True), encoding="utf-8")

    split_dir = root / split
    for scene_id in range(n_scenes):
        scene_dir = split_dir / f"{scene_id:06d}"
        (scene_dir / "depth").mkdir(parents=True, exist_ok=True)
        (scene_dir / "mask_visib").mkdir(parents=True, exist_ok=True)

        placements = compose_scene(models, rng, config)
        scene_camera: dict[str, dict] = {}
        scene_gt: dict[str, list] = {}
        scene_gt_info: dict[str, list] = {}

        for im_id in range(images_per_scene):
            view = None
            for _ in range(config.max_camera_tries):
                w2c = sample_camera(rng, config)
                try:
                    view = render_view(models, placements, w2c, cam)
                    break
                except BehindCameraError:
                    continue  # part pokes past the near plane: new camera
            if view is None:
                raise PlacementError(
                    f"no valid camera in {config.max_camera_tries} tries "
                    f"(scene {scene_id}, image {im_id})")

            key = str(im_id)
            scene_camera[key] = {
                "cam_K": _round_list(cam.to_matrix(), 6),
                "cam_R_w2c": _round_list(w2c.rotation, 12),
                "cam_t_w2c": _round_list(w2c.translation, 6),
                "depth_scale": DEPTH_SCALE_MM,
            }
            scene_gt[key] = [{
                "cam_R_m2c": _round_list(pose.rotation, 12),
                "cam_t_m2c": _round_list(pose.translation, 6),
                "obj_id": cat,
            } for pose, cat in zip(view.poses_cam, view.categories)]
            scene_gt_info[key] = [{
                "bbox_obj": _mask_bbox(d > 0),
                "bbox_visib": _mask_bbox(m),
                "px_count_all": int((d > 0).sum()),
                "px_count_visib": int(m.sum()),
                "visib_fract": round(float(m.sum() / max((d > 0).sum(), 1)), 6),
            } for d, m in zip(view.object_depths, view.visib_masks)]

            save_depth_png(scene_dir / "depth" / f"{im_id:06d}.png",
                           view.scene_depth)
            for inst, mask in enumerate(view.visib_masks):
                save_mask_png(
                    scene_dir / "mask_visib" / f"{im_id:06d}_{inst:06d}.png",
                    mask)

        for name, payload in (("scene_camera.json", scene_camera),
                              ("scene_gt.json", scene_gt),
                              ("scene_gt_info.json", scene_gt_info)):
            (scene_dir / name).write_text(
                json.dumps(payload, indent=1, sort_keys=True),
                encoding="utf-8")
    return split_dir


# ---------------------------------------------------------------------------
# dataset reader


def read_camera(root) -> CameraIntrinsics:
    meta = json.loads((Path(root) / "camera.json").read_text(encoding="utf-8"))
    return CameraIntrinsics(fx=meta["fx"], fy=meta["fy"],
                            cx=meta["cx"], cy=meta["cy"],
                            width=meta["width"], height=meta["height"])


def scene_ids(root, split: str = "train") -> list[int]:
    split_dir = Path(root) / split
    return sorted(int(p.name) for p in split_dir.iterdir() if p.is_dir())


def read_scene_gt(root, scene_id: int,
                  split: str = "train") -> dict[int, list[tuple[int, Pose]]]:
    """Ground truth per image: list of (category, model-to-camera pose)."""
    path = Path(root) / split / f"{scene_id:06d}" / "scene_gt.json"
    raw = json.loads(path.read_text(encoding="utf-8"))
    out: dict[int, list[tuple[int, Pose]]] = {}
    for key, entries in raw.items():
        out[int(key)] = [
            (e["obj_id"], Pose(np.array(e["cam_R_m2c"]).reshape(3, 3),
                               np.array(e["cam_t_m2c"])))
            for e in entries
        ]
    return {k: out[k] for k in sorted(out)}


def read_scene_camera(root, scene_id: int,
                      split: str = "train") -> dict[int, Pose]:
    """World-to-camera extrinsics per image."""
    path = Path(root) / split / f"{scene_id:06d}" / "scene_camera.json"
    raw = json.loads(path.read_text(encoding="utf-8"))
    return {int(k): Pose(np.array(v["cam_R_w2c"]).reshape(3, 3),
                         np.array(v["cam_t_w2c"]))
            for k, v in sorted(raw.items(), key=lambda kv: int(kv[0]))}


def read_scene_gt_info(root, scene_id: int,
                       split: str = "train") -> dict[int, list[dict]]:
    path = Path(root) / split / f"{scene_id:06d}" / "scene_gt_info.json"
    raw = json.loads(path.read_text(encoding="utf-8"))
    return {int(k): v for k, v in raw.items()}


def read_depth(root, scene_id: int, im_id: int,
               split: str = "train") -> np.ndarray:
    path = (Path(root) / split / f"{scene_id:06d}" / "depth"
            / f"{im_id:06d}.png")
    from .raster import load_depth_png

    return load_depth_png(path)


def read_visib_mask(root, scene_id: int, im_id: int, instance: int,
                    split: str = "train") -> np.ndarray:
    path = (Path(root) / split / f"{scene_id:06d}" / "mask_visib"
            / f"{im_id:06d}_{instance:06d}.png")
    from .raster import load_mask_png

    return load_mask_png(path)


def read_annotations(root, split: str = "train") -> list[SceneAnnotation]:
    """Per-image annotations for a whole dataset, in scene/image order."""
    from .metrics import make_image_id

    cam = read_camera(root)
    out = []
    for scene_id in scene_ids(root, split):
        gt = read_scene_gt(root, scene_id, split)
        info = read_scene_gt_info(root, scene_id, split)
        for im_id, entries in gt.items():
            instances = [
                (cat, pose, float(info[im_id][k]["visib_fract"]))
                for k, (cat, pose) in enumerate(entries)
            ]
            out.append(SceneAnnotation(image_id=make_image_id(scene_id, im_id),
                                       cam=cam, instances=instances))
    return out
