"""Symmetry-aware pose errors, recall grids, and detection mAP.

Pose errors follow the benchmark trio: worst-case vertex displacement in 3D
(MSSD) and in projection (MSPD), both minimized over the model's discrete
symmetries, plus the visible surface discrepancy (VSD) computed from depth
renders. Recall is tabulated over a threshold grid: fractions of the object
diameter for MSSD, multiples of r = image_width / 640 for MSPD, and plain
fractions for VSD. The overall score averages the three per-metric means.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EvaluationError
from .geometry import SymmetrySet, TriMesh
from .raster import CameraIntrinsics, project, render_depth, visibility_mask
from .transforms import Pose

_DEFAULT_FRACTIONS = tuple(round(0.05 * k, 2) for k in range(1, 11))
_DEFAULT_PIXEL_MULTIPLES = tuple(5.0 * k for k in range(1, 11))


@dataclass(frozen=True)
class EvalConfig:
    """Threshold grids and tolerances for pose and detection evaluation.

    ``mssd_thresholds`` are fractions of the object diameter,
    ``mspd_thresholds`` multiples of r = image_width / 640, and
    ``vsd_thresholds`` plain error fractions. ``vsd_tau`` is the depth
    agreement tolerance as a fraction of the diameter.
    """

    mssd_thresholds: tuple = _DEFAULT_FRACTIONS
    mspd_thresholds: tuple = _DEFAULT_PIXEL_MULTIPLES
    vsd_thresholds: tuple = _DEFAULT_FRACTIONS
    vsd_tau: float = 0.15
    visibility_delta: float = 15.0     # mm, for visibility masking
    map_iou: float = 0.5

    def __post_init__(self):
        for name in ("mssd_thresholds", "mspd_thresholds", "vsd_thresholds"):
            grid = getattr(self, name)
            if len(grid) == 0 or any(t <= 0 for t in grid):
                raise ValueError(f"{name} must be positive")
            if any(b <= a for a, b in zip(grid, grid[1:])):
                raise ValueError(f"{name} must be strictly ascending")
        if not 0 < self.vsd_tau:
            raise ValueError("vsd_tau must be positive")
        if not 0 < self.map_iou <= 1:
            raise ValueError("map_iou must be in (0, 1]")


# ---------------------------------------------------------------------------
# pose errors


def e_mssd(estimate: Pose, gt: Pose, mesh: TriMesh,
           symmetries: SymmetrySet) -> float:
    """Max vertex displacement in mm, minimized over symmetries."""
    verts = mesh.vertices
    est = estimate.apply(verts)
    best = math.inf
    for s in symmetries.transforms:
        ref = verts @ (gt.rotation @ s).T + gt.translation
        d = np.sqrt(((est - ref) ** 2).sum(axis=1)).max()
        if d < best:
            best = float(d)
    return best


def e_mspd(estimate: Pose, gt: Pose, mesh: TriMesh, symmetries: SymmetrySet,
           cam: CameraIntrinsics) -> float:
    """Max projected vertex distance in px, minimized over symmetries."""
    verts = mesh.vertices
    est_px = project(estimate.apply(verts), cam)
    best = math.inf
    for s in symmetries.transforms:
        ref = verts @ (gt.rotation @ s).T + gt.translation
        ref_px = project(ref, cam)
        d = np.sqrt(((est_px - ref_px) ** 2).sum(axis=1)).max()
        if d < best:
            best = float(d)
    return best


def e_vsd(estimate: Pose, gt: Pose, mesh: TriMesh,
          scene_depth_gt: np.ndarray, cam: CameraIntrinsics,
          tau_mm: float, delta: float = 15.0) -> float:
    """Visible surface discrepancy: fraction of disagreeing visible pixels.

    Both poses are rendered solo; visibility of each render is judged
    against the ground-truth scene depth. A pixel of the union counts as
    wrong when only one side sees it or the two depths differ by more
    than ``tau_mm``.
    """
    if scene_depth_gt.shape != (cam.height, cam.width):
        raise EvaluationError(
            f"scene depth {scene_depth_gt.shape} does not match the "
            f"{cam.height}x{cam.width} camera")
    solo_est = render_depth(mesh, estimate, cam)
    solo_gt = render_depth(mesh, gt, cam)
    vis_est = visibility_mask(scene_depth_gt, solo_est, tol=delta)
    vis_gt = visibility_mask(scene_depth_gt, solo_gt, tol=delta)
    union = vis_est | vis_gt
    n_union = int(union.sum())
    if n_union == 0:
        return 0.0
    both = vis_est & vis_gt
    agree = both & (np.abs(solo_est - solo_gt) <= tau_mm)
    return float((n_union - int(agree.sum())) / n_union)


# ---------------------------------------------------------------------------
# recall


def recall_curve(errors: list[tuple[float, float, int]], kind: str,
                 config: EvalConfig = EvalConfig()) -> list[float]:
    """Per-threshold recall for one metric.

    ``errors`` holds (error value, object diameter, image width) per target;
    missed targets should carry an infinite error. The threshold unit
    depends on the metric: diameter fractions (mssd), multiples of
    r = width / 640 (mspd), or the raw error (vsd).
    """
    if kind not in ("mssd", "mspd", "vsd"):
        raise EvaluationError(f"unknown metric kind: {kind!r}")
    grid = {"mssd": config.mssd_thresholds,
            "mspd": config.mspd_thresholds,
            "vsd": config.vsd_thresholds}[kind]
    if not errors:
        return [0.0 for _ in grid]
    out = []
    for theta in grid:
        hits = 0
        for err, diameter, width in errors:
            if kind == "mssd":
                limit = theta * diameter
            elif kind == "mspd":
                limit = theta * (width / 640.0)
            else:
                limit = theta
            if err < limit:
                hits += 1
        out.append(hits / len(errors))
    return out


@dataclass
class EvalReport:
    """Recall grids, average recalls, and detection AP for one evaluation."""

    thresholds: dict[str, list[float]]
    recall: dict[str, list[float]]                      # aggregate per metric
    per_object_recall: dict[str, dict[int, list[float]]]
    ar: dict[str, float]
    ar_bop: float
    per_object_ap: dict[int, float] = field(default_factory=dict)
    map50: float = 0.0
    n_targets: int = 0
    confusion: dict[int, dict[int, int]] = field(default_factory=dict)


def bop19_average_recall(errors_by_metric: dict[str, list],
                         per_object: dict[str, dict[int, list]],
                         config: EvalConfig = EvalConfig()) -> EvalReport:
    """Aggregate per-target errors into recall grids and average recalls.

    ``errors_by_metric`` maps "mssd"/"mspd"/"vsd" to (error, diameter,
    width) triples over all targets; ``per_object`` the same keyed by
    category. The headline number is the plain mean of the three
    per-metric average recalls.
    """
    for kind in ("vsd", "mssd", "mspd"):
        if kind not in errors_by_metric:
            raise EvaluationError(f"missing error list for {kind}")
    thresholds = {"mssd": list(config.mssd_thresholds),
                  "mspd": list(config.mspd_thresholds),
                  "vsd": list(config.vsd_thresholds)}
    recall = {k: recall_curve(errors_by_metric[k], k, config)
              for k in ("vsd", "mssd", "mspd")}
    per_object_recall = {
        k: {cat: recall_curve(errs, k, config)
            for cat, errs in sorted(per_object.get(k, {}).items())}
        for k in ("vsd", "mssd", "mspd")
    }
    ar = {k: float(np.mean(recall[k])) for k in recall}
    ar_bop = (ar["vsd"] + ar["mssd"] + ar["mspd"]) / 3.0
    n_targets = len(errors_by_metric["mssd"])
    return EvalReport(thresholds=thresholds, recall=recall,
                      per_object_recall=per_object_recall, ar=ar,
                      ar_bop=ar_bop, n_targets=n_targets)


# ---------------------------------------------------------------------------
# detection mAP


def _iou(box_a, box_b) -> float:
    ax, ay, aw, ah = box_a
    bx, by, bw, bh = box_b
    x0, y0 = max(ax, bx), max(ay, by)
    x1, y1 = min(ax + aw, bx + bw), min(ay + ah, by + bh)
    if x1 <= x0 or y1 <= y0:
        return 0.0
    inter = (x1 - x0) * (y1 - y0)
    return inter / (aw * ah + bw * bh - inter)


def _average_precision(flags: list[bool], n_gt: int) -> float:
    """All-point interpolated AP from score-ordered hit flags.

    Walks the precision/recall points right to left so each recall
    increment is weighted by the best precision achieved at that recall
    or any higher one.
    """
    if n_gt == 0:
        return 0.0
    tp = fp = 0
    points = []
    for hit in flags:
        if hit:
            tp += 1
        else:
            fp += 1
        points.append((tp / n_gt, tp / (tp + fp)))
    ap = 0.0
    envelope = 0.0
    for i in range(len(points) - 1, -1, -1):
        recall, precision = points[i]
        envelope = max(envelope, precision)
        prev_recall = points[i - 1][0] if i else 0.0
        ap += (recall - prev_recall) * envelope
    return ap


def map_at_iou(detections: dict[int, list[dict]], gts: dict[int, list[dict]],
               iou: float = 0.5) -> tuple[dict[int, float], float]:
    """Per-class AP and mAP with greedy per-image matching.

    ``detections`` maps image id to dicts with ``category_id``, ``score``,
    and ``bbox`` [x, y, w, h]; ``gts`` maps image id to dicts with
    ``category_id`` and ``bbox``. Detections are matched per image in
    descending score order to the highest-IoU unmatched ground truth of
    their class. Classes are averaged unweighted over those present in the
    ground truth.
    """
    classes = sorted({g["category_id"] for lst in gts.values() for g in lst})
    per_class: dict[int, float] = {}
    for cls in classes:
        scored: list[tuple[float, bool]] = []
        n_gt = 0
        for image_id, gt_list in gts.items():
            gt_boxes = [g["bbox"] for g in gt_list
                        if g["category_id"] == cls]
            n_gt += len(gt_boxes)
            dets = sorted((d for d in detections.get(image_id, [])
                           if d["category_id"] == cls),
                          key=lambda d: -d["score"])
            taken = [False] * len(gt_boxes)
            for det in dets:
                best, best_iou = -1, iou
                for j, gb in enumerate(gt_boxes):
                    if taken[j]:
                        continue
                    v = _iou(det["bbox"], gb)
                    if v >= best_iou:
                        best, best_iou = j, v
                if best >= 0:
                    taken[best] = True
                    scored.append((det["score"], True))
                else:
                    scored.append((det["score"], False))
        scored.sort(key=lambda sv: -sv[0])
        per_class[cls] = _average_precision([hit for _, hit in scored], n_gt)
    mean = float(np.mean(list(per_class.values()))) if per_class else 0.0
    return per_class, mean


# ---------------------------------------------------------------------------
# dataset-level evaluation


def make_image_id(scene_id: int, im_id: int) -> int:
    """Stable scalar key for (scene, image): scene * 10000 + image."""
    if not 0 <= im_id < 10000:
        raise ValueError("image index must be in [0, 10000)")
    return scene_id * 10000 + im_id


def split_image_id(image_id: int) -> tuple[int, int]:
    return image_id // 10000, image_id % 10000


@dataclass(frozen=True)
class PoseEstimate:
    """One estimated instance for one image."""

    image_id: int
    category_id: int
    pose: Pose
    score: float


def write_estimates(path, estimates: list[PoseEstimate]) -> None:
    """Serialize estimates as JSON lines (R row-major, t in mm)."""
    lines = []
    for e in estimates:
        lines.append(json.dumps({
            "image_id": e.image_id,
            "category_id": e.category_id,
            "score": round(float(e.score), 9),
            "R": [round(float(v), 12) for v in e.pose.rotation.ravel()],
            "t": [round(float(v), 6) for v in e.pose.translation],
        }, sort_keys=True))
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""),
                          encoding="utf-8")


def read_estimates(path) -> list[PoseEstimate]:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        raw = json.loads(line)
        out.append(PoseEstimate(
            image_id=int(raw["image_id"]),
            category_id=int(raw["category_id"]),
            pose=Pose(np.array(raw["R"], dtype=np.float64).reshape(3, 3),
                      np.array(raw["t"], dtype=np.float64)),
            score=float(raw["score"]),
        ))
    return out


def _projected_bbox(mesh: TriMesh, pose: Pose,
                    cam: CameraIntrinsics) -> list[float]:
    """Axis-aligned box around the projected mesh vertices, [x, y, w, h]."""
    uv = project(pose.apply(mesh.vertices), cam)
    x0, y0 = uv.min(axis=0)
    x1, y1 = uv.max(axis=0)
    return [float(x0), float(y0), float(x1 - x0), float(y1 - y0)]


def evaluate_poses(estimates: list[PoseEstimate], dataset_root,
                   models: dict[int, tuple[TriMesh, SymmetrySet]],
                   config: EvalConfig = EvalConfig(),
                   split: str = "train") -> EvalReport:
    """Score estimates against every ground-truth instance of a dataset.

    Estimates are matched per image and class in descending score order,
    each taking the unmatched ground-truth instance with the smallest
    projected error. Unmatched ground truths count as misses (infinite
    error at every threshold). Detection boxes for the mAP side are the
    projected model bounds under each pose, derived identically for
    estimates and ground truth.
    """
    from . import scenegen

    cam = scenegen.read_camera(dataset_root)
    width = cam.width

    by_image: dict[int, list[PoseEstimate]] = {}
    for est in estimates:
        by_image.setdefault(est.image_id, []).append(est)

    errors: dict[str, list] = {"vsd": [], "mssd": [], "mspd": []}
    per_object: dict[str, dict[int, list]] = {"vsd": {}, "mssd": {}, "mspd": {}}
    det_boxes: dict[int, list[dict]] = {}
    gt_boxes: dict[int, list[dict]] = {}
    confusion: dict[int, dict[int, int]] = {}

    for scene_id in scenegen.scene_ids(dataset_root, split):
        gt_all = scenegen.read_scene_gt(dataset_root, scene_id, split)
        for im_id, gt_entries in gt_all.items():
            image_id = make_image_id(scene_id, im_id)
            scene_depth = scenegen.read_depth(dataset_root, scene_id, im_id,
                                              split)
            ests = sorted(by_image.get(image_id, []), key=lambda e: -e.score)

            det_boxes[image_id] = [{
                "category_id": e.category_id,
                "score": e.score,
                "bbox": _projected_bbox(models[e.category_id][0], e.pose, cam),
            } for e in ests if e.category_id in models]
            gt_boxes[image_id] = [{
                "category_id": cat,
                "bbox": _projected_bbox(models[cat][0], pose, cam),
            } for cat, pose in gt_entries]

            taken = [False] * len(gt_entries)
            matches: list[tuple[int, PoseEstimate]] = []
            for est in ests:
                best_j, best_err = -1, math.inf
                for j, (cat, gt_pose) in enumerate(gt_entries):
                    if taken[j] or cat != est.category_id:
                        continue
                    try:
                        err = e_mspd(est.pose, gt_pose,
                                     models[cat][0], models[cat][1], cam)
                    except Exception:
                        continue
                    if err < best_err:
                        best_j, best_err = j, err
                if best_j >= 0:
                    taken[best_j] = True
                    matches.append((best_j, est))

            matched = {j: est for j, est in matches}
            for j, (cat, gt_pose) in enumerate(gt_entries):
                mesh, syms = models[cat]
                diameter = mesh.diameter
                if j in matched:
                    est = matched[j]
                    tau_mm = config.vsd_tau * diameter
                    vals = {
                        "mssd": e_mssd(est.pose, gt_pose, mesh, syms),
                        "mspd": e_mspd(est.pose, gt_pose, mesh, syms, cam),
                        "vsd": e_vsd(est.pose, gt_pose, mesh, scene_depth,
                                     cam, tau_mm, config.visibility_delta),
                    }
                else:
                    vals = {"mssd": math.inf, "mspd": math.inf,
                            "vsd": math.inf}
                for kind, err in vals.items():
                    row = (err, diameter, width)
                    errors[kind].append(row)
                    per_object[kind].setdefault(cat, []).append(row)

            # class confusion over class-agnostic greedy box matches
            free = list(range(len(gt_entries)))
            for det in sorted(det_boxes[image_id], key=lambda d: -d["score"]):
                best_j, best_iou = -1, config.map_iou
                for j in free:
                    v = _iou(det["bbox"], gt_boxes[image_id][j]["bbox"])
                    if v >= best_iou:
                        best_j, best_iou = j, v
                if best_j >= 0:
                    free.remove(best_j)
                    gt_cat = gt_boxes[image_id][best_j]["category_id"]
                    confusion.setdefault(gt_cat, {})
                    confusion[gt_cat][det["category_id"]] = \
                        confusion[gt_cat].get(det["category_id"], 0) + 1

    report = bop19_average_recall(errors, per_object, config)
    report.per_object_ap, report.map50 = map_at_iou(det_boxes, gt_boxes,
                                                    config.map_iou)
    report.confusion = confusion
    return report


# ---------------------------------------------------------------------------
# report rendering


def report_to_json(report: EvalReport) -> dict:
    return {
        "thresholds": report.thresholds,
        "recall": report.recall,
        "per_object_recall": {
            k: {str(cat): v for cat, v in table.items()}
            for k, table in report.per_object_recall.items()
        },
        "ar": report.ar,
        "ar_bop": report.ar_bop,
        "per_object_ap": {str(k): v for k, v in report.per_object_ap.items()},
        "map50": report.map50,
        "n_targets": report.n_targets,
        "confusion": {str(a): {str(b): n for b, n in row.items()}
                      for a, row in report.confusion.items()},
    }


def report_to_text(report: EvalReport) -> str:
    """Threshold-row table, highest threshold first, one column per metric."""
    lines = ["Pose Estimation Results",
             f"targets: {report.n_targets}",
             "",
             f"{'':10s} {'MSSD':>8s} {'MSPD':>8s} {'VSD':>8s}"]
    grid = report.thresholds["mssd"]
    for i in reversed(range(len(grid))):
        label = f"THR={int(round(grid[i] * 100)):02d}"
        lines.append(f"{label:10s} "
                     f"{report.recall['mssd'][i]:8.4f} "
                     f"{report.recall['mspd'][i]:8.4f} "
                     f"{report.recall['vsd'][i]:8.4f}")
    lines.append("")
    lines.append(f"{'AR':10s} "
                 f"{report.ar['mssd']:8.4f} "
                 f"{report.ar['mspd']:8.4f} "
                 f"{report.ar['vsd']:8.4f}")
    lines.append(f"BOP19 AVG RECALL: {report.ar_bop:.4f}")
    if report.per_object_ap:
        lines.append(f"mAP@{0.5:.2f}: {report.map50:.4f}")
    return "\n".join(lines) + "\n"
