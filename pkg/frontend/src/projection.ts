// Pinhole projection of model wireframes. The server's static model export
// gives each class a set of 3D corner points plus an edge list; a detection
// supplies the rigid transform into camera frame, and the intrinsics map
// camera-frame millimeters to pixels.

import type { Detection, Intrinsics } from "./protocol.js";

export interface ModelEdges {
  /** Corner points in the model frame, millimeters. */
  corners: ReadonlyArray<ReadonlyArray<number>>;
  /** Index pairs into `corners`. */
  edges: ReadonlyArray<ReadonlyArray<number>>;
}

export type ModelTable = ReadonlyMap<number, ModelEdges>;

export type Point2 = readonly [number, number];
export type Segment = readonly [Point2, Point2];

const NEAR_Z = 1e-6;

export function applyPose(
  rotation: ReadonlyArray<number>,
  translation: ReadonlyArray<number>,
  point: ReadonlyArray<number>,
): [number, number, number] {
  const x = point[0] ?? 0;
  const y = point[1] ?? 0;
  const z = point[2] ?? 0;
  const r = (i: number) => rotation[i] ?? 0;
  return [
    r(0) * x + r(1) * y + r(2) * z + (translation[0] ?? 0),
    r(3) * x + r(4) * y + r(5) * z + (translation[1] ?? 0),
    r(6) * x + r(7) * y + r(8) * z + (translation[2] ?? 0),
  ];
}

/** Project a camera-frame point to pixels; null if it is behind the camera. */
export function projectPoint(
  pointCam: ReadonlyArray<number>,
  intr: Intrinsics,
): Point2 | null {
  const z = pointCam[2] ?? 0;
  if (z <= NEAR_Z) return null;
  const x = pointCam[0] ?? 0;
  const y = pointCam[1] ?? 0;
  return [(intr.fx * x) / z + intr.cx, (intr.fy * y) / z + intr.cy];
}

/**
 * Project the model's edge set through the detection pose. Edges with an
 * endpoint behind the camera are dropped rather than clipped; at the working
 * distances involved that only happens for degenerate poses.
 */
export function projectWireframe(
  det: Detection,
  model: ModelEdges,
  intr: Intrinsics,
): Segment[] {
  const projected = model.corners.map((c) =>
    projectPoint(applyPose(det.rotation, det.translation_mm, c), intr),
  );
  const segments: Segment[] = [];
  for (const edge of model.edges) {
    const a = projected[edge[0] ?? -1];
    const b = projected[edge[1] ?? -1];
    if (a && b) segments.push([a, b]);
  }
  return segments;
}

/**
 * Parse the server's models_edges.json payload ({"<class id>": {corners,
 * edges}}), skipping entries that do not look like geometry.
 */
export function parseModelTable(json: unknown): Map<number, ModelEdges> {
  const table = new Map<number, ModelEdges>();
  if (typeof json !== "object" || json === null) return table;
  for (const [key, value] of Object.entries(json)) {
    const categoryId = Number(key);
    if (!Number.isInteger(categoryId)) continue;
    if (typeof value !== "object" || value === null) continue;
    const entry = value as Record<string, unknown>;
    const corners = entry.corners;
    const edges = entry.edges;
    if (!Array.isArray(corners) || !Array.isArray(edges)) continue;
    const cornersOk = corners.every(
      (c) => Array.isArray(c) && c.length === 3 && c.every((v) => typeof v === "number"),
    );
    const edgesOk = edges.every(
      (e) =>
        Array.isArray(e) &&
        e.length === 2 &&
        e.every((i) => Number.isInteger(i) && i >= 0 && i < corners.length),
    );
    if (cornersOk && edgesOk) {
      table.set(categoryId, { corners, edges });
    }
  }
  return table;
}

/** HTTP URL of the model-edge export that pairs with a ws:// stream URL. */
export function modelsUrlFromWs(wsUrl: string): string {
  const u = new URL(wsUrl);
  u.protocol = u.protocol === "wss:" ? "https:" : "http:";
  u.pathname = "/models/models_edges.json";
  u.search = "";
  u.hash = "";
  return u.toString();
}
