// Overlay drawing. The context parameter is the structural subset of
// CanvasRenderingContext2D the renderer touches, so tests can record draw
// calls with a plain object and the browser passes the real context.

import { classColor } from "./palette.js";
import { visibleDetections } from "./overlay.js";
import { hasBbox, type Detection, type Intrinsics, type ResultMessage } from "./protocol.js";
import { projectWireframe, type ModelTable } from "./projection.js";

export type OverlayMode = "bbox" | "wireframe";

export interface OverlayCanvas {
  strokeStyle: string | CanvasGradient | CanvasPattern;
  fillStyle: string | CanvasGradient | CanvasPattern;
  lineWidth: number;
  font: string;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  stroke(): void;
  strokeRect(x: number, y: number, w: number, h: number): void;
  fillText(text: string, x: number, y: number): void;
}

export interface RenderOptions {
  mode: OverlayMode;
  /** Detections scoring below this are not drawn. */
  minScore?: number;
  /** Model geometry for wireframe mode, keyed by class id. */
  models?: ModelTable | null;
  intrinsics?: Intrinsics | null;
  /** Receives one line per degraded detection (e.g. bbox fallback). */
  warn?: (message: string) => void;
}

function drawBbox(ctx: OverlayCanvas, det: Detection): void {
  if (!hasBbox(det)) return;
  const [x, y, w, h] = det.bbox;
  ctx.strokeRect(x, y, w, h);
}

function drawLabel(ctx: OverlayCanvas, det: Detection, at: readonly [number, number]): void {
  ctx.fillText(`${det.category_id} ${det.score.toFixed(2)}`, at[0], at[1] - 4);
}

/**
 * Draw one result's detections in class colors. Bbox mode strokes labeled
 * boxes; wireframe mode projects the class's model edges through the
 * detection pose and falls back to the box (with a warning) when the model
 * geometry or the intrinsics are missing.
 */
export function renderOverlay(
  ctx: OverlayCanvas,
  result: ResultMessage | null,
  opts: RenderOptions,
): void {
  const warn = opts.warn ?? (() => {});
  for (const det of visibleDetections(result, opts.minScore ?? 0)) {
    const color = classColor(det.category_id);
    ctx.strokeStyle = color;
    ctx.fillStyle = color;
    ctx.lineWidth = 2;
    ctx.font = "12px monospace";

    let labelAt: readonly [number, number] | null = hasBbox(det)
      ? [det.bbox[0], det.bbox[1]]
      : null;
    let drawn = false;
    if (opts.mode === "wireframe") {
      const model = opts.models?.get(det.category_id);
      if (model === undefined || !opts.intrinsics) {
        warn(`class ${det.category_id}: no model geometry, falling back to bbox`);
      } else {
        const segments = projectWireframe(det, model, opts.intrinsics);
        for (const [a, b] of segments) {
          ctx.beginPath();
          ctx.moveTo(a[0], a[1]);
          ctx.lineTo(b[0], b[1]);
          ctx.stroke();
        }
        drawn = segments.length > 0;
        if (drawn && labelAt === null) labelAt = segments[0]?.[0] ?? null;
      }
    }
    if (!drawn) drawBbox(ctx, det);
    if (labelAt !== null) drawLabel(ctx, det, labelAt);
  }
}
