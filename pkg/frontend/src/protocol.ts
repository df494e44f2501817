// Wire schema spoken by the pose streaming server. Every message is a JSON
// object with a `type` field; field names here are normative on both ends.

export const PROTOCOL_VERSION = 1;
export const FRAME_ENCODING = "png-base64";

export interface Intrinsics {
  fx: number;
  fy: number;
  cx: number;
  cy: number;
}

export interface HelloMessage {
  type: "hello";
  version: number;
}

export interface FrameMessage {
  type: "frame";
  frame_id: number;
  timestamp_ms: number;
  width: number;
  height: number;
  intrinsics: Intrinsics;
  encoding: string;
  data: string;
}

export interface Detection {
  category_id: number;
  score: number;
  /** [x, y, w, h] in pixels; all four are -1 when the estimator gave none. */
  bbox: [number, number, number, number];
  /** Row-major 3x3 rotation, model frame to camera frame. */
  rotation: number[];
  translation_mm: [number, number, number];
}

export interface ResultMessage {
  type: "result";
  frame_id: number;
  server_latency_ms: number;
  detections: Detection[];
}

export interface ErrorMessage {
  type: "error";
  frame_id: number | null;
  code: string;
  message: string;
}

export type ServerMessage = HelloMessage | ResultMessage | ErrorMessage;

function isNum(v: unknown): v is number {
  return typeof v === "number" && Number.isFinite(v);
}

function isNumArray(v: unknown, length: number): v is number[] {
  return Array.isArray(v) && v.length === length && v.every(isNum);
}

function isIntrinsics(v: unknown): v is Intrinsics {
  if (typeof v !== "object" || v === null) return false;
  const o = v as Record<string, unknown>;
  return isNum(o.fx) && isNum(o.fy) && isNum(o.cx) && isNum(o.cy);
}

function isDetection(v: unknown): v is Detection {
  if (typeof v !== "object" || v === null) return false;
  const o = v as Record<string, unknown>;
  return (
    isNum(o.category_id) &&
    isNum(o.score) &&
    isNumArray(o.bbox, 4) &&
    isNumArray(o.rotation, 9) &&
    isNumArray(o.translation_mm, 3)
  );
}

/** True when the detection carries a real box rather than the -1 sentinel. */
export function hasBbox(det: Detection): boolean {
  return !det.bbox.every((v) => v === -1);
}

/**
 * Parse one server-to-client message. Returns null for anything that is not
 * valid JSON or does not match the schema; the caller decides whether that
 * is worth logging.
 */
export function parseServerMessage(raw: string): ServerMessage | null {
  let obj: unknown;
  try {
    obj = JSON.parse(raw);
  } catch {
    return null;
  }
  if (typeof obj !== "object" || obj === null) return null;
  const o = obj as Record<string, unknown>;
  switch (o.type) {
    case "hello":
      return isNum(o.version) ? { type: "hello", version: o.version } : null;
    case "result": {
      if (!isNum(o.frame_id) || !isNum(o.server_latency_ms)) return null;
      if (!Array.isArray(o.detections) || !o.detections.every(isDetection)) {
        return null;
      }
      return {
        type: "result",
        frame_id: o.frame_id,
        server_latency_ms: o.server_latency_ms,
        detections: o.detections,
      };
    }
    case "error": {
      const frameId = o.frame_id;
      if (frameId !== null && !isNum(frameId)) return null;
      if (typeof o.code !== "string" || typeof o.message !== "string") {
        return null;
      }
      return {
        type: "error",
        frame_id: frameId,
        code: o.code,
        message: o.message,
      };
    }
    default:
      return null;
  }
}
