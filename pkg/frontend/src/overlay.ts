// Overlay session state and the pure transitions that drive it. Network
// handlers never mutate in place; each event maps an old state to a new one,
// which keeps ordering rules (stale-result discard in particular) trivially
// testable without a socket or a DOM.

import type { Detection, ErrorMessage, ResultMessage } from "./protocol.js";

export type ConnectionStatus = "connecting" | "open" | "closed";

export const LOG_LIMIT = 50;

export interface OverlayState {
  connection: ConnectionStatus;
  /** Most recent result accepted for display, null before the first one. */
  latest: ResultMessage | null;
  /** Round-trip time of the latest accepted result, null until measured. */
  latencyMs: number | null;
  framesSent: number;
  resultsRendered: number;
  /** Results thrown away because a newer frame was already on screen. */
  staleDiscarded: number;
  /** Frames the server skipped under load, inferred from result ordering. */
  framesDropped: number;
  /** Most recent log lines; bounded to LOG_LIMIT entries. */
  log: readonly string[];
  /** Total lines ever logged, so consumers can tail `log` incrementally. */
  logTotal: number;
}

export function initialOverlayState(): OverlayState {
  return {
    connection: "closed",
    latest: null,
    latencyMs: null,
    framesSent: 0,
    resultsRendered: 0,
    staleDiscarded: 0,
    framesDropped: 0,
    log: [],
    logTotal: 0,
  };
}

function pushLog(state: OverlayState, line: string): OverlayState {
  const log = [...state.log, line];
  if (log.length > LOG_LIMIT) log.splice(0, log.length - LOG_LIMIT);
  return { ...state, log, logTotal: state.logTotal + 1 };
}

export function applyStatus(
  state: OverlayState,
  connection: ConnectionStatus,
  note?: string,
): OverlayState {
  const next = { ...state, connection };
  return note === undefined ? next : pushLog(next, note);
}

/**
 * Accept or discard one result. A result whose frame_id does not beat the
 * one already displayed is stale (the server answered an old frame after a
 * newer answer arrived, or a tester injected one out of order) and must not
 * reach the screen.
 */
export function applyResult(
  state: OverlayState,
  msg: ResultMessage,
  roundTripMs: number | null,
): OverlayState {
  if (state.latest !== null && msg.frame_id <= state.latest.frame_id) {
    return { ...state, staleDiscarded: state.staleDiscarded + 1 };
  }
  return {
    ...state,
    latest: msg,
    latencyMs: roundTripMs ?? state.latencyMs,
    resultsRendered: state.resultsRendered + 1,
  };
}

export function applyError(state: OverlayState, msg: ErrorMessage): OverlayState {
  const tag = msg.frame_id === null ? "" : ` (frame ${msg.frame_id})`;
  return pushLog(state, `server error${tag}: ${msg.code}: ${msg.message}`);
}

export function noteFrameSent(state: OverlayState): OverlayState {
  return { ...state, framesSent: state.framesSent + 1 };
}

export function noteDropped(state: OverlayState, count: number): OverlayState {
  return { ...state, framesDropped: state.framesDropped + count };
}

export function noteLog(state: OverlayState, line: string): OverlayState {
  return pushLog(state, line);
}

/** Detections at or above the score threshold, ready for drawing. */
export function visibleDetections(
  result: ResultMessage | null,
  minScore: number,
): Detection[] {
  if (result === null) return [];
  return result.detections.filter((d) => d.score >= minScore);
}
