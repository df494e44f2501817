// Streaming client: owns the socket, the handshake, the client-side frame
// budget, and reconnection. All environment touchpoints (socket construction,
// clock, timers) are injectable so the whole state machine runs under a
// scripted mock server in tests.

import {
  FRAME_ENCODING,
  PROTOCOL_VERSION,
  parseServerMessage,
  type Intrinsics,
} from "./protocol.js";
import {
  applyError,
  applyResult,
  applyStatus,
  initialOverlayState,
  noteDropped,
  noteFrameSent,
  noteLog,
  type OverlayState,
} from "./overlay.js";

export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: (() => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: (() => void) | null;
  onerror: (() => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

export interface FramePayload {
  width: number;
  height: number;
  intrinsics: Intrinsics;
  /** Base64 PNG body, no data-URL prefix. */
  data: string;
}

export interface StreamClientOptions {
  url: string;
  /** Client-side send budget in frames per second. */
  fpsCap?: number;
  socketFactory?: SocketFactory;
  /** Millisecond clock; only differences are used. */
  now?: () => number;
  setTimer?: (fn: () => void, ms: number) => unknown;
  clearTimer?: (handle: unknown) => void;
  reconnectBaseMs?: number;
  reconnectMaxMs?: number;
  /** Called after every state transition with the new state. */
  onChange?: (state: OverlayState) => void;
}

export const DEFAULT_FPS_CAP = 10;
export const DEFAULT_RECONNECT_BASE_MS = 500;
export const DEFAULT_RECONNECT_MAX_MS = 8000;

function defaultNow(): number {
  return typeof performance !== "undefined" ? performance.now() : Date.now();
}

function defaultSocketFactory(url: string): SocketLike {
  const ctor = (globalThis as { WebSocket?: new (u: string) => unknown }).WebSocket;
  if (ctor === undefined) {
    throw new Error("no WebSocket implementation available; pass socketFactory");
  }
  return new ctor(url) as unknown as SocketLike;
}

export class StreamClient {
  private readonly url: string;
  private readonly fpsCap: number;
  private readonly factory: SocketFactory;
  private readonly now: () => number;
  private readonly setTimer: (fn: () => void, ms: number) => unknown;
  private readonly clearTimer: (handle: unknown) => void;
  private readonly reconnectBaseMs: number;
  private readonly reconnectMaxMs: number;
  private readonly onChange: (state: OverlayState) => void;

  private state: OverlayState = initialOverlayState();
  private sock: SocketLike | null = null;
  private nextFrameId = 1;
  private lastSentAt = -Infinity;
  /** frame_id -> send time, for round-trip latency and drop inference. */
  private pending = new Map<number, number>();
  private failedAttempts = 0;
  private reconnectHandle: unknown = null;
  private stopped = true;

  constructor(options: StreamClientOptions) {
    this.url = options.url;
    this.fpsCap = options.fpsCap ?? DEFAULT_FPS_CAP;
    if (!(this.fpsCap > 0)) {
      throw new Error(`fpsCap must be positive, got ${this.fpsCap}`);
    }
    this.factory = options.socketFactory ?? defaultSocketFactory;
    this.now = options.now ?? defaultNow;
    this.setTimer = options.setTimer ?? ((fn, ms) => setTimeout(fn, ms));
    this.clearTimer = options.clearTimer ?? ((h) => clearTimeout(h as number));
    this.reconnectBaseMs = options.reconnectBaseMs ?? DEFAULT_RECONNECT_BASE_MS;
    this.reconnectMaxMs = options.reconnectMaxMs ?? DEFAULT_RECONNECT_MAX_MS;
    this.onChange = options.onChange ?? (() => {});
  }

  getState(): OverlayState {
    return this.state;
  }

  connect(): void {
    if (this.sock !== null || this.reconnectHandle !== null) return;
    this.stopped = false;
    this.openSocket();
  }

  /** Close the socket and cancel any scheduled reconnect. */
  stop(): void {
    this.stopped = true;
    if (this.reconnectHandle !== null) {
      this.clearTimer(this.reconnectHandle);
      this.reconnectHandle = null;
    }
    const sock = this.sock;
    if (sock !== null) {
      this.sock = null;
      this.pending.clear();
      sock.onclose = null;
      sock.close();
    }
    this.setState(applyStatus(this.state, "closed"));
  }

  /**
   * Offer one frame for sending. Returns false without sending when the
   * connection is down or the frame arrives inside the fps budget's minimum
   * spacing; the caller just offers the next capture instead.
   */
  sendFrame(frame: FramePayload): boolean {
    if (this.sock === null || this.state.connection !== "open") return false;
    const now = this.now();
    if (now - this.lastSentAt < 1000 / this.fpsCap) return false;
    const frameId = this.nextFrameId;
    this.nextFrameId += 1;
    this.sock.send(
      JSON.stringify({
        type: "frame",
        frame_id: frameId,
        timestamp_ms: now,
        width: frame.width,
        height: frame.height,
        intrinsics: frame.intrinsics,
        encoding: FRAME_ENCODING,
        data: frame.data,
      }),
    );
    this.lastSentAt = now;
    this.pending.set(frameId, now);
    this.setState(noteFrameSent(this.state));
    return true;
  }

  private setState(next: OverlayState): void {
    this.state = next;
    this.onChange(next);
  }

  private openSocket(): void {
    this.setState(applyStatus(this.state, "connecting"));
    const sock = this.factory(this.url);
    this.sock = sock;
    sock.onopen = () => {
      if (this.sock !== sock) return;
      this.failedAttempts = 0;
      sock.send(JSON.stringify({ type: "hello", version: PROTOCOL_VERSION }));
      this.setState(applyStatus(this.state, "open"));
    };
    sock.onmessage = (ev) => {
      if (this.sock === sock && typeof ev.data === "string") {
        this.handleMessage(ev.data);
      }
    };
    sock.onclose = () => {
      if (this.sock === sock) this.handleClose();
    };
    sock.onerror = () => {
      // The close event carries the state transition; nothing to do here.
    };
  }

  private handleClose(): void {
    this.sock = null;
    this.pending.clear();
    if (this.stopped) {
      this.setState(applyStatus(this.state, "closed"));
      return;
    }
    const delay = Math.min(
      this.reconnectBaseMs * 2 ** this.failedAttempts,
      this.reconnectMaxMs,
    );
    this.failedAttempts += 1;
    this.setState(
      applyStatus(this.state, "closed", `disconnected, retrying in ${delay} ms`),
    );
    this.reconnectHandle = this.setTimer(() => {
      this.reconnectHandle = null;
      this.openSocket();
    }, delay);
  }

  private handleMessage(raw: string): void {
    const msg = parseServerMessage(raw);
    if (msg === null) {
      this.setState(noteLog(this.state, "unreadable server message discarded"));
      return;
    }
    if (msg.type === "hello") return;
    if (msg.type === "error") {
      this.setState(applyError(this.state, msg));
      return;
    }
    const sentAt = this.pending.get(msg.frame_id);
    let roundTrip: number | null = null;
    if (sentAt !== undefined) {
      roundTrip = this.now() - sentAt;
      this.pending.delete(msg.frame_id);
    }
    // Older frames still pending when a newer answer lands were dropped by
    // the server's latest-wins queue; it never answers them.
    let dropped = 0;
    for (const id of this.pending.keys()) {
      if (id < msg.frame_id) {
        this.pending.delete(id);
        dropped += 1;
      }
    }
    let next = this.state;
    if (dropped > 0) next = noteDropped(next, dropped);
    this.setState(applyResult(next, msg, roundTrip));
  }
}
