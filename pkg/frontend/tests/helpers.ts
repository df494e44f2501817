// Shared test doubles: a manual clock with timers, a socket pair the tests
// control from the "server" side, and a canvas that records draw calls.

import type { SocketLike } from "../src/client.js";
import type { Detection, FrameMessage, ResultMessage } from "../src/protocol.js";
import type { OverlayCanvas } from "../src/render.js";

interface PendingTimer {
  id: number;
  at: number;
  fn: () => void;
}

export class ManualClock {
  t = 0;
  private timers: PendingTimer[] = [];
  private nextId = 1;

  now = (): number => this.t;

  setTimer = (fn: () => void, ms: number): unknown => {
    const id = this.nextId;
    this.nextId += 1;
    this.timers.push({ id, at: this.t + ms, fn });
    return id;
  };

  clearTimer = (handle: unknown): void => {
    this.timers = this.timers.filter((timer) => timer.id !== handle);
  };

  /** Advance the clock, firing due timers in order along the way. */
  advance(ms: number): void {
    const target = this.t + ms;
    for (;;) {
      const due = this.timers
        .filter((timer) => timer.at <= target)
        .sort((a, b) => a.at - b.at)[0];
      if (due === undefined) break;
      this.timers = this.timers.filter((timer) => timer.id !== due.id);
      this.t = due.at;
      due.fn();
    }
    this.t = target;
  }

  pendingTimers(): number {
    return this.timers.length;
  }
}

export class FakeSocket implements SocketLike {
  sent: string[] = [];
  closedByClient = false;
  onopen: (() => void) | null = null;
  onmessage: ((ev: { data: unknown }) => void) | null = null;
  onclose: (() => void) | null = null;
  onerror: (() => void) | null = null;

  constructor(
    readonly url: string,
    private readonly server: MockServer,
  ) {}

  send(data: string): void {
    this.sent.push(data);
    this.server.onClientSend(this, data);
  }

  close(): void {
    this.closedByClient = true;
    this.onclose?.();
  }

  // Server-side controls.
  accept(): void {
    this.onopen?.();
  }

  push(message: object): void {
    this.onmessage?.({ data: JSON.stringify(message) });
  }

  pushRaw(data: unknown): void {
    this.onmessage?.({ data });
  }

  dropFromServer(): void {
    this.onclose?.();
  }
}

/**
 * Scripted counterpart of the streaming server. Tests hand its `factory` to
 * the client, accept connections explicitly, and either push messages by
 * hand or install `respond` to answer each frame synchronously.
 */
export class MockServer {
  sockets: FakeSocket[] = [];
  received: Record<string, unknown>[] = [];
  /** When set, every valid frame gets this reply (null means stay silent). */
  respond: ((frame: FrameMessage) => object | null) | null = null;
  ackHello = true;

  factory = (url: string): SocketLike => {
    const sock = new FakeSocket(url, this);
    this.sockets.push(sock);
    return sock;
  };

  get current(): FakeSocket {
    const sock = this.sockets[this.sockets.length - 1];
    if (sock === undefined) throw new Error("no socket created yet");
    return sock;
  }

  framesReceived(): FrameMessage[] {
    return this.received.filter((m) => m.type === "frame") as unknown as FrameMessage[];
  }

  onClientSend(sock: FakeSocket, raw: string): void {
    const msg = JSON.parse(raw) as Record<string, unknown>;
    this.received.push(msg);
    if (msg.type === "hello" && this.ackHello) {
      sock.push({ type: "hello", version: 1 });
    } else if (msg.type === "frame" && this.respond !== null) {
      const reply = this.respond(msg as unknown as FrameMessage);
      if (reply !== null) sock.push(reply);
    }
  }
}

export function detection(categoryId: number, overrides: Partial<Detection> = {}): Detection {
  return {
    category_id: categoryId,
    score: 0.9,
    bbox: [10, 20, 30, 40],
    rotation: [1, 0, 0, 0, 1, 0, 0, 0, 1],
    translation_mm: [0, 0, 1000],
    ...overrides,
  };
}

export function resultFor(frameId: number, detections: Detection[]): ResultMessage {
  return {
    type: "result",
    frame_id: frameId,
    server_latency_ms: 12.5,
    detections,
  };
}

export const TEST_INTRINSICS = { fx: 600, fy: 600, cx: 320, cy: 240 };

export function framePayload(width = 640, height = 480) {
  return { width, height, intrinsics: TEST_INTRINSICS, data: "cGl4ZWxz" };
}

export class RecordingCanvas implements OverlayCanvas {
  strokeStyle: string | CanvasGradient | CanvasPattern = "";
  fillStyle: string | CanvasGradient | CanvasPattern = "";
  lineWidth = 0;
  font = "";
  ops: string[] = [];

  beginPath(): void {
    this.ops.push("beginPath");
  }

  moveTo(x: number, y: number): void {
    this.ops.push(`moveTo(${x.toFixed(1)},${y.toFixed(1)})`);
  }

  lineTo(x: number, y: number): void {
    this.ops.push(`lineTo(${x.toFixed(1)},${y.toFixed(1)})`);
  }

  stroke(): void {
    this.ops.push(`stroke:${String(this.strokeStyle)}`);
  }

  strokeRect(x: number, y: number, w: number, h: number): void {
    this.ops.push(`strokeRect(${x},${y},${w},${h}):${String(this.strokeStyle)}`);
  }

  fillText(text: string, x: number, y: number): void {
    this.ops.push(`fillText(${text})@${x.toFixed(1)},${y.toFixed(1)}`);
  }

  strokes(): string[] {
    return this.ops.filter((op) => op.startsWith("stroke"));
  }
}
