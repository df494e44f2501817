import { describe, expect, it } from "vitest";

import { StreamClient, type StreamClientOptions } from "../src/client.js";
import { detection, framePayload, ManualClock, MockServer, resultFor } from "./helpers.js";

function makeClient(
  server: MockServer,
  clock: ManualClock,
  extra: Partial<StreamClientOptions> = {},
) {
  return new StreamClient({
    url: "ws://test.local/ws",
    socketFactory: server.factory,
    now: clock.now,
    setTimer: clock.setTimer,
    clearTimer: clock.clearTimer,
    ...extra,
  });
}

/** Connect and complete the open handshake. */
function openClient(server: MockServer, clock: ManualClock, extra: Partial<StreamClientOptions> = {}) {
  const client = makeClient(server, clock, extra);
  client.connect();
  server.current.accept();
  return client;
}

describe("handshake", () => {
  it("sends hello first and reports the connection open", () => {
    const server = new MockServer();
    const clock = new ManualClock();
    const client = makeClient(server, clock);

    client.connect();
    expect(client.getState().connection).toBe("connecting");
    expect(server.current.sent).toEqual([]);

    server.current.accept();
    expect(client.getState().connection).toBe("open");
    expect(JSON.parse(server.current.sent[0] ?? "")).toEqual({ type: "hello", version: 1 });
  });

  it("refuses frames until the socket is open", () => {
    const server = new MockServer();
    const clock = new ManualClock();
    const client = makeClient(server, clock);
    expect(client.sendFrame(framePayload())).toBe(false);
    client.connect();
    expect(client.sendFrame(framePayload())).toBe(false);
    server.current.accept();
    expect(client.sendFrame(framePayload())).toBe(true);
  });
});

describe("frame sending", () => {
  it("emits schema-complete frames with strictly increasing ids", () => {
    const server = new MockServer();
    const clock = new ManualClock();
    const client = openClient(server, clock);

    clock.advance(100);
    client.sendFrame(framePayload(320, 240));
    clock.advance(100);
    client.sendFrame(framePayload(320, 240));

    const frames = server.framesReceived();
    expect(frames.map((f) => f.frame_id)).toEqual([1, 2]);
    expect(frames[0]).toMatchObject({
      type: "frame",
      width: 320,
      height: 240,
      encoding: "png-base64",
      data: "cGl4ZWxz",
      intrinsics: { fx: 600, fy: 600, cx: 320, cy: 240 },
    });
    expect(frames[0]?.timestamp_ms).toBe(100);
    expect(client.getState().framesSent).toBe(2);
  });

  it("enforces the client-side fps cap", () => {
    const server = new MockServer();
    const clock = new ManualClock();
    const client = openClient(server, clock, { fpsCap: 10 });

    clock.advance(10);
    expect(client.sendFrame(framePayload())).toBe(true);
    expect(client.sendFrame(framePayload())).toBe(false);
    clock.advance(50);
    expect(client.sendFrame(framePayload())).toBe(false);
    clock.advance(50);
    expect(client.sendFrame(framePayload())).toBe(true);
    expect(server.framesReceived()).toHaveLength(2);
  });

  it("rejects a non-positive fps cap", () => {
    const server = new MockServer();
    const clock = new ManualClock();
    expect(() => makeClient(server, clock, { fpsCap: 0 })).toThrow(/fpsCap/);
  });
});

describe("results", () => {
  it("renders scripted detections and measures the round trip", () => {
    const server = new MockServer();
    const clock = new ManualClock();
    const client = openClient(server, clock);

    clock.advance(100);
    client.sendFrame(framePayload());
    clock.advance(80);
    server.current.push(resultFor(1, [detection(6)]));

    const state = client.getState();
    expect(state.latest?.frame_id).toBe(1);
    expect(state.latest?.detections[0]?.category_id).toBe(6);
    expect(state.latencyMs).toBe(80);
    expect(state.resultsRendered).toBe(1);
  });

  it("discards an out-of-order result and keeps the newer overlay", () => {
    const server = new MockServer();
    const clock = new ManualClock();
    const client = openClient(server, clock);

    clock.advance(200);
    client.sendFrame(framePayload());
    clock.advance(200);
    client.sendFrame(framePayload());
    server.current.push(resultFor(2, [detection(3)]));
    server.current.push(resultFor(1, [detection(11)]));

    const state = client.getState();
    expect(state.latest?.frame_id).toBe(2);
    expect(state.latest?.detections[0]?.category_id).toBe(3);
    expect(state.staleDiscarded).toBe(1);
  });

  it("infers server drops from skipped frame ids", () => {
    const server = new MockServer();
    const clock = new ManualClock();
    const client = openClient(server, clock);

    for (let i = 0; i < 3; i += 1) {
      clock.advance(150);
      client.sendFrame(framePayload());
    }
    server.current.push(resultFor(3, []));

    const state = client.getState();
    expect(state.framesDropped).toBe(2);
    expect(state.latest?.frame_id).toBe(3);
  });

  it("surfaces server errors in the log", () => {
    const server = new MockServer();
    const clock = new ManualClock();
    const client = openClient(server, clock);

    server.current.push({ type: "error", frame_id: 7, code: "frame-order", message: "stale" });
    expect(client.getState().log).toContain("server error (frame 7): frame-order: stale");
    expect(client.getState().connection).toBe("open");
  });

  it("logs unreadable server messages and keeps going", () => {
    const server = new MockServer();
    const clock = new ManualClock();
    const client = openClient(server, clock);

    server.current.pushRaw("{broken");
    server.current.pushRaw(new ArrayBuffer(4));
    expect(client.getState().log).toContain("unreadable server message discarded");
    expect(client.getState().connection).toBe("open");
  });
});

describe("reconnection", () => {
  it("retries after a dropped connection and keeps frame ids increasing", () => {
    const server = new MockServer();
    const clock = new ManualClock();
    const client = openClient(server, clock);

    clock.advance(500);
    client.sendFrame(framePayload());
    expect(server.framesReceived().map((f) => f.frame_id)).toEqual([1]);

    server.current.dropFromServer();
    expect(client.getState().connection).toBe("closed");
    expect(client.getState().log.at(-1)).toBe("disconnected, retrying in 500 ms");
    expect(server.sockets).toHaveLength(1);

    clock.advance(500);
    expect(server.sockets).toHaveLength(2);
    server.current.accept();
    expect(client.getState().connection).toBe("open");
    expect(JSON.parse(server.current.sent[0] ?? "")).toEqual({ type: "hello", version: 1 });

    clock.advance(500);
    client.sendFrame(framePayload());
    expect(server.framesReceived().map((f) => f.frame_id)).toEqual([1, 2]);
  });

  it("backs off exponentially and resets after a successful open", () => {
    const server = new MockServer();
    const clock = new ManualClock();
    const client = makeClient(server, clock);

    client.connect();
    server.current.dropFromServer();
    expect(client.getState().log.at(-1)).toBe("disconnected, retrying in 500 ms");

    clock.advance(500);
    server.current.dropFromServer();
    expect(client.getState().log.at(-1)).toBe("disconnected, retrying in 1000 ms");

    clock.advance(1000);
    server.current.dropFromServer();
    expect(client.getState().log.at(-1)).toBe("disconnected, retrying in 2000 ms");

    clock.advance(2000);
    server.current.accept();
    expect(client.getState().connection).toBe("open");

    server.current.dropFromServer();
    expect(client.getState().log.at(-1)).toBe("disconnected, retrying in 500 ms");
  });

  it("caps the backoff delay", () => {
    const server = new MockServer();
    const clock = new ManualClock();
    const client = makeClient(server, clock, { reconnectBaseMs: 100, reconnectMaxMs: 250 });

    client.connect();
    server.current.dropFromServer();
    clock.advance(100);
    server.current.dropFromServer();
    clock.advance(200);
    server.current.dropFromServer();
    expect(client.getState().log.at(-1)).toBe("disconnected, retrying in 250 ms");
  });

  it("stop() closes the socket and cancels the retry", () => {
    const server = new MockServer();
    const clock = new ManualClock();
    const client = openClient(server, clock);

    server.current.dropFromServer();
    expect(clock.pendingTimers()).toBe(1);
    client.stop();
    expect(clock.pendingTimers()).toBe(0);

    clock.advance(60_000);
    expect(server.sockets).toHaveLength(1);
    expect(client.getState().connection).toBe("closed");
  });

  it("stop() on a live connection does not trigger a reconnect", () => {
    const server = new MockServer();
    const clock = new ManualClock();
    const client = openClient(server, clock);

    client.stop();
    expect(server.current.closedByClient).toBe(true);
    clock.advance(60_000);
    expect(server.sockets).toHaveLength(1);
    expect(client.getState().connection).toBe("closed");
  });
});
