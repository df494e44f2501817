import { describe, expect, it } from "vitest";

import { hasBbox, parseServerMessage } from "../src/protocol.js";
import { detection, resultFor } from "./helpers.js";

describe("parseServerMessage", () => {
  it("round-trips a hello ack", () => {
    expect(parseServerMessage('{"type":"hello","version":1}')).toEqual({
      type: "hello",
      version: 1,
    });
  });

  it("round-trips a result with detections", () => {
    const msg = resultFor(7, [detection(3)]);
    const parsed = parseServerMessage(JSON.stringify(msg));
    expect(parsed).toEqual(msg);
  });

  it("round-trips an empty result", () => {
    const parsed = parseServerMessage(
      '{"type":"result","frame_id":1,"server_latency_ms":4.5,"detections":[]}',
    );
    expect(parsed).toEqual({
      type: "result",
      frame_id: 1,
      server_latency_ms: 4.5,
      detections: [],
    });
  });

  it("round-trips errors with and without a frame id", () => {
    expect(
      parseServerMessage('{"type":"error","frame_id":9,"code":"frame-order","message":"old"}'),
    ).toEqual({ type: "error", frame_id: 9, code: "frame-order", message: "old" });
    expect(
      parseServerMessage('{"type":"error","frame_id":null,"code":"malformed","message":"bad"}'),
    ).toEqual({ type: "error", frame_id: null, code: "malformed", message: "bad" });
  });

  it.each([
    ["not json", "{nope"],
    ["a bare number", "42"],
    ["a string", '"hello"'],
    ["null", "null"],
    ["unknown type", '{"type":"telemetry"}'],
    ["hello without version", '{"type":"hello"}'],
    ["result without detections", '{"type":"result","frame_id":1,"server_latency_ms":2}'],
    ["result with non-numeric frame id", '{"type":"result","frame_id":"1","server_latency_ms":2,"detections":[]}'],
    ["error without code", '{"type":"error","frame_id":null,"message":"x"}'],
  ])("rejects %s", (_label, raw) => {
    expect(parseServerMessage(raw)).toBeNull();
  });

  it("rejects detections with the wrong shapes", () => {
    const base = resultFor(1, [detection(1)]);
    const broken = [
      { ...detection(1), rotation: [1, 0, 0, 0, 1, 0, 0, 0] },
      { ...detection(1), translation_mm: [0, 0] },
      { ...detection(1), bbox: [1, 2, 3] },
      { ...detection(1), score: "high" },
    ];
    for (const det of broken) {
      const raw = JSON.stringify({ ...base, detections: [det] });
      expect(parseServerMessage(raw)).toBeNull();
    }
  });
});

describe("hasBbox", () => {
  it("treats the all-minus-one sentinel as absent", () => {
    expect(hasBbox(detection(1, { bbox: [-1, -1, -1, -1] }))).toBe(false);
    expect(hasBbox(detection(1))).toBe(true);
  });
});
