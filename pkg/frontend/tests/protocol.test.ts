import { describe, expect, it } from "vitest";

import {
  ProtocolError,
  abort,
  encodeCommand,
  parseFrame,
  parseLines,
  setDesired,
  startSession,
  submitSuds,
} from "../src/protocol.js";

const SNAPSHOT = {
  v: 1,
  type: "snapshot",
  session: "s0001",
  t: 152,
  status: "anxious",
  phase: "anxious",
  config: [1, 2, 0, 1, 1, 2],
  estimate: 4,
  desired: 3,
  reward: 0.8825,
  action: "closeness+",
  method: "rl",
  safety: { terminal: false, outcome: "running" },
  eda: [
    [151.875, 3.2041],
    [152.0, 3.2188],
  ],
};

describe("parseFrame", () => {
  it("accepts a full snapshot", () => {
    const frame = parseFrame(JSON.stringify(SNAPSHOT));
    expect(frame.type).toBe("snapshot");
    if (frame.type !== "snapshot") return;
    expect(frame.session).toBe("s0001");
    expect(frame.config).toEqual([1, 2, 0, 1, 1, 2]);
    expect(frame.eda).toHaveLength(2);
    expect(frame.safety.terminal).toBe(false);
  });

  it("accepts relax-phase snapshots with null telemetry", () => {
    const frame = parseFrame(
      JSON.stringify({
        ...SNAPSHOT,
        phase: "relax",
        status: "relaxing",
        config: null,
        estimate: null,
        desired: null,
        reward: null,
        action: null,
        method: null,
      }),
    );
    if (frame.type !== "snapshot") throw new Error("expected snapshot");
    expect(frame.config).toBeNull();
    expect(frame.estimate).toBeNull();
  });

  it("accepts acks and error frames", () => {
    expect(parseFrame('{"v":1,"type":"ack","command":"abort","session":"s0001"}')).toEqual({
      v: 1,
      type: "ack",
      command: "abort",
      session: "s0001",
    });
    const err = parseFrame('{"v":1,"type":"error","error":"unknown session"}');
    expect(err.type).toBe("error");
  });

  it.each([
    ["not json at all", "{{{"],
    ["wrong version", JSON.stringify({ ...SNAPSHOT, v: 2 })],
    ["unknown type", '{"v":1,"type":"frobnicate"}'],
    ["config wrong length", JSON.stringify({ ...SNAPSHOT, config: [1, 2, 3] })],
    ["config value out of cardinality", JSON.stringify({ ...SNAPSHOT, config: [1, 2, 0, 1, 2, 2] })],
    ["estimate outside 0..10", JSON.stringify({ ...SNAPSHOT, estimate: 11 })],
    ["missing safety block", JSON.stringify({ ...SNAPSHOT, safety: null })],
    ["bad eda sample", JSON.stringify({ ...SNAPSHOT, eda: [[1]] })],
  ])("rejects %s", (_label, line) => {
    expect(() => parseFrame(line)).toThrow(ProtocolError);
  });
});

describe("parseLines", () => {
  it("splits line-delimited messages and skips blank lines", () => {
    const text =
      JSON.stringify(SNAPSHOT) + "\n\n" + '{"v":1,"type":"ack","command":"pause","session":"s0001"}\n';
    const frames = parseLines(text);
    expect(frames.map((f) => f.type)).toEqual(["snapshot", "ack"]);
  });
});

describe("command builders", () => {
  it("produce v1 command frames, one JSON document per line", () => {
    const line = encodeCommand(setDesired("s0002", 5));
    expect(line.endsWith("\n")).toBe(true);
    expect(JSON.parse(line)).toEqual({ v: 1, type: "command", command: "set_desired", session: "s0002", level: 5 });
    expect(JSON.parse(encodeCommand(abort("s0002"))).command).toBe("abort");
    expect(JSON.parse(encodeCommand(startSession({ source: { persona: 3 }, pace_s: 0.5 })))).toMatchObject({
      command: "start_session",
      source: { persona: 3 },
    });
  });

  it("reject out-of-range levels before anything hits the wire", () => {
    expect(() => setDesired("s1", 11)).toThrow(ProtocolError);
    expect(() => setDesired("s1", 2.5)).toThrow(ProtocolError);
    expect(() => submitSuds("s1", 101)).toThrow(ProtocolError);
    expect(() => submitSuds("s1", -1)).toThrow(ProtocolError);
  });
});
