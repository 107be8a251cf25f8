// Wire protocol v1: line-delimited JSON text frames, field names fixed by the
// service. The console never invents numbers; everything rendered comes out of
// a parsed Snapshot.

export const PROTOCOL_VERSION = 1;

export const ATTRIBUTE_NAMES = [
  "locomotion",
  "movement",
  "closeness",
  "largeness",
  "hairiness",
  "color",
] as const;

export const ATTRIBUTE_CARDINALITIES = [3, 3, 3, 3, 2, 3] as const;

export type SessionStatus = "idle" | "relaxing" | "anxious" | "terminated" | "completed";
export type Method = "rl" | "rules";

export interface Snapshot {
  v: number;
  type: "snapshot";
  session: string;
  t: number;
  status: SessionStatus;
  phase: "relax" | "anxious" | null;
  config: number[] | null;
  estimate: number | null;
  desired: number | null;
  reward: number | null;
  action: string | null;
  method: Method | null;
  safety: { terminal: boolean; outcome: string };
  eda: [number, number][];
}

export interface Ack {
  v: number;
  type: "ack";
  command: string;
  session: string | null;
}

export interface ErrorFrame {
  v: number;
  type: "error";
  error: string;
  session?: string | null;
}

export type ServerFrame = Snapshot | Ack | ErrorFrame;

export class ProtocolError extends Error {}

function fail(reason: string): never {
  throw new ProtocolError(reason);
}

function isFiniteNumber(x: unknown): x is number {
  return typeof x === "number" && Number.isFinite(x);
}

const STATUSES = new Set(["idle", "relaxing", "anxious", "terminated", "completed"]);

/** Parse one server frame, rejecting anything that is not valid v1 traffic. */
export function parseFrame(line: string): ServerFrame {
  let raw: unknown;
  try {
    raw = JSON.parse(line);
  } catch {
    fail(`frame is not JSON: ${line.slice(0, 80)}`);
  }
  if (typeof raw !== "object" || raw === null || Array.isArray(raw)) fail("frame is not an object");
  const frame = raw as Record<string, unknown>;
  if (frame.v !== PROTOCOL_VERSION) fail(`unsupported protocol version ${frame.v}`);
  switch (frame.type) {
    case "snapshot":
      return parseSnapshot(frame);
    case "ack":
      if (typeof frame.command !== "string") fail("ack without command");
      return { v: PROTOCOL_VERSION, type: "ack", command: frame.command, session: asOptionalString(frame.session) };
    case "error":
      if (typeof frame.error !== "string") fail("error frame without message");
      return { v: PROTOCOL_VERSION, type: "error", error: frame.error, session: asOptionalString(frame.session) };
    default:
      fail(`unknown frame type ${String(frame.type)}`);
  }
}

/** Split a text message into frames; the service sends one JSON document per line. */
export function parseLines(text: string): ServerFrame[] {
  return text
    .split("\n")
    .map((l) => l.trim())
    .filter((l) => l.length > 0)
    .map(parseFrame);
}

function asOptionalString(x: unknown): string | null {
  if (x === undefined || x === null) return null;
  if (typeof x !== "string") fail("expected a string session id");
  return x;
}

function asLevel(x: unknown, field: string): number | null {
  if (x === null) return null;
  if (!isFiniteNumber(x) || !Number.isInteger(x) || x < 0 || x > 10) fail(`${field} outside 0..10`);
  return x;
}

function parseSnapshot(frame: Record<string, unknown>): Snapshot {
  if (typeof frame.session !== "string") fail("snapshot without session id");
  if (!isFiniteNumber(frame.t)) fail("snapshot without time");
  if (!STATUSES.has(frame.status as string)) fail(`bad status ${String(frame.status)}`);
  if (frame.phase !== null && frame.phase !== "relax" && frame.phase !== "anxious") {
    fail(`bad phase ${String(frame.phase)}`);
  }
  let config: number[] | null = null;
  if (frame.config !== null) {
    if (!Array.isArray(frame.config) || frame.config.length !== ATTRIBUTE_NAMES.length) {
      fail("config is not a 6-attribute array");
    }
    config = frame.config.map((v, i) => {
      if (!Number.isInteger(v) || v < 0 || v >= ATTRIBUTE_CARDINALITIES[i]) {
        fail(`config[${i}] out of range: ${v}`);
      }
      return v as number;
    });
  }
  const safety = frame.safety as Record<string, unknown> | null;
  if (typeof safety !== "object" || safety === null || typeof safety.terminal !== "boolean") {
    fail("snapshot without safety block");
  }
  if (!Array.isArray(frame.eda)) fail("snapshot without eda samples");
  const eda = frame.eda.map((pair): [number, number] => {
    if (!Array.isArray(pair) || pair.length !== 2 || !isFiniteNumber(pair[0]) || !isFiniteNumber(pair[1])) {
      fail("bad eda sample");
    }
    return [pair[0], pair[1]];
  });
  if (frame.reward !== null && !isFiniteNumber(frame.reward)) fail("bad reward");
  if (frame.method !== null && frame.method !== "rl" && frame.method !== "rules") fail("bad method tag");
  return {
    v: PROTOCOL_VERSION,
    type: "snapshot",
    session: frame.session,
    t: frame.t,
    status: frame.status as SessionStatus,
    phase: frame.phase,
    config,
    estimate: asLevel(frame.estimate, "estimate"),
    desired: asLevel(frame.desired, "desired"),
    reward: frame.reward,
    action: frame.action === null ? null : String(frame.action),
    method: frame.method,
    safety: { terminal: safety.terminal, outcome: String(safety.outcome) },
    eda,
  };
}

// -- outbound commands -------------------------------------------------------

export interface Command {
  v: number;
  type: "command";
  command: string;
  [key: string]: unknown;
}

function command(name: string, fields: Record<string, unknown> = {}): Command {
  return { v: PROTOCOL_VERSION, type: "command", command: name, ...fields };
}

export interface StartSessionSpec {
  source?: { persona: number } | Record<string, unknown>;
  manual?: boolean;
  first_adapter?: Method;
  plan?: unknown;
  seed?: number;
  pace_s?: number;
}

export function startSession(spec: StartSessionSpec): Command {
  return command("start_session", { ...spec });
}

export function setDesired(session: string, level: number): Command {
  if (!Number.isInteger(level) || level < 0 || level > 10) {
    throw new ProtocolError(`desired level ${level} outside 0..10`);
  }
  return command("set_desired", { session, level });
}

export function submitSuds(session: string, value: number): Command {
  if (!Number.isInteger(value) || value < 0 || value > 100) {
    throw new ProtocolError(`SUDs value ${value} outside 0..100`);
  }
  return command("submit_suds", { session, value });
}

export function switchMethod(session: string, method: Method): Command {
  return command("switch_method", { session, method });
}

export function pause(session: string): Command {
  return command("pause", { session });
}

export function resume(session: string): Command {
  return command("resume", { session });
}

export function abort(session: string): Command {
  return command("abort", { session });
}

export function encodeCommand(cmd: Command): string {
  return JSON.stringify(cmd) + "\n";
}
