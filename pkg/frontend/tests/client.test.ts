import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { ConsoleClient, SocketLike } from "../src/client.js";
import { abort, pause, setDesired } from "../src/protocol.js";
import { snap } from "./view.test.js";

class FakeSocket implements SocketLike {
  onopen: ((ev?: unknown) => void) | null = null;
  onmessage: ((ev: { data: unknown }) => void) | null = null;
  onclose: ((ev?: unknown) => void) | null = null;
  onerror: ((ev?: unknown) => void) | null = null;
  sent: string[] = [];

  send(data: string): void {
    this.sent.push(data);
  }

  close(): void {
    this.onclose?.();
  }

  // test helpers
  open(): void {
    this.onopen?.();
  }

  receive(frame: unknown): void {
    this.onmessage?.({ data: JSON.stringify(frame) + "\n" });
  }
}

function makeClient(opts: Record<string, unknown> = {}) {
  const sockets: FakeSocket[] = [];
  const client = new ConsoleClient("ws://test/ws", {
    socketFactory: () => {
      const s = new FakeSocket();
      sockets.push(s);
      return s;
    },
    retryBaseMs: 100,
    ...opts,
  });
  return { client, sockets };
}

beforeEach(() => vi.useFakeTimers());
afterEach(() => vi.useRealTimers());

describe("ConsoleClient", () => {
  it("fans snapshots out to listeners", () => {
    const { client, sockets } = makeClient();
    const seen: string[] = [];
    client.on("snapshot", (s) => seen.push(s.session));
    client.connect();
    sockets[0].open();
    sockets[0].receive(snap({ session: "s0005" }));
    expect(seen).toEqual(["s0005"]);
  });

  it("resolves send() with the matching ack", async () => {
    const { client, sockets } = makeClient();
    client.connect();
    sockets[0].open();
    const promise = client.send(setDesired("s0001", 5));
    expect(JSON.parse(sockets[0].sent[0])).toMatchObject({ command: "set_desired", level: 5 });
    sockets[0].receive({ v: 1, type: "ack", command: "set_desired", session: "s0001" });
    await expect(promise).resolves.toMatchObject({ command: "set_desired" });
  });

  it("matches acks by command when several are in flight", async () => {
    const { client, sockets } = makeClient();
    client.connect();
    sockets[0].open();
    const pausePromise = client.send(pause("s0001"));
    const abortPromise = client.send(abort("s0001"));
    sockets[0].receive({ v: 1, type: "ack", command: "abort", session: "s0001" });
    sockets[0].receive({ v: 1, type: "ack", command: "pause", session: "s0001" });
    await expect(abortPromise).resolves.toMatchObject({ command: "abort" });
    await expect(pausePromise).resolves.toMatchObject({ command: "pause" });
  });

  it("rejects the oldest pending command when the server answers with an error", async () => {
    const { client, sockets } = makeClient();
    client.connect();
    sockets[0].open();
    const promise = client.send(setDesired("s0001", 9));
    sockets[0].receive({ v: 1, type: "error", error: "unknown session 's0001'" });
    await expect(promise).rejects.toThrow("unknown session");
  });

  it("surfaces unsolicited error frames through the error listener", () => {
    const { client, sockets } = makeClient();
    const errors: string[] = [];
    client.on("error", (e) => errors.push(e.error));
    client.connect();
    sockets[0].open();
    sockets[0].receive({ v: 1, type: "error", error: "malformed JSON frame" });
    expect(errors).toEqual(["malformed JSON frame"]);
  });

  it("refuses to send while disconnected", async () => {
    const { client } = makeClient();
    await expect(client.send(pause("s0001"))).rejects.toThrow("not connected");
  });

  it("reconnects with exponential backoff and reports state changes", () => {
    const { client, sockets } = makeClient();
    const states: string[] = [];
    client.on("state", (s) => states.push(s));
    client.connect();
    sockets[0].open();
    sockets[0].onclose?.(); // drop the link
    expect(client.state).toBe("retrying");
    expect(sockets).toHaveLength(1);
    vi.advanceTimersByTime(100);
    expect(sockets).toHaveLength(2); // first retry after the base delay
    sockets[1].onclose?.();
    vi.advanceTimersByTime(100);
    expect(sockets).toHaveLength(2); // doubled delay not elapsed yet
    vi.advanceTimersByTime(100);
    expect(sockets).toHaveLength(3);
    sockets[2].open();
    expect(states).toEqual([
      "connecting",
      "open",
      "retrying",
      "connecting",
      "retrying",
      "connecting",
      "open",
    ]);
  });

  it("rejects in-flight commands when the connection drops", async () => {
    const { client, sockets } = makeClient({ autoReconnect: false });
    client.connect();
    sockets[0].open();
    const promise = client.send(pause("s0001"));
    sockets[0].onclose?.();
    await expect(promise).rejects.toThrow("connection lost");
    expect(client.state).toBe("closed");
  });

  it("stays closed after an explicit close()", () => {
    const { client, sockets } = makeClient();
    client.connect();
    sockets[0].open();
    client.close();
    vi.advanceTimersByTime(60000);
    expect(sockets).toHaveLength(1);
    expect(client.state).toBe("closed");
  });
});
