import {
  Ack,
  Command,
  ErrorFrame,
  ProtocolError,
  ServerFrame,
  Snapshot,
  encodeCommand,
  parseLines,
} from "./protocol.js";

/** The subset of the WebSocket API the client needs; satisfied by both the
 * browser's WebSocket and the `ws` package. */
export interface SocketLike {
  onopen: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
  send(data: string): void;
  close(): void;
}

export type SocketFactory = (url: string) => SocketLike;

export type ClientState = "connecting" | "open" | "retrying" | "closed";

export interface ClientOptions {
  socketFactory?: SocketFactory;
  /** Base delay for exponential backoff; doubles per failed attempt. */
  retryBaseMs?: number;
  retryMaxMs?: number;
  autoReconnect?: boolean;
  ackTimeoutMs?: number;
}

interface PendingAck {
  command: string;
  resolve: (ack: Ack) => void;
  reject: (err: Error) => void;
  timer: ReturnType<typeof setTimeout> | null;
}

type Listeners = {
  snapshot: ((s: Snapshot) => void)[];
  error: ((e: ErrorFrame) => void)[];
  state: ((s: ClientState) => void)[];
};

/**
 * Connection to the session service: parses incoming frames, fans snapshots
 * out to listeners, and correlates each sent command with the ack (or error)
 * the server answers it with. Reconnects with exponential backoff; pending
 * commands are rejected on disconnect rather than silently resent.
 */
export class ConsoleClient {
  private ws: SocketLike | null = null;
  private attempts = 0;
  private closed = false;
  private pending: PendingAck[] = [];
  private listeners: Listeners = { snapshot: [], error: [], state: [] };
  private retryTimer: ReturnType<typeof setTimeout> | null = null;
  private _state: ClientState = "closed";

  private readonly socketFactory: SocketFactory;
  private readonly retryBaseMs: number;
  private readonly retryMaxMs: number;
  private readonly autoReconnect: boolean;
  private readonly ackTimeoutMs: number;

  constructor(readonly url: string, opts: ClientOptions = {}) {
    this.socketFactory = opts.socketFactory ?? ((u) => new WebSocket(u) as unknown as SocketLike);
    this.retryBaseMs = opts.retryBaseMs ?? 500;
    this.retryMaxMs = opts.retryMaxMs ?? 15000;
    this.autoReconnect = opts.autoReconnect ?? true;
    this.ackTimeoutMs = opts.ackTimeoutMs ?? 10000;
  }

  get state(): ClientState {
    return this._state;
  }

  on<K extends keyof Listeners>(event: K, listener: Listeners[K][number]): void {
    (this.listeners[event] as unknown[]).push(listener);
  }

  connect(): void {
    if (this.ws || this.closed) return;
    this.setState("connecting");
    const ws = this.socketFactory(this.url);
    this.ws = ws;
    ws.onopen = () => {
      this.attempts = 0;
      this.setState("open");
    };
    ws.onmessage = (ev) => this.handleMessage(String(ev.data));
    ws.onerror = () => {};
    ws.onclose = () => this.handleClose();
  }

  /** Wait until the socket is open (resolves immediately if it already is). */
  opened(timeoutMs = 10000): Promise<void> {
    if (this._state === "open") return Promise.resolve();
    return new Promise((resolve, reject) => {
      const timer = setTimeout(() => reject(new Error("connect timeout")), timeoutMs);
      this.on("state", (s) => {
        if (s === "open") {
          clearTimeout(timer);
          resolve();
        }
      });
    });
  }

  /** Send one command and resolve with the server's ack for it. */
  send(cmd: Command): Promise<Ack> {
    if (!this.ws || this._state !== "open") {
      return Promise.reject(new Error("not connected"));
    }
    this.ws.send(encodeCommand(cmd));
    return new Promise((resolve, reject) => {
      const entry: PendingAck = { command: cmd.command, resolve, reject, timer: null };
      entry.timer = setTimeout(() => {
        this.pending = this.pending.filter((p) => p !== entry);
        reject(new Error(`no ack for ${cmd.command} within ${this.ackTimeoutMs} ms`));
      }, this.ackTimeoutMs);
      this.pending.push(entry);
    });
  }

  close(): void {
    this.closed = true;
    if (this.retryTimer) clearTimeout(this.retryTimer);
    this.ws?.close();
    this.ws = null;
    this.failPending(new Error("client closed"));
    this.setState("closed");
  }

  private handleMessage(text: string): void {
    let frames: ServerFrame[];
    try {
      frames = parseLines(text);
    } catch (err) {
      if (err instanceof ProtocolError) {
        this.emitError({ v: 1, type: "error", error: err.message, session: null });
        return;
      }
      throw err;
    }
    for (const frame of frames) {
      if (frame.type === "snapshot") {
        for (const l of this.listeners.snapshot) l(frame);
      } else if (frame.type === "ack") {
        this.settleAck(frame);
      } else {
        // Commands are answered in order, so an error frame settles the
        // oldest pending command if there is one.
        const head = this.pending.shift();
        if (head) {
          if (head.timer) clearTimeout(head.timer);
          head.reject(new Error(frame.error));
        } else {
          this.emitError(frame);
        }
      }
    }
  }

  private settleAck(ack: Ack): void {
    const idx = this.pending.findIndex((p) => p.command === ack.command);
    if (idx === -1) return; // ack for a command sent by another client
    const [entry] = this.pending.splice(idx, 1);
    if (entry.timer) clearTimeout(entry.timer);
    entry.resolve(ack);
  }

  private handleClose(): void {
    this.ws = null;
    this.failPending(new Error("connection lost"));
    if (this.closed || !this.autoReconnect) {
      this.setState("closed");
      return;
    }
    this.setState("retrying");
    const delay = Math.min(this.retryBaseMs * 2 ** this.attempts, this.retryMaxMs);
    this.attempts++;
    this.retryTimer = setTimeout(() => this.connect(), delay);
  }

  private failPending(err: Error): void {
    for (const p of this.pending) {
      if (p.timer) clearTimeout(p.timer);
      p.reject(err);
    }
    this.pending = [];
  }

  private emitError(frame: ErrorFrame): void {
    for (const l of this.listeners.error) l(frame);
  }

  private setState(s: ClientState): void {
    if (s === this._state) return;
    this._state = s;
    for (const l of this.listeners.state) l(s);
  }
}
