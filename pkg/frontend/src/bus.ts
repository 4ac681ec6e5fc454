// Reconnecting WebSocket client for the telemetry bus.
//
// The socket constructor is injectable so tests can drive a fake socket (or
// the `ws` package under node); the browser entry point passes the native
// WebSocket. Subscriptions are remembered and re-sent after every reconnect.

import type { Envelope } from "./protocol.js";

export interface WebSocketLike {
  onopen: ((ev: any) => void) | null;
  onmessage: ((ev: any) => void) | null;
  onclose: ((ev: any) => void) | null;
  onerror: ((ev: any) => void) | null;
  send(data: string): void;
  close(): void;
}

export type SocketFactory = (url: string) => WebSocketLike;

export type ConnectionStatus =
  | "connecting"
  | "connected"
  | "reconnecting"
  | "server-closed";

export interface BusOptions {
  socketFactory?: SocketFactory;
  minBackoffMs?: number;
  maxBackoffMs?: number;
  schedule?: (fn: () => void, ms: number) => unknown;
}

type Handler = (data: any, envelope: Envelope) => void;

export class ConsoleBus {
  status: ConnectionStatus = "connecting";

  private socket: WebSocketLike | null = null;
  private handlers = new Map<string, Handler[]>();
  private statusListeners: ((s: ConnectionStatus) => void)[] = [];
  private backoffMs: number;
  private closedByUser = false;
  private serverClosed = false;

  private readonly factory: SocketFactory;
  private readonly minBackoffMs: number;
  private readonly maxBackoffMs: number;
  private readonly schedule: (fn: () => void, ms: number) => unknown;

  constructor(
    readonly url: string,
    opts: BusOptions = {},
  ) {
    this.factory = opts.socketFactory ?? ((u) => new WebSocket(u) as unknown as WebSocketLike);
    this.minBackoffMs = opts.minBackoffMs ?? 250;
    this.maxBackoffMs = opts.maxBackoffMs ?? 4000;
    this.schedule = opts.schedule ?? ((fn, ms) => setTimeout(fn, ms));
    this.backoffMs = this.minBackoffMs;
    this.open();
  }

  subscribe(topic: string, handler: Handler): void {
    const list = this.handlers.get(topic);
    if (list) {
      list.push(handler);
      return;
    }
    this.handlers.set(topic, [handler]);
    if (this.status === "connected") this.sendSub(topic);
  }

  /** Publish on a topic; silently dropped while disconnected (commands are live-only). */
  publish(topic: string, data: unknown): boolean {
    if (this.status !== "connected" || this.socket === null) return false;
    this.socket.send(JSON.stringify({ type: "PUB", topic, data }));
    return true;
  }

  onStatus(listener: (s: ConnectionStatus) => void): void {
    this.statusListeners.push(listener);
    listener(this.status);
  }

  close(): void {
    this.closedByUser = true;
    this.socket?.close();
  }

  // -- internals -------------------------------------------------------------

  private setStatus(s: ConnectionStatus): void {
    if (s === this.status) return;
    this.status = s;
    for (const fn of this.statusListeners) fn(s);
  }

  private sendSub(topic: string): void {
    this.socket?.send(JSON.stringify({ type: "SUB", topic }));
  }

  private open(): void {
    const sock = this.factory(this.url);
    this.socket = sock;
    sock.onopen = () => {
      this.serverClosed = false;
      this.backoffMs = this.minBackoffMs;
      this.setStatus("connected");
      for (const topic of this.handlers.keys()) this.sendSub(topic);
    };
    sock.onmessage = (ev: any) => {
      const text = typeof ev.data === "string" ? ev.data : String(ev.data);
      let envelope: Envelope;
      try {
        envelope = JSON.parse(text);
      } catch {
        console.warn("bus: unparseable message", text.slice(0, 120));
        return;
      }
      this.dispatch(envelope);
    };
    sock.onerror = () => {
      // the close handler owns reconnection; nothing to do here
    };
    sock.onclose = () => {
      if (this.socket !== sock) return; // stale socket from a previous attempt
      this.socket = null;
      if (this.closedByUser) return;
      this.setStatus(this.serverClosed ? "server-closed" : "reconnecting");
      const delay = this.backoffMs;
      this.backoffMs = Math.min(this.backoffMs * 2, this.maxBackoffMs);
      this.schedule(() => {
        if (!this.closedByUser) this.open();
      }, delay);
    };
  }

  private dispatch(envelope: Envelope): void {
    switch (envelope.type) {
      case "PUB": {
        const list = this.handlers.get(envelope.topic ?? "");
        if (list) for (const fn of list) fn(envelope.data, envelope);
        break;
      }
      case "ACK":
        break;
      case "NACK":
        console.warn(`bus: NACK ${envelope.reason ?? "?"} (${envelope.op ?? "?"})`);
        break;
      case "CLOSE":
        // server is shutting down; the socket close that follows shows the banner
        this.serverClosed = true;
        break;
      default:
        console.warn("bus: unknown envelope type", envelope.type);
    }
  }
}
