// Live-session client: one subscriber socket with a latest-frame mailbox
// per topic (stale frames dropped, never reordered) and one controller
// socket for drill/camera intents.  Auto-reconnects with a visible status;
// never silently stale.

import { WireMessage, decodeMessage, encodeHello } from "./protocol.js";

export type ConnectionStatus = "connecting" | "open" | "retrying" | "closed";

// minimal constructor surface so the browser WebSocket and the `ws`
// package are interchangeable
export interface WebSocketLike {
  binaryType: string;
  send(data: string | ArrayBufferLike | Uint8Array): void;
  close(): void;
  onopen: ((ev?: unknown) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
}

export type WebSocketCtor = new (url: string) => WebSocketLike;

export interface SimClientOptions {
  url: string;
  topics?: string[];
  webSocketCtor?: WebSocketCtor;
  retryMs?: number;
  onMessage?: (msg: WireMessage) => void;
  onStatus?: (status: ConnectionStatus) => void;
}

function toBytes(data: unknown): Uint8Array | null {
  if (data instanceof ArrayBuffer) return new Uint8Array(data);
  if (data instanceof Uint8Array) return data;
  if (ArrayBuffer.isView(data)) {
    const v = data as ArrayBufferView;
    return new Uint8Array(v.buffer, v.byteOffset, v.byteLength);
  }
  return null;
}

export class SimClient {
  readonly latest = new Map<number, WireMessage>();
  status: ConnectionStatus = "closed";
  framesReceived = 0;
  staleDropped = 0;

  private ws: WebSocketLike | null = null;
  private closedByUser = false;
  private retryTimer: ReturnType<typeof setTimeout> | null = null;

  constructor(private readonly opts: SimClientOptions) {}

  connect(): void {
    this.closedByUser = false;
    this.open();
  }

  private setStatus(s: ConnectionStatus) {
    this.status = s;
    this.opts.onStatus?.(s);
  }

  private open() {
    const Ctor = this.opts.webSocketCtor ?? (globalThis as any).WebSocket;
    this.setStatus("connecting");
    const ws: WebSocketLike = new Ctor(this.opts.url);
    this.ws = ws;
    ws.binaryType = "arraybuffer";
    ws.onopen = () => {
      ws.send(encodeHello("subscriber", this.opts.topics));
      this.setStatus("open");
    };
    ws.onmessage = (ev) => {
      const bytes = toBytes(ev.data);
      if (!bytes) return;
      let msg: WireMessage;
      try {
        msg = decodeMessage(bytes);
      } catch {
        return;
      }
      this.accept(msg);
    };
    ws.onerror = () => {
      /* onclose follows */
    };
    ws.onclose = () => {
      if (this.closedByUser) {
        this.setStatus("closed");
        return;
      }
      this.setStatus("retrying");
      this.retryTimer = setTimeout(() => this.open(), this.opts.retryMs ?? 500);
    };
  }

  /** Keep only the newest message per topic; a frame older than the one
   *  already displayed is dropped, never shown out of order. */
  accept(msg: WireMessage): void {
    const prev = this.latest.get(msg.topicId);
    if (prev && msg.timestampNs < prev.timestampNs) {
      this.staleDropped += 1;
      return;
    }
    this.latest.set(msg.topicId, msg);
    this.framesReceived += 1;
    this.opts.onMessage?.(msg);
  }

  close(): void {
    this.closedByUser = true;
    if (this.retryTimer !== null) clearTimeout(this.retryTimer);
    this.ws?.close();
    this.setStatus("closed");
  }
}

export interface ControlChannelOptions {
  url: string;
  webSocketCtor?: WebSocketCtor;
  onStatus?: (status: ConnectionStatus) => void;
}

export class ControlChannel {
  status: ConnectionStatus = "closed";
  private ws: WebSocketLike | null = null;
  private ready = false;
  private backlog: Uint8Array[] = [];

  constructor(private readonly opts: ControlChannelOptions) {}

  connect(): Promise<void> {
    const Ctor = this.opts.webSocketCtor ?? (globalThis as any).WebSocket;
    const ws: WebSocketLike = new Ctor(this.opts.url);
    this.ws = ws;
    ws.binaryType = "arraybuffer";
    this.status = "connecting";
    this.opts.onStatus?.("connecting");
    return new Promise((resolve, reject) => {
      ws.onopen = () => {
        ws.send(encodeHello("controller"));
        this.ready = true;
        this.status = "open";
        this.opts.onStatus?.("open");
        for (const frame of this.backlog.splice(0)) ws.send(frame);
        resolve();
      };
      ws.onclose = () => {
        this.ready = false;
        this.status = "closed";
        this.opts.onStatus?.("closed");
      };
      ws.onerror = (e) => reject(e);
    });
  }

  send(frame: Uint8Array): void {
    if (this.ready && this.ws) {
      this.ws.send(frame);
    } else {
      this.backlog.push(frame);
    }
  }

  close(): void {
    this.ws?.close();
  }
}
