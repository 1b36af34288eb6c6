/**
 * Frame stream over a WebSocket with client-side single-flight:
 * at most one request is outstanding; newer state overwrites the pending
 * slot (the server coalesces too, but this keeps the client's view simple
 * and the displayed frame always converges to the latest requested state).
 *
 * The socket factory is injected so tests can drive a fake.
 */

import { DecodedResponse, FrameRequest, ResponseHeader, decodeResponse, encodeRequest } from "./protocol.js";

export type SocketLike = {
  send(data: string): void;
  close(): void;
  binaryType: string;
  onopen: ((ev?: unknown) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: ArrayBuffer }) => void) | null;
};

export type SocketFactory = (url: string) => SocketLike;

export interface StreamCallbacks {
  onHello?(hello: ResponseHeader): void;
  onFrame?(frame: DecodedResponse, latencyMs: number): void;
  onError?(message: string): void;
  onStatus?(status: "connecting" | "open" | "closed"): void;
}

export class FrameStream {
  private socket: SocketLike | null = null;
  private inFlight: FrameRequest | null = null;
  private pending: FrameRequest | null = null;
  private sentAt = new Map<number, number>();
  private reconnectDelayMs = 500;
  private closedByUser = false;
  private reconnectTimer: ReturnType<typeof setTimeout> | null = null;

  constructor(
    private url: string,
    private callbacks: StreamCallbacks,
    private factory: SocketFactory,
    private now: () => number = () => Date.now(),
  ) {}

  connect(): void {
    this.closedByUser = false;
    this.callbacks.onStatus?.("connecting");
    const socket = this.factory(this.url);
    socket.binaryType = "arraybuffer";
    socket.onopen = () => {
      this.reconnectDelayMs = 500;
      this.callbacks.onStatus?.("open");
    };
    socket.onmessage = (ev) => this.handleMessage(ev.data);
    socket.onerror = () => this.callbacks.onError?.("connection error");
    socket.onclose = () => {
      this.socket = null;
      this.inFlight = null;
      this.callbacks.onStatus?.("closed");
      if (!this.closedByUser) this.scheduleReconnect();
    };
    this.socket = socket;
  }

  close(): void {
    this.closedByUser = true;
    if (this.reconnectTimer !== null) clearTimeout(this.reconnectTimer);
    this.socket?.close();
    this.socket = null;
  }

  private scheduleReconnect(): void {
    this.reconnectTimer = setTimeout(() => this.connect(), this.reconnectDelayMs);
    this.reconnectDelayMs = Math.min(this.reconnectDelayMs * 2, 5000);
  }

  /** Queue a frame request; overwrites any not-yet-sent pending request. */
  request(req: FrameRequest): void {
    if (this.socket === null) {
      this.pending = req; // sent when the connection (re)opens and idles
      return;
    }
    if (this.inFlight !== null) {
      this.pending = req;
      return;
    }
    this.sendNow(req);
  }

  get pendingRequest(): FrameRequest | null {
    return this.pending;
  }

  get inFlightRequest(): FrameRequest | null {
    return this.inFlight;
  }

  private sendNow(req: FrameRequest): void {
    this.inFlight = req;
    this.sentAt.set(req.id, this.now());
    this.socket!.send(encodeRequest(req));
  }

  private handleMessage(data: ArrayBuffer): void {
    let decoded: DecodedResponse;
    try {
      decoded = decodeResponse(data);
    } catch (err) {
      this.callbacks.onError?.(String(err));
      return;
    }
    const header = decoded.header;
    if (header.type === "hello") {
      this.callbacks.onHello?.(header);
      // a request may have queued while connecting
      if (this.inFlight === null && this.pending !== null && this.socket !== null) {
        const next = this.pending;
        this.pending = null;
        this.sendNow(next);
      }
      return;
    }
    const latency = header.id !== undefined && this.sentAt.has(header.id)
      ? this.now() - this.sentAt.get(header.id)!
      : NaN;
    if (header.id !== undefined) this.sentAt.delete(header.id);
    this.inFlight = null;
    if (header.type === "error") {
      this.callbacks.onError?.(header.message ?? "unknown server error");
    } else {
      this.callbacks.onFrame?.(decoded, latency);
    }
    if (this.pending !== null && this.socket !== null) {
      const next = this.pending;
      this.pending = null;
      this.sendNow(next);
    }
  }
}
