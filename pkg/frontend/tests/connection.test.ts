import { describe, expect, it, vi } from "vitest";

import { FrameStream, SocketLike } from "../src/connection.js";
import { FrameRequest } from "../src/protocol.js";

class FakeSocket implements SocketLike {
  binaryType = "blob";
  sent: string[] = [];
  closed = false;
  onopen: ((ev?: unknown) => void) | null = null;
  onclose: ((ev?: unknown) => void) | null = null;
  onerror: ((ev?: unknown) => void) | null = null;
  onmessage: ((ev: { data: ArrayBuffer }) => void) | null = null;

  send(data: string): void {
    this.sent.push(data);
  }

  close(): void {
    this.closed = true;
    this.onclose?.();
  }

  open(): void {
    this.onopen?.();
  }

  deliver(header: object, body = new Uint8Array(0)): void {
    const headerBytes = new TextEncoder().encode(JSON.stringify(header));
    const out = new Uint8Array(4 + headerBytes.length + body.length);
    new DataView(out.buffer).setUint32(0, headerBytes.length, true);
    out.set(headerBytes, 4);
    out.set(body, 4 + headerBytes.length);
    this.onmessage?.({ data: out.buffer });
  }
}

function makeRequest(id: number, t = 0.5): FrameRequest {
  return {
    id, t, width: 64, height: 64, encoding: "png",
    camera: { orbit: { azimuth_deg: 0, elevation_deg: 0, radius: 4, target: [0, 0, 0] } },
  };
}

function connected(callbacks = {}) {
  const sockets: FakeSocket[] = [];
  const stream = new FrameStream("ws://test", callbacks, () => {
    const s = new FakeSocket();
    sockets.push(s);
    return s;
  });
  stream.connect();
  sockets[0].open();
  sockets[0].deliver({ type: "hello", gaussians: 10, knots: [0, 1] });
  return { stream, sockets };
}

describe("frame stream", () => {
  it("keeps a single request in flight and coalesces the rest", () => {
    const frames: number[] = [];
    const { stream, sockets } = connected({
      onFrame: (f: { header: { id?: number } }) => frames.push(f.header.id!),
    });
    const sock = sockets[0];
    for (let i = 1; i <= 8; i++) stream.request(makeRequest(i));
    expect(sock.sent).toHaveLength(1); // only the first went out
    expect(JSON.parse(sock.sent[0]).id).toBe(1);
    expect(stream.pendingRequest?.id).toBe(8); // newest overwrote the queue

    sock.deliver({ type: "frame", id: 1, width: 64, height: 64, encoding: "png" });
    expect(sock.sent).toHaveLength(2); // pending flushed
    expect(JSON.parse(sock.sent[1]).id).toBe(8);
    sock.deliver({ type: "frame", id: 8, width: 64, height: 64, encoding: "png" });
    expect(frames).toEqual([1, 8]); // display converges to the final state
  });

  it("reports hello and measures latency", () => {
    let now = 1000;
    const latencies: number[] = [];
    let hello: unknown = null;
    const sockets: FakeSocket[] = [];
    const stream = new FrameStream(
      "ws://test",
      {
        onHello: (h: unknown) => (hello = h),
        onFrame: (_f: unknown, ms: number) => latencies.push(ms),
      },
      () => {
        const s = new FakeSocket();
        sockets.push(s);
        return s;
      },
      () => now,
    );
    stream.connect();
    sockets[0].open();
    sockets[0].deliver({ type: "hello", gaussians: 5 });
    expect((hello as { gaussians: number }).gaussians).toBe(5);

    stream.request(makeRequest(1));
    now = 1042;
    sockets[0].deliver({ type: "frame", id: 1, width: 64, height: 64, encoding: "png" });
    expect(latencies).toEqual([42]);
  });

  it("surfaces server errors and keeps going", () => {
    const errors: string[] = [];
    const { stream, sockets } = connected({ onError: (m: string) => errors.push(m) });
    stream.request(makeRequest(1, 2.0));
    sockets[0].deliver({ type: "error", id: 1, message: "time out of range" });
    expect(errors).toEqual(["time out of range"]);
    stream.request(makeRequest(2));
    expect(sockets[0].sent).toHaveLength(2); // connection still usable
  });

  it("reconnects after an unexpected close", async () => {
    vi.useFakeTimers();
    const statuses: string[] = [];
    const sockets: FakeSocket[] = [];
    const stream = new FrameStream(
      "ws://test",
      { onStatus: (s: string) => statuses.push(s) },
      () => {
        const s = new FakeSocket();
        sockets.push(s);
        return s;
      },
    );
    stream.connect();
    sockets[0].open();
    sockets[0].onclose?.(); // dropped by the server
    expect(statuses).toContain("closed");
    vi.advanceTimersByTime(600);
    expect(sockets).toHaveLength(2); // a fresh socket was opened
    stream.close();
    vi.useRealTimers();
  });

  it("queues a request made while disconnected", () => {
    const sockets: FakeSocket[] = [];
    const stream = new FrameStream("ws://test", {}, () => {
      const s = new FakeSocket();
      sockets.push(s);
      return s;
    });
    stream.request(makeRequest(7)); // no socket yet
    stream.connect();
    sockets[0].open();
    expect(sockets[0].sent).toHaveLength(0);
    sockets[0].deliver({ type: "hello" });
    expect(sockets[0].sent).toHaveLength(1); // flushed after the handshake
    expect(JSON.parse(sockets[0].sent[0]).id).toBe(7);
  });
});
