/**
 * Wire types shared with the frame server (see ../PROTOCOL.md).
 *
 * Requests travel as JSON text frames over the WebSocket; responses are
 * binary frames laid out as: u32 little-endian header length, UTF-8 JSON
 * header, then the image body bytes.
 */

export interface OrbitParams {
  azimuth_deg: number;
  elevation_deg: number;
  radius: number;
  target: [number, number, number];
}

export interface FrameRequest {
  id: number;
  t: number;
  width: number;
  height: number;
  encoding: "png" | "raw";
  camera: { orbit: OrbitParams };
}

export interface ResponseHeader {
  type: "hello" | "frame" | "error";
  id?: number;
  width?: number;
  height?: number;
  encoding?: "png" | "raw";
  render_ms?: number;
  gaussians?: number;
  message?: string;
  // hello fields
  version?: number;
  table_len?: number;
  knots?: number[];
  center?: [number, number, number];
  suggested_radius?: number;
  max_width?: number;
  max_height?: number;
}

export interface DecodedResponse {
  header: ResponseHeader;
  body: Uint8Array;
}

export function encodeRequest(req: FrameRequest): string {
  return JSON.stringify(req);
}

export function decodeResponse(buffer: ArrayBuffer): DecodedResponse {
  if (buffer.byteLength < 4) {
    throw new Error("response shorter than its header-length prefix");
  }
  const view = new DataView(buffer);
  const headerLen = view.getUint32(0, true);
  if (4 + headerLen > buffer.byteLength) {
    throw new Error("truncated response header");
  }
  const headerBytes = new Uint8Array(buffer, 4, headerLen);
  const header = JSON.parse(new TextDecoder().decode(headerBytes)) as ResponseHeader;
  const body = new Uint8Array(buffer.slice(4 + headerLen));
  return { header, body };
}
