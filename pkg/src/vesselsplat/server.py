"""Frame-streaming server and client.

Serves rendered frames from a read-only checkpoint over persistent
bidirectional connections.  Two framings share identical JSON/byte payloads
(see PROTOCOL.md):

* raw TCP: length-prefixed text requests, length-prefixed binary responses;
* WebSocket (detected by the HTTP handshake on the same port): text frames
  carry requests, binary frames carry responses.  Browsers use this one.

Per connection, requests are coalesced latest-wins: while a frame renders,
newer requests overwrite the pending slot so scrubbing never queues stale
work.  Connections render concurrently over the shared cloud; nothing
mutates it.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import socket
import struct
import threading
import time
from dataclasses import dataclass

import numpy as np

from .cameras import Camera
from .checkpoint import load_checkpoint
from .gaussians import GaussianCloud, table_knots
from .imageio import encode_png_bytes, to_uint8
from .rasterizer import render

PROTOCOL_VERSION = 1
DEFAULT_FOV_DEG = 40.0
_LEN = struct.Struct("<I")
_WS_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"

log = logging.getLogger("vesselsplat.server")


def encode_request(req: dict) -> bytes:
    payload = json.dumps(req).encode("utf-8")
    return _LEN.pack(len(payload)) + payload


def encode_response(header: dict, body: bytes = b"") -> bytes:
    """Inner response layout: u32 header length, JSON header, raw body."""
    head = json.dumps(header).encode("utf-8")
    return _LEN.pack(len(head)) + head + body


def decode_response(payload: bytes):
    if len(payload) < _LEN.size:
        raise ValueError("response shorter than its header-length prefix")
    (hlen,) = _LEN.unpack_from(payload)
    header = json.loads(payload[_LEN.size:_LEN.size + hlen].decode("utf-8"))
    return header, payload[_LEN.size + hlen:]


def orbit_camera(params: dict, width: int, height: int, fov_deg=DEFAULT_FOV_DEG) -> Camera:
    """Camera from orbit parameters; shared by the CLI and the server so a
    request and a `render` invocation produce identical poses."""
    radius = float(params["radius"])
    target = params.get("target", (0.0, 0.0, 0.0))
    fov = float(params.get("fov_deg", fov_deg))
    fx = width / (2.0 * np.tan(np.deg2rad(fov) / 2.0))
    return Camera.orbit(
        azimuth_deg=float(params["azimuth_deg"]),
        elevation_deg=float(params["elevation_deg"]),
        radius=radius, target=tuple(float(v) for v in target),
        fx=fx, width=width, height=height,
        near=max(radius / 100.0, 1e-3), far=radius * 100.0,
    )


def camera_from_request(req: dict, width: int, height: int, fov_deg=DEFAULT_FOV_DEG) -> Camera:
    cam_spec = req.get("camera")
    if not isinstance(cam_spec, dict):
        raise ValueError("request needs a 'camera' object with 'orbit' or 'pose'")
    if "orbit" in cam_spec:
        return orbit_camera(cam_spec["orbit"], width, height, fov_deg)
    if "pose" in cam_spec:
        rec = dict(cam_spec["pose"])
        rec.setdefault("width", width)
        rec.setdefault("height", height)
        return Camera.from_record(rec)
    raise ValueError("camera must contain 'orbit' or 'pose'")


class _Mailbox:
    """Single-slot latest-wins queue."""

    def __init__(self):
        self._cond = threading.Condition()
        self._item = None
        self._closed = False

    def put(self, item):
        with self._cond:
            self._item = item
            self._cond.notify()

    def close(self):
        with self._cond:
            self._closed = True
            self._cond.notify()

    def take(self):
        with self._cond:
            while self._item is None and not self._closed:
                self._cond.wait()
            item, self._item = self._item, None
            return item  # None means closed


def _recv_exact(sock, count):
    buf = bytearray()
    while len(buf) < count:
        chunk = sock.recv(count - len(buf))
        if not chunk:
            return None
        buf.extend(chunk)
    return bytes(buf)


class FrameServer:
    """One acceptor, one session per connection, shared read-only cloud."""

    def __init__(self, cloud: GaussianCloud, *, host="127.0.0.1", port=0,
                 workers=1, max_size=1024, fov_deg=DEFAULT_FOV_DEG):
        if isinstance(cloud, (str, bytes)) or hasattr(cloud, "__fspath__"):
            cloud = load_checkpoint(cloud)
        self.cloud = cloud
        self.workers = workers
        self.max_size = int(max_size)
        self.fov_deg = fov_deg
        self._sock = socket.create_server((host, port))
        self.host, self.port = self._sock.getsockname()[:2]
        self._threads = []
        self._running = False

    # -- lifecycle --------------------------------------------------------
    def start(self):
        self._running = True
        t = threading.Thread(target=self._accept_loop, daemon=True)
        t.start()
        self._threads.append(t)
        return self

    def stop(self):
        self._running = False
        try:
            self._sock.close()
        except OSError:
            pass

    def serve_forever(self):
        self.start()
        try:
            while self._running:
                time.sleep(0.2)
        except KeyboardInterrupt:
            self.stop()

    def _accept_loop(self):
        while self._running:
            try:
                conn, peer = self._sock.accept()
            except OSError:
                return
            log.info("connection from %s:%s", *peer[:2])
            threading.Thread(target=self._session, args=(conn,), daemon=True).start()

    # -- message payloads ---------------------------------------------------
    def hello(self) -> dict:
        knots = table_knots(self.cloud.table_len)
        return {
            "type": "hello", "version": PROTOCOL_VERSION,
            "gaussians": int(self.cloud.n), "table_len": int(self.cloud.table_len),
            "knots": [float(k) for k in knots],
            "center": [float(v) for v in self.cloud.positions.mean(axis=0)] if self.cloud.n else [0.0, 0.0, 0.0],
            "suggested_radius": self._suggested_radius(),
            "max_width": self.max_size, "max_height": self.max_size,
        }

    def _suggested_radius(self) -> float:
        if self.cloud.n == 0:
            return 4.0
        span = self.cloud.positions.max(axis=0) - self.cloud.positions.min(axis=0)
        return float(np.linalg.norm(span) * 1.4 + 1e-3)

    def handle_request(self, req: dict):
        """Render one frame; returns (header, body).  Raises ValueError on a
        malformed request."""
        if not isinstance(req, dict):
            raise ValueError("request must be a JSON object")
        t = req.get("t")
        if not isinstance(t, (int, float)) or not (0.0 <= float(t) <= 1.0):
            raise ValueError("time out of range: t must lie in [0, 1]")
        width = int(req.get("width", 512))
        height = int(req.get("height", 512))
        if not (1 <= width <= self.max_size and 1 <= height <= self.max_size):
            raise ValueError(f"requested size {width}x{height} exceeds cap {self.max_size}")
        encoding = req.get("encoding", "png")
        if encoding not in ("png", "raw"):
            raise ValueError("encoding must be 'png' or 'raw'")
        cam = camera_from_request(req, width, height, self.fov_deg)
        started = time.perf_counter()
        image = render(self.cloud, cam, float(t), workers=self.workers)
        body = encode_png_bytes(image, bitdepth=8) if encoding == "png" else to_uint8(image).tobytes()
        header = {
            "type": "frame", "id": req.get("id"),
            "width": width, "height": height, "encoding": encoding,
            "render_ms": (time.perf_counter() - started) * 1000.0,
            "gaussians": int(self.cloud.n),
        }
        return header, body

    # -- session ----------------------------------------------------------
    def _session(self, conn: socket.socket):
        try:
            # WebSocket clients speak first (HTTP upgrade); raw clients may
            # silently wait for the hello, so peek with a short deadline.
            probe = b""
            deadline = time.monotonic() + 0.25
            while len(probe) < 4 and time.monotonic() < deadline:
                conn.settimeout(max(deadline - time.monotonic(), 0.01))
                try:
                    probe = conn.recv(4, socket.MSG_PEEK)
                    if probe == b"":
                        return  # closed before speaking
                except (TimeoutError, socket.timeout):
                    break
            conn.settimeout(None)
            if probe[:4] == b"GET ":
                self._ws_session(conn)
            else:
                self._raw_session(conn)
        except (OSError, ConnectionError):
            pass
        finally:
            try:
                conn.close()
            except OSError:
                pass

    def _raw_session(self, conn):
        send_lock = threading.Lock()

        def send_payload(payload: bytes):
            with send_lock:
                conn.sendall(_LEN.pack(len(payload)) + payload)

        send_payload(encode_response(self.hello()))
        mailbox = _Mailbox()

        def reader():
            try:
                while True:
                    prefix = _recv_exact(conn, 4)
                    if prefix is None:
                        break
                    (length,) = _LEN.unpack(prefix)
                    if length > 1 << 24:
                        break
                    data = _recv_exact(conn, length)
                    if data is None:
                        break
                    mailbox.put(data)
            except (OSError, ConnectionError):
                pass
            finally:
                mailbox.close()

        threading.Thread(target=reader, daemon=True).start()
        self._serve_mailbox(mailbox, send_payload)

    def _serve_mailbox(self, mailbox, send_payload):
        while True:
            raw = mailbox.take()
            if raw is None:
                return
            req_id = None
            try:
                req = json.loads(raw.decode("utf-8"))
                req_id = req.get("id") if isinstance(req, dict) else None
                header, body = self.handle_request(req)
                send_payload(encode_response(header, body))
            except (ValueError, KeyError, TypeError) as err:
                log.debug("request failed: %s", err)
                send_payload(encode_response({"type": "error", "id": req_id, "message": str(err)}))
            except (OSError, ConnectionError):
                return

    # -- websocket framing --------------------------------------------------
    def _ws_session(self, conn):
        data = bytearray()
        while b"\r\n\r\n" not in data:
            chunk = conn.recv(4096)
            if not chunk:
                return
            data.extend(chunk)
            if len(data) > 65536:
                return
        head, _, rest = bytes(data).partition(b"\r\n\r\n")
        key = None
        for line in head.split(b"\r\n"):
            if line.lower().startswith(b"sec-websocket-key:"):
                key = line.split(b":", 1)[1].strip().decode("ascii")
        if key is None:
            conn.sendall(b"HTTP/1.1 400 Bad Request\r\n\r\n")
            return
        accept = base64.b64encode(hashlib.sha1((key + _WS_GUID).encode()).digest()).decode()
        conn.sendall(
            b"HTTP/1.1 101 Switching Protocols\r\nUpgrade: websocket\r\n"
            b"Connection: Upgrade\r\nSec-WebSocket-Accept: " + accept.encode() + b"\r\n\r\n")

        send_lock = threading.Lock()

        def send_payload(payload: bytes):
            with send_lock:
                conn.sendall(_ws_frame(payload, opcode=2))

        send_payload(encode_response(self.hello()))
        mailbox = _Mailbox()
        buffer = bytearray(rest)

        def reader():
            try:
                while True:
                    msg = _ws_read_message(conn, buffer)
                    if msg is None:
                        break
                    opcode, payload = msg
                    if opcode == 8:  # close
                        break
                    if opcode == 9:  # ping -> pong
                        with send_lock:
                            conn.sendall(_ws_frame(payload, opcode=10))
                        continue
                    if opcode in (1, 2):
                        mailbox.put(bytes(payload))
            except (OSError, ConnectionError):
                pass
            finally:
                mailbox.close()

        threading.Thread(target=reader, daemon=True).start()
        self._serve_mailbox(mailbox, send_payload)


def _ws_frame(payload: bytes, opcode=2) -> bytes:
    head = bytearray([0x80 | opcode])
    n = len(payload)
    if n < 126:
        head.append(n)
    elif n < 1 << 16:
        head.append(126)
        head += struct.pack(">H", n)
    else:
        head.append(127)
        head += struct.pack(">Q", n)
    return bytes(head) + payload


def _ws_read_message(conn, buffer: bytearray):
    """Read one complete (possibly fragmented) message; returns (opcode, bytes)."""

    def need(count):
        while len(buffer) < count:
            chunk = conn.recv(4096)
            if not chunk:
                return False
            buffer.extend(chunk)
        return True

    message = bytearray()
    opcode = None
    while True:
        if not need(2):
            return None
        b0, b1 = buffer[0], buffer[1]
        fin = b0 & 0x80
        op = b0 & 0x0F
        masked = b1 & 0x80
        length = b1 & 0x7F
        pos = 2
        if length == 126:
            if not need(pos + 2):
                return None
            length = struct.unpack(">H", bytes(buffer[pos:pos + 2]))[0]
            pos += 2
        elif length == 127:
            if not need(pos + 8):
                return None
            length = struct.unpack(">Q", bytes(buffer[pos:pos + 8]))[0]
            pos += 8
        mask = b""
        if masked:
            if not need(pos + 4):
                return None
            mask = bytes(buffer[pos:pos + 4])
            pos += 4
        if not need(pos + length):
            return None
        payload = bytearray(buffer[pos:pos + length])
        del buffer[:pos + length]
        if mask:
            for i in range(len(payload)):
                payload[i] ^= mask[i % 4]
        if op != 0:
            opcode = op
        message += payload
        if fin:
            return opcode, bytes(message)


@dataclass
class FrameResponse:
    header: dict
    body: bytes

    @property
    def image(self) -> np.ndarray:
        h, w = self.header["height"], self.header["width"]
        if self.header["encoding"] == "raw":
            return np.frombuffer(self.body, dtype=np.uint8).reshape(h, w)
        import io

        from PIL import Image as PILImage

        return np.asarray(PILImage.open(io.BytesIO(self.body)))


class FrameClient:
    """Blocking raw-TCP client; reads the hello on connect."""

    def __init__(self, host, port, timeout=30.0):
        self.sock = socket.create_connection((host, port), timeout=timeout)
        self.hello = self._recv().header

    def send(self, req: dict):
        self.sock.sendall(encode_request(req))

    def _recv(self) -> FrameResponse:
        prefix = _recv_exact(self.sock, 4)
        if prefix is None:
            raise ConnectionError("server closed the connection")
        (length,) = _LEN.unpack(prefix)
        payload = _recv_exact(self.sock, length)
        if payload is None:
            raise ConnectionError("truncated response")
        header, body = decode_response(payload)
        return FrameResponse(header, body)

    def recv(self) -> FrameResponse:
        return self._recv()

    def request(self, req: dict) -> FrameResponse:
        self.send(req)
        return self.recv()

    def close(self):
        try:
            self.sock.close()
        except OSError:
            pass


def serve_frames(checkpoint, port, *, host="127.0.0.1", workers=1,
                 max_size=1024, fov_deg=DEFAULT_FOV_DEG) -> FrameServer:
    """Start serving a checkpoint; returns the started server."""
    return FrameServer(checkpoint, host=host, port=port, workers=workers,
                       max_size=max_size, fov_deg=fov_deg).start()
