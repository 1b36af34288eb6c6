"""Raw-bytes latency benchmark against a running frame server.

Round-trips sequential frame requests in raw encoding (no image compression)
while sweeping time and azimuth, the way an interactive client scrubs.
"""

from __future__ import annotations

import time

import numpy as np

from .server import FrameClient


def run_latency_benchmark(host, port, *, frames=120, width=512, height=512,
                          radius=None, target=None, warmup=8) -> dict:
    client = FrameClient(host, port)
    hello = client.hello
    if radius is None:
        radius = hello.get("suggested_radius", 4.0)
    if target is None:
        target = hello.get("center", [0.0, 0.0, 0.0])

    def req(i):
        return {
            "id": i,
            "t": (i % 33) / 32.0,
            "width": width, "height": height,
            "encoding": "raw",
            "camera": {"orbit": {
                "azimuth_deg": (i * 7.3) % 360.0 - 180.0,
                "elevation_deg": 10.0,
                "radius": radius, "target": target,
            }},
        }

    for i in range(warmup):
        client.request(req(i))
    latencies = []
    t0 = time.perf_counter()
    for i in range(frames):
        started = time.perf_counter()
        resp = client.request(req(warmup + i))
        if resp.header["type"] != "frame":
            raise RuntimeError(f"benchmark request failed: {resp.header}")
        latencies.append((time.perf_counter() - started) * 1000.0)
    elapsed = time.perf_counter() - t0
    client.close()
    lat = np.asarray(latencies)
    return {
        "frames": frames,
        "elapsed_s": elapsed,
        "fps": frames / elapsed,
        "mean_ms": float(lat.mean()),
        "p50_ms": float(np.percentile(lat, 50)),
        "p95_ms": float(np.percentile(lat, 95)),
        "width": width, "height": height,
        "gaussians": client.hello.get("gaussians"),
    }
