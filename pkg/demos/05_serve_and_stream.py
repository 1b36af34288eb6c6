"""Start a frame server on an oracle phantom and drive it like a client:
orbit, scrub time, and measure round-trip latency.

The same server feeds the browser viewer in frontend/ (WebSocket framing on
the same port) and the raw-bytes latency benchmark.

Run:  python3 demos/05_serve_and_stream.py
"""

import time

from vesselsplat import FrameClient, FrameServer, build_oracle, default_phantom

cloud = build_oracle(default_phantom(seed=0), table_len=5)
server = FrameServer(cloud, port=0, workers=2).start()
print(f"serving {cloud.n} splats on {server.host}:{server.port}")

client = FrameClient(server.host, server.port)
print(f"hello: {client.hello['gaussians']} splats, knots {client.hello['knots']}")

# a scrub through time at a fixed view, then a quick orbit at fixed time
for i, t in enumerate((0.0, 0.25, 0.5, 0.75, 1.0)):
    started = time.perf_counter()
    resp = client.request({
        "id": i, "t": t, "width": 256, "height": 256, "encoding": "raw",
        "camera": {"orbit": {"azimuth_deg": 30, "elevation_deg": 10,
                             "radius": client.hello["suggested_radius"],
                             "target": client.hello["center"]}},
    })
    rtt = (time.perf_counter() - started) * 1000
    print(f"t={t:.2f}: render {resp.header['render_ms']:.1f} ms, round-trip {rtt:.1f} ms, "
          f"peak {resp.image.max()}")

for az in (-60, 0, 60):
    resp = client.request({
        "id": 100 + az, "t": 0.5, "width": 256, "height": 256, "encoding": "png",
        "camera": {"orbit": {"azimuth_deg": az, "elevation_deg": 10,
                             "radius": client.hello["suggested_radius"],
                             "target": client.hello["center"]}},
    })
    print(f"azimuth {az:+d}: png {len(resp.body)} bytes")

client.close()
server.stop()
print("done; for the browser client run `vesselsplat serve` and open frontend/index.html")
