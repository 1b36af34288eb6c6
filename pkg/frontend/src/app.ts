/**
 * Browser entry: orbit the reconstructed vasculature, scrub or play the
 * contrast-bolus time axis, and watch latency / splat count.
 *
 * Server-side rendering only: this page displays exactly the bytes the
 * frame server returns.  Server address comes from the ?server= query
 * parameter (default ws://localhost:8765).
 */

import { FrameStream } from "./connection.js";
import {
  ViewerState, advancePlayback, applyDrag, applyHello, applyWheel,
  defaultState, setTime, stepTime, toFrameRequest, togglePlayback,
} from "./orbit.js";
import { ResponseHeader } from "./protocol.js";

const canvas = document.getElementById("view") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
const banner = document.getElementById("banner")!;
const statusLine = document.getElementById("status")!;
const slider = document.getElementById("time") as HTMLInputElement;
const ticks = document.getElementById("knots") as HTMLDataListElement;
const playButton = document.getElementById("play") as HTMLButtonElement;
const retryButton = document.getElementById("retry") as HTMLButtonElement;

let state: ViewerState = defaultState();
let lastLatency = NaN;
let lastGaussians = 0;
let lastRenderMs = NaN;

const params = new URLSearchParams(location.search);
const serverUrl = params.get("server") ?? "ws://localhost:8765";

const stream = new FrameStream(
  serverUrl,
  {
    onHello(hello: ResponseHeader) {
      state = applyHello(state, hello);
      lastGaussians = hello.gaussians ?? 0;
      ticks.replaceChildren(
        ...(hello.knots ?? []).map((k) => {
          const opt = document.createElement("option");
          opt.value = String(k);
          return opt;
        }),
      );
      banner.hidden = true;
      requestFrame();
    },
    async onFrame(frame, latencyMs) {
      lastLatency = latencyMs;
      lastGaussians = frame.header.gaussians ?? lastGaussians;
      lastRenderMs = frame.header.render_ms ?? NaN;
      const blob = new Blob([frame.body as BlobPart], { type: "image/png" });
      const bitmap = await createImageBitmap(blob);
      ctx.drawImage(bitmap, 0, 0, canvas.width, canvas.height);
      updateOverlay();
    },
    onError(message) {
      banner.textContent = `server error: ${message}`;
      banner.hidden = false;
    },
    onStatus(status) {
      statusLine.dataset.state = status;
      if (status !== "open") {
        banner.textContent = status === "connecting"
          ? `connecting to ${serverUrl} ...`
          : `disconnected from ${serverUrl} (retrying)`;
        banner.hidden = false;
      }
      updateOverlay();
    },
  },
  (url) => new WebSocket(url) as unknown as import("./connection.js").SocketLike,
);

function requestFrame(): void {
  stream.request(toFrameRequest(state, canvas.width, canvas.height));
}

function updateOverlay(): void {
  slider.value = String(state.t);
  statusLine.textContent =
    `t=${state.t.toFixed(3)}  az=${state.azimuthDeg.toFixed(1)}°  ` +
    `el=${state.elevationDeg.toFixed(1)}°  r=${state.radius.toFixed(2)}  |  ` +
    `${lastGaussians} splats  rtt ${Number.isNaN(lastLatency) ? "-" : lastLatency.toFixed(0)} ms` +
    `${Number.isNaN(lastRenderMs) ? "" : ` (render ${lastRenderMs.toFixed(0)} ms)`}`;
}

function update(next: ViewerState): void {
  state = next;
  updateOverlay();
  requestFrame();
}

// -- gestures ---------------------------------------------------------------
let dragging = false;
let lastX = 0;
let lastY = 0;
canvas.addEventListener("pointerdown", (ev) => {
  dragging = true;
  lastX = ev.clientX;
  lastY = ev.clientY;
  canvas.setPointerCapture(ev.pointerId);
});
canvas.addEventListener("pointermove", (ev) => {
  if (!dragging) return;
  update(applyDrag(state, ev.clientX - lastX, ev.clientY - lastY));
  lastX = ev.clientX;
  lastY = ev.clientY;
});
canvas.addEventListener("pointerup", () => (dragging = false));
canvas.addEventListener("wheel", (ev) => {
  ev.preventDefault();
  update(applyWheel(state, ev.deltaY));
}, { passive: false });

slider.addEventListener("input", () => update(setTime(state, Number(slider.value))));

window.addEventListener("keydown", (ev) => {
  if (ev.key === "ArrowLeft") update(stepTime(state, -0.02));
  if (ev.key === "ArrowRight") update(stepTime(state, 0.02));
  if (ev.key === " ") {
    ev.preventDefault();
    update(togglePlayback(state));
  }
});

playButton.addEventListener("click", () => {
  state = togglePlayback(state);
  playButton.textContent = state.playing ? "pause" : "play";
});

retryButton.addEventListener("click", () => stream.connect());

let lastTick = performance.now();
function playbackLoop(nowMs: number): void {
  const dt = (nowMs - lastTick) / 1000;
  lastTick = nowMs;
  if (state.playing) {
    update(advancePlayback(state, dt));
  }
  requestAnimationFrame(playbackLoop);
}
requestAnimationFrame(playbackLoop);

stream.connect();
