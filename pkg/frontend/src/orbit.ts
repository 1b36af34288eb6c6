/**
 * Viewer state and the pure gesture reducers.
 *
 * Invariants enforced on every update: t stays in [0, 1], radius stays
 * positive, elevation stays strictly inside (-90, 90) degrees.
 */

export interface ViewerState {
  azimuthDeg: number;
  elevationDeg: number;
  radius: number;
  target: [number, number, number];
  t: number;
  playing: boolean;
  playbackSpeed: number; // time units per second
}

export const ELEVATION_LIMIT = 89.9;
const MIN_RADIUS = 1e-3;

export function defaultState(): ViewerState {
  return {
    azimuthDeg: 0,
    elevationDeg: 15,
    radius: 4,
    target: [0, 0, 0],
    t: 0,
    playing: false,
    playbackSpeed: 0.25,
  };
}

function clampT(t: number): number {
  return Math.min(Math.max(t, 0), 1);
}

function wrapAzimuth(az: number): number {
  let a = az % 360;
  if (a > 180) a -= 360;
  if (a < -180) a += 360;
  return a;
}

export function applyDrag(state: ViewerState, dxPx: number, dyPx: number): ViewerState {
  const degPerPx = 0.4;
  return {
    ...state,
    azimuthDeg: wrapAzimuth(state.azimuthDeg + dxPx * degPerPx),
    elevationDeg: Math.min(
      Math.max(state.elevationDeg - dyPx * degPerPx, -ELEVATION_LIMIT),
      ELEVATION_LIMIT,
    ),
  };
}

export function applyWheel(state: ViewerState, deltaY: number): ViewerState {
  const factor = Math.exp(deltaY * 0.001);
  return { ...state, radius: Math.max(state.radius * factor, MIN_RADIUS) };
}

export function setTime(state: ViewerState, t: number): ViewerState {
  return { ...state, t: clampT(t) };
}

export function stepTime(state: ViewerState, delta: number): ViewerState {
  return setTime(state, state.t + delta);
}

export function togglePlayback(state: ViewerState, playing?: boolean): ViewerState {
  return { ...state, playing: playing ?? !state.playing };
}

/** Advance playback time by dtSeconds, wrapping 1 -> 0. */
export function advancePlayback(state: ViewerState, dtSeconds: number): ViewerState {
  if (!state.playing) return state;
  let t = state.t + dtSeconds * state.playbackSpeed;
  t -= Math.floor(t); // wrap into [0, 1)
  return { ...state, t };
}

export function applyHello(
  state: ViewerState,
  hello: { center?: [number, number, number]; suggested_radius?: number },
): ViewerState {
  return {
    ...state,
    target: hello.center ?? state.target,
    radius: hello.suggested_radius ?? state.radius,
  };
}

let requestCounter = 0;

export function toFrameRequest(
  state: ViewerState,
  width: number,
  height: number,
): import("./protocol.js").FrameRequest {
  requestCounter += 1;
  return {
    id: requestCounter,
    t: state.t,
    width,
    height,
    encoding: "png",
    camera: {
      orbit: {
        azimuth_deg: state.azimuthDeg,
        elevation_deg: state.elevationDeg,
        radius: state.radius,
        target: state.target,
      },
    },
  };
}
