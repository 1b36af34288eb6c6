import { describe, expect, it } from "vitest";

import {
  ELEVATION_LIMIT, advancePlayback, applyDrag, applyHello, applyWheel,
  defaultState, setTime, stepTime, toFrameRequest, togglePlayback,
} from "../src/orbit.js";

describe("orbit state", () => {
  it("drag updates azimuth and elevation", () => {
    const s = applyDrag(defaultState(), 100, -50);
    expect(s.azimuthDeg).toBeCloseTo(40);
    expect(s.elevationDeg).toBeCloseTo(35);
  });

  it("a 180-degree drag requests the opposite side", () => {
    const s = applyDrag(defaultState(), 450, 0); // 450 px * 0.4 deg/px = 180
    expect(Math.abs(s.azimuthDeg)).toBeCloseTo(180);
  });

  it("elevation stays strictly inside (-90, 90)", () => {
    let s = defaultState();
    for (let i = 0; i < 50; i++) s = applyDrag(s, 0, -500);
    expect(s.elevationDeg).toBeLessThanOrEqual(ELEVATION_LIMIT);
    for (let i = 0; i < 100; i++) s = applyDrag(s, 0, 500);
    expect(s.elevationDeg).toBeGreaterThanOrEqual(-ELEVATION_LIMIT);
  });

  it("wheel zoom keeps radius positive", () => {
    let s = defaultState();
    for (let i = 0; i < 200; i++) s = applyWheel(s, -5000);
    expect(s.radius).toBeGreaterThan(0);
    const before = s.radius;
    s = applyWheel(s, 1000);
    expect(s.radius).toBeGreaterThan(before);
  });

  it("time is clamped to [0, 1]", () => {
    expect(setTime(defaultState(), 1.7).t).toBe(1);
    expect(setTime(defaultState(), -0.2).t).toBe(0);
    expect(stepTime(setTime(defaultState(), 0.99), 0.05).t).toBe(1);
  });

  it("playback advances and wraps 1 -> 0", () => {
    let s = togglePlayback(setTime(defaultState(), 0.9), true);
    s = { ...s, playbackSpeed: 0.5 };
    s = advancePlayback(s, 0.1); // +0.05 -> 0.95
    expect(s.t).toBeCloseTo(0.95);
    s = advancePlayback(s, 0.2); // +0.1 -> 1.05 wraps to 0.05
    expect(s.t).toBeCloseTo(0.05);
  });

  it("playback does nothing when paused", () => {
    const s = advancePlayback(setTime(defaultState(), 0.4), 10);
    expect(s.t).toBeCloseTo(0.4);
  });

  it("hello applies the scene framing", () => {
    const s = applyHello(defaultState(), { center: [1, 2, 3], suggested_radius: 7.5 });
    expect(s.target).toEqual([1, 2, 3]);
    expect(s.radius).toBe(7.5);
  });

  it("frame requests mirror the state and use fresh ids", () => {
    const s = setTime(applyDrag(defaultState(), 25, 0), 0.25);
    const a = toFrameRequest(s, 512, 512);
    const b = toFrameRequest(s, 512, 512);
    expect(a.camera.orbit.azimuth_deg).toBeCloseTo(10);
    expect(a.t).toBe(0.25);
    expect(a.width).toBe(512);
    expect(b.id).toBeGreaterThan(a.id);
  });
});
