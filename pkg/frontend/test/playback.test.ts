import { describe, expect, it } from "vitest";

import { FPS, Playback, ShapeError, validatePositions } from "../src/playback.js";

function frames(count: number, joints = 4): number[][][] {
  return Array.from({ length: count }, (_, f) =>
    Array.from({ length: joints }, (_, j) => [f, j, 0]),
  );
}

describe("playback", () => {
  it("plays 450 stitched frames for 15 seconds at 30 fps", () => {
    const pb = new Playback();
    for (let i = 0; i < 3; i++) pb.append(i, frames(150), 4);
    expect(pb.totalFrames).toBe(450);
    expect(pb.durationSeconds).toBeCloseTo(15.0, 9);
    expect(FPS).toBe(30);
  });

  it("indexes frames across clip boundaries", () => {
    const pb = new Playback();
    pb.append(0, frames(10), 4);
    pb.append(1, frames(5), 4);
    expect(pb.frameAt(0)?.clipIndex).toBe(0);
    expect(pb.frameAt(9)?.clipIndex).toBe(0);
    expect(pb.frameAt(10)?.clipIndex).toBe(1);
    expect(pb.frameAt(14)?.joints[0][0]).toBe(4);
    expect(pb.clipStart(1)).toBe(10);
  });

  it("maps playback time to clamped frame indices", () => {
    const pb = new Playback();
    pb.append(0, frames(30), 4);
    expect(pb.frameIndexAt(0)).toBe(0);
    expect(pb.frameIndexAt(0.5)).toBe(15);
    expect(pb.frameIndexAt(10)).toBe(29);
  });

  it("renders a static pose as a motionless sequence", () => {
    const pb = new Playback();
    const still = Array.from({ length: 8 }, () => [[1, 2, 3]]);
    pb.append(0, still, 1);
    expect(pb.frameAt(0)?.joints).toEqual(pb.frameAt(7)?.joints);
  });

  it("rejects malformed position arrays without crashing the caller", () => {
    expect(() => validatePositions([], 4)).toThrow(ShapeError);
    expect(() => validatePositions([[[0, 0, 0]]], 4)).toThrow(ShapeError);
    expect(() => validatePositions([[[0, 0], [0, 0], [0, 0], [0, 0]]], 4)).toThrow(
      ShapeError,
    );
    const good = frames(2);
    expect(validatePositions(good, 4)).toBe(good);
  });

  it("handles the empty state as a placeholder, not an exception", () => {
    const pb = new Playback();
    expect(pb.totalFrames).toBe(0);
    expect(pb.frameAt(0)).toBeNull();
    expect(pb.frameIndexAt(3)).toBe(0);
  });
});
