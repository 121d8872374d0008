// Stitched playback over the session's clips at a fixed 30 fps. Pure state;
// the renderer asks for the frame at a wall-clock time.

export const FPS = 30;

export interface ClipFrames {
  clipIndex: number;
  positions: number[][][]; // frames x joints x 3
}

export class ShapeError extends Error {}

export function validatePositions(positions: unknown, jointCount: number): number[][][] {
  if (!Array.isArray(positions) || positions.length === 0) {
    throw new ShapeError("positions must be a non-empty frames array");
  }
  for (const frame of positions as unknown[]) {
    if (!Array.isArray(frame) || frame.length !== jointCount) {
      throw new ShapeError(
        `each frame must list ${jointCount} joints, got ${(frame as unknown[])?.length}`,
      );
    }
    for (const joint of frame as unknown[]) {
      if (!Array.isArray(joint) || joint.length !== 3) {
        throw new ShapeError("each joint must be an [x, y, z] triple");
      }
    }
  }
  return positions as number[][][];
}

export class Playback {
  clips: ClipFrames[] = [];
  cursor = 0; // global frame index
  playing = false;

  get totalFrames(): number {
    return this.clips.reduce((acc, c) => acc + c.positions.length, 0);
  }

  get durationSeconds(): number {
    return this.totalFrames / FPS;
  }

  append(clipIndex: number, positions: number[][][], jointCount: number): void {
    this.clips.push({ clipIndex, positions: validatePositions(positions, jointCount) });
  }

  clear(): void {
    this.clips = [];
    this.cursor = 0;
    this.playing = false;
  }

  /** Global frame index at an elapsed playback time, clamped to the end. */
  frameIndexAt(seconds: number): number {
    if (this.totalFrames === 0) return 0;
    return Math.min(Math.floor(seconds * FPS), this.totalFrames - 1);
  }

  /** Frame positions for a global frame index, or null when empty. */
  frameAt(index: number): { clipIndex: number; joints: number[][] } | null {
    let remaining = index;
    for (const clip of this.clips) {
      if (remaining < clip.positions.length) {
        return { clipIndex: clip.clipIndex, joints: clip.positions[remaining] };
      }
      remaining -= clip.positions.length;
    }
    const last = this.clips[this.clips.length - 1];
    if (!last) return null;
    return {
      clipIndex: last.clipIndex,
      joints: last.positions[last.positions.length - 1],
    };
  }

  /** Start of a clip as a global frame index (for jump-to-clip). */
  clipStart(clipIndex: number): number {
    let acc = 0;
    for (const clip of this.clips) {
      if (clip.clipIndex === clipIndex) return acc;
      acc += clip.positions.length;
    }
    return 0;
  }
}
