// Canvas renderer: ground grid, root-path trace, and the line-segment
// skeleton for one frame, through the orthographic camera.

import type { Camera } from "./projection.js";
import { project } from "./projection.js";

export interface RenderStyle {
  background: string;
  grid: string;
  bone: string;
  joint: string;
  path: string;
}

export const DARK: RenderStyle = {
  background: "#111418",
  grid: "#2a3138",
  bone: "#7fd0ff",
  joint: "#e8f4ff",
  path: "#caa6ff",
};

function groundPoint(upAxis: "y" | "z", a: number, b: number): [number, number, number] {
  return upAxis === "y" ? [a, 0, b] : [a, b, 0];
}

export function drawGrid(
  ctx: CanvasRenderingContext2D,
  cam: Camera,
  width: number,
  height: number,
  extent = 4,
  style: RenderStyle = DARK,
): void {
  ctx.strokeStyle = style.grid;
  ctx.lineWidth = 1;
  for (let i = -extent; i <= extent; i++) {
    const a0 = project(cam, groundPoint(cam.upAxis, i, -extent), width, height);
    const a1 = project(cam, groundPoint(cam.upAxis, i, extent), width, height);
    const b0 = project(cam, groundPoint(cam.upAxis, -extent, i), width, height);
    const b1 = project(cam, groundPoint(cam.upAxis, extent, i), width, height);
    ctx.beginPath();
    ctx.moveTo(a0[0], a0[1]);
    ctx.lineTo(a1[0], a1[1]);
    ctx.moveTo(b0[0], b0[1]);
    ctx.lineTo(b1[0], b1[1]);
    ctx.stroke();
  }
}

export function drawRootPath(
  ctx: CanvasRenderingContext2D,
  cam: Camera,
  rootPath: [number, number][],
  width: number,
  height: number,
  style: RenderStyle = DARK,
): void {
  if (rootPath.length < 2) return;
  ctx.strokeStyle = style.path;
  ctx.lineWidth = 1.5;
  ctx.beginPath();
  rootPath.forEach(([a, b], i) => {
    const p = project(cam, groundPoint(cam.upAxis, a, b), width, height);
    if (i === 0) ctx.moveTo(p[0], p[1]);
    else ctx.lineTo(p[0], p[1]);
  });
  ctx.stroke();
}

export function drawSkeleton(
  ctx: CanvasRenderingContext2D,
  cam: Camera,
  joints: number[][],
  edges: [number, number][],
  width: number,
  height: number,
  style: RenderStyle = DARK,
): void {
  ctx.strokeStyle = style.bone;
  ctx.lineWidth = 2;
  ctx.beginPath();
  for (const [parent, child] of edges) {
    const a = project(cam, joints[parent] as [number, number, number], width, height);
    const b = project(cam, joints[child] as [number, number, number], width, height);
    ctx.moveTo(a[0], a[1]);
    ctx.lineTo(b[0], b[1]);
  }
  ctx.stroke();
  ctx.fillStyle = style.joint;
  for (const joint of joints) {
    const p = project(cam, joint as [number, number, number], width, height);
    ctx.fillRect(p[0] - 1.5, p[1] - 1.5, 3, 3);
  }
}

export function drawFrame(
  ctx: CanvasRenderingContext2D,
  cam: Camera,
  width: number,
  height: number,
  joints: number[][] | null,
  edges: [number, number][],
  rootPath: [number, number][],
  style: RenderStyle = DARK,
): void {
  ctx.fillStyle = style.background;
  ctx.fillRect(0, 0, width, height);
  drawGrid(ctx, cam, width, height, 4, style);
  drawRootPath(ctx, cam, rootPath, width, height, style);
  if (joints) drawSkeleton(ctx, cam, joints, edges, width, height, style);
}
