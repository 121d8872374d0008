// Orthographic three-quarter camera with orbit controls. World axes follow
// the service skeleton (Y-up by default); the camera rotates around the
// target point with yaw about the up axis and pitch toward it.

export interface Camera {
  yaw: number;      // radians about the up axis
  pitch: number;    // radians above the ground plane
  scale: number;    // pixels per meter
  target: [number, number, number];
  upAxis: "y" | "z";
}

export function defaultCamera(upAxis: "y" | "z" = "y"): Camera {
  return {
    yaw: Math.PI / 4,
    pitch: Math.PI / 6,
    scale: 120,
    target: [0, upAxis === "y" ? 0.8 : 0, upAxis === "y" ? 0 : 0.8],
    upAxis,
  };
}

/** World point -> view-space [right, up, depth] before pixel scaling. */
export function toView(cam: Camera, p: [number, number, number]): [number, number, number] {
  let [x, y, z] = [p[0] - cam.target[0], p[1] - cam.target[1], p[2] - cam.target[2]];
  if (cam.upAxis === "z") {
    // express z-up worlds in the y-up view convention
    [x, y, z] = [x, z, -y];
  }
  const cy = Math.cos(cam.yaw);
  const sy = Math.sin(cam.yaw);
  const rx = cy * x - sy * z;
  const rz = sy * x + cy * z;
  const cp = Math.cos(cam.pitch);
  const sp = Math.sin(cam.pitch);
  const vy = cp * y - sp * rz;
  const vz = sp * y + cp * rz;
  return [rx, vy, vz];
}

/** World point -> canvas pixels (origin at canvas center, y down). */
export function project(
  cam: Camera,
  p: [number, number, number],
  width: number,
  height: number,
): [number, number] {
  const [vx, vy] = toView(cam, p);
  return [width / 2 + vx * cam.scale, height / 2 - vy * cam.scale];
}

export function orbit(cam: Camera, dxPixels: number, dyPixels: number): Camera {
  const yaw = cam.yaw + dxPixels * 0.01;
  const pitch = Math.min(Math.max(cam.pitch + dyPixels * 0.01, -1.4), 1.4);
  return { ...cam, yaw, pitch };
}

export function zoom(cam: Camera, factor: number): Camera {
  const scale = Math.min(Math.max(cam.scale * factor, 10), 2000);
  return { ...cam, scale };
}
