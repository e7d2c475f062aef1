/** Camera math for the 3D trajectory view: yaw/pitch orbit with an
 * orthographic projection onto the canvas plane. */

export type Vec3 = [number, number, number];

export interface Camera {
  yawRad: number;
  pitchRad: number;
  zoom: number;
}

export function defaultCamera(): Camera {
  return { yawRad: 0.6, pitchRad: -0.45, zoom: 1.0 };
}

/** Row-major 3x3 rotation: yaw about the y axis, then pitch about x. */
export function rotationMatrix(yawRad: number, pitchRad: number): number[][] {
  const cy = Math.cos(yawRad);
  const sy = Math.sin(yawRad);
  const cp = Math.cos(pitchRad);
  const sp = Math.sin(pitchRad);
  // R = Rx(pitch) * Ry(yaw)
  return [
    [cy, 0, sy],
    [sy * sp, cp, -cy * sp],
    [-sy * cp, sp, cy * cp],
  ];
}

export function applyRotation(m: number[][], v: Vec3): Vec3 {
  return [
    m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
    m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
    m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
  ];
}

/** Center the path on its centroid and scale the largest extent to 1. */
export function normalizePath(path: number[][]): Vec3[] {
  const n = path[0].length;
  const centroid: Vec3 = [0, 0, 0];
  for (let d = 0; d < 3; d++) {
    for (let t = 0; t < n; t++) {
      centroid[d] += path[d][t];
    }
    centroid[d] /= n;
  }
  let extent = 0;
  for (let d = 0; d < 3; d++) {
    for (let t = 0; t < n; t++) {
      extent = Math.max(extent, Math.abs(path[d][t] - centroid[d]));
    }
  }
  const scale = extent > 0 ? 1 / extent : 1;
  const out: Vec3[] = [];
  for (let t = 0; t < n; t++) {
    out.push([
      (path[0][t] - centroid[0]) * scale,
      (path[1][t] - centroid[1]) * scale,
      (path[2][t] - centroid[2]) * scale,
    ]);
  }
  return out;
}

/** Project normalized 3D points to canvas pixels (orthographic). */
export function projectPath(
  points: Vec3[],
  camera: Camera,
  width: number,
  height: number,
): Array<[number, number]> {
  const m = rotationMatrix(camera.yawRad, camera.pitchRad);
  const half = Math.min(width, height) * 0.42 * camera.zoom;
  const cx = width / 2;
  const cy = height / 2;
  return points.map((p) => {
    const r = applyRotation(m, p);
    return [cx + r[0] * half, cy - r[1] * half];
  });
}
