// World <-> screen mapping and the little planar geometry the client needs.
// The server owns all semantics; this file only places pixels.

import type { Pose, Vec2 } from './protocol';

export interface Viewport {
  scale: number; // pixels per meter
  cx: number; // world point mapped to canvas center, x
  cy: number;
  width: number;
  height: number;
}

// Fit the workspace rectangle into the canvas with a margin, y axis up.
export function fitViewport(
  workspace: [Vec2, Vec2], width: number, height: number, margin = 24,
): Viewport {
  const [lo, hi] = workspace;
  const spanX = Math.max(hi[0] - lo[0], 1e-6);
  const spanY = Math.max(hi[1] - lo[1], 1e-6);
  const scale = Math.min(
    (width - 2 * margin) / spanX,
    (height - 2 * margin) / spanY,
  );
  return {
    scale,
    cx: (lo[0] + hi[0]) / 2,
    cy: (lo[1] + hi[1]) / 2,
    width,
    height,
  };
}

export function worldToScreen(v: Viewport, p: Vec2): Vec2 {
  return [
    v.width / 2 + (p[0] - v.cx) * v.scale,
    v.height / 2 - (p[1] - v.cy) * v.scale,
  ];
}

export function screenToWorld(v: Viewport, p: Vec2): Vec2 {
  return [
    v.cx + (p[0] - v.width / 2) / v.scale,
    v.cy - (p[1] - v.height / 2) / v.scale,
  ];
}

export function poseApply(pose: Pose, p: Vec2): Vec2 {
  const [x, y, th] = pose;
  const c = Math.cos(th);
  const s = Math.sin(th);
  return [x + c * p[0] - s * p[1], y + s * p[0] + c * p[1]];
}

export function transformPolygon(pose: Pose, poly: Vec2[]): Vec2[] {
  return poly.map(p => poseApply(pose, p));
}

export function pointInPolygon(poly: Vec2[], p: Vec2): boolean {
  // ray cast to +x; boundary treatment is irrelevant for click picking
  let inside = false;
  for (let i = 0, j = poly.length - 1; i < poly.length; j = i++) {
    const [xi, yi] = poly[i];
    const [xj, yj] = poly[j];
    if ((yi > p[1]) !== (yj > p[1])
        && p[0] < ((xj - xi) * (p[1] - yi)) / (yj - yi) + xi) {
      inside = !inside;
    }
  }
  return inside;
}
