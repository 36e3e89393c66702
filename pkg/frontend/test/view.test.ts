import { describe, expect, it } from 'vitest';
import {
  fitViewport, pointInPolygon, poseApply, screenToWorld, transformPolygon,
  worldToScreen,
} from '../src/view';
import type { Vec2 } from '../src/protocol';

describe('viewport', () => {
  const v = fitViewport([[-0.75, -0.75], [0.75, 0.85]], 760, 640);

  it('centers the workspace and keeps it inside the canvas', () => {
    const corners: Vec2[] = [[-0.75, -0.75], [0.75, 0.85], [-0.75, 0.85], [0.75, -0.75]];
    for (const c of corners) {
      const [sx, sy] = worldToScreen(v, c);
      expect(sx).toBeGreaterThanOrEqual(0);
      expect(sx).toBeLessThanOrEqual(760);
      expect(sy).toBeGreaterThanOrEqual(0);
      expect(sy).toBeLessThanOrEqual(640);
    }
  });

  it('screenToWorld inverts worldToScreen', () => {
    for (const p of [[0.1, 0.2], [-0.4, 0.7], [0, 0]] as Vec2[]) {
      const back = screenToWorld(v, worldToScreen(v, p));
      expect(back[0]).toBeCloseTo(p[0], 10);
      expect(back[1]).toBeCloseTo(p[1], 10);
    }
  });

  it('flips the y axis (world up is screen up)', () => {
    const low = worldToScreen(v, [0, -0.5]);
    const high = worldToScreen(v, [0, 0.5]);
    expect(high[1]).toBeLessThan(low[1]);
  });
});

describe('pose transforms', () => {
  it('matches hand values for a quarter turn plus offset', () => {
    const p = poseApply([1, 2, Math.PI / 2], [0.3, 0]);
    expect(p[0]).toBeCloseTo(1, 12);
    expect(p[1]).toBeCloseTo(2.3, 12);
  });

  it('transforms whole polygons pointwise', () => {
    const square: Vec2[] = [[-1, -1], [1, -1], [1, 1], [-1, 1]];
    const moved = transformPolygon([5, 0, 0], square);
    expect(moved[2]).toEqual([6, 1]);
  });
});

describe('pointInPolygon', () => {
  const square: Vec2[] = [[0, 0], [1, 0], [1, 1], [0, 1]];

  it('separates inside from outside', () => {
    expect(pointInPolygon(square, [0.5, 0.5])).toBe(true);
    expect(pointInPolygon(square, [1.5, 0.5])).toBe(false);
    expect(pointInPolygon(square, [0.5, -0.1])).toBe(false);
  });

  it('handles non-axis-aligned shapes', () => {
    const tri: Vec2[] = [[0, 0], [2, 0], [1, 2]];
    expect(pointInPolygon(tri, [1, 0.5])).toBe(true);
    expect(pointInPolygon(tri, [0.1, 1.5])).toBe(false);
  });
});
