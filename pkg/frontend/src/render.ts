// Canvas drawing of the latest server frames. Everything here is cosmetic:
// the numbers on screen are exactly what the bridge broadcast, never derived.

import type { SceneFrame, StateFrame, Vec2 } from './protocol';
import { poseApply, transformPolygon, worldToScreen, type Viewport } from './view';

export interface DrawOptions {
  showCloud: boolean;
  cutPreview: [Vec2, Vec2] | null;
  editMode: boolean;
}

const COLORS = {
  grid: '#e8e4da',
  gridAxis: '#d0ccc0',
  workspace: '#b8b2a4',
  fixedFill: '#c9c4b8',
  fixedEdge: '#8a8478',
  freeFill: '#e8c88f',
  freeEdge: '#a07830',
  distractorFill: '#cdb8d8',
  distractorEdge: '#8868a0',
  attachedEdge: '#c03820',
  site: '#a04040',
  jointAxis: '#4668a8',
  ee: '#205080',
  eeClosed: '#c03820',
  cloud: 'rgba(40, 110, 70, 0.65)',
  cut: '#c03820',
  banner: '#244024',
};

function polyCenter(poly: Vec2[]): Vec2 {
  let x = 0;
  let y = 0;
  for (const p of poly) {
    x += p[0];
    y += p[1];
  }
  return [x / poly.length, y / poly.length];
}

function tracePath(ctx: CanvasRenderingContext2D, v: Viewport, pts: Vec2[]): void {
  ctx.beginPath();
  pts.forEach((p, i) => {
    const [sx, sy] = worldToScreen(v, p);
    if (i === 0) ctx.moveTo(sx, sy);
    else ctx.lineTo(sx, sy);
  });
  ctx.closePath();
}

function drawGrid(ctx: CanvasRenderingContext2D, v: Viewport): void {
  const step = 0.1;
  const halfW = v.width / 2 / v.scale;
  const halfH = v.height / 2 / v.scale;
  ctx.lineWidth = 1;
  for (let x = Math.floor((v.cx - halfW) / step) * step; x <= v.cx + halfW; x += step) {
    const [sx] = worldToScreen(v, [x, 0]);
    ctx.strokeStyle = Math.abs(x) < step / 2 ? COLORS.gridAxis : COLORS.grid;
    ctx.beginPath();
    ctx.moveTo(sx, 0);
    ctx.lineTo(sx, v.height);
    ctx.stroke();
  }
  for (let y = Math.floor((v.cy - halfH) / step) * step; y <= v.cy + halfH; y += step) {
    const [, sy] = worldToScreen(v, [0, y]);
    ctx.strokeStyle = Math.abs(y) < step / 2 ? COLORS.gridAxis : COLORS.grid;
    ctx.beginPath();
    ctx.moveTo(0, sy);
    ctx.lineTo(v.width, sy);
    ctx.stroke();
  }
}

function drawBodies(
  ctx: CanvasRenderingContext2D, v: Viewport,
  scene: SceneFrame, state: StateFrame,
): void {
  for (const body of scene.scene.bodies) {
    const pose = state.poses[body.id] ?? body.pose;
    const world = transformPolygon(pose, body.polygon);
    const attached = state.attached === body.id;
    ctx.fillStyle = body.distractor ? COLORS.distractorFill
      : body.fixed ? COLORS.fixedFill : COLORS.freeFill;
    ctx.strokeStyle = attached ? COLORS.attachedEdge
      : body.distractor ? COLORS.distractorEdge
        : body.fixed ? COLORS.fixedEdge : COLORS.freeEdge;
    ctx.lineWidth = attached ? 3 : 1.5;
    tracePath(ctx, v, world);
    ctx.fill();
    ctx.stroke();

    ctx.fillStyle = COLORS.fixedEdge;
    ctx.font = '11px sans-serif';
    ctx.textAlign = 'center';
    const [cx, cy] = worldToScreen(v, poseApply(pose, polyCenter(body.polygon)));
    ctx.fillText(body.id, cx, cy - 4);

    ctx.strokeStyle = COLORS.site;
    for (const [name, local] of Object.entries(body.sites)) {
      const [sx, sy] = worldToScreen(v, poseApply(pose, local));
      ctx.beginPath();
      ctx.moveTo(sx - 4, sy);
      ctx.lineTo(sx + 4, sy);
      ctx.moveTo(sx, sy - 4);
      ctx.lineTo(sx, sy + 4);
      ctx.stroke();
      ctx.fillStyle = COLORS.site;
      ctx.fillText(name, sx, sy + 14);
    }
  }
}

function drawJoints(
  ctx: CanvasRenderingContext2D, v: Viewport,
  scene: SceneFrame, state: StateFrame,
): void {
  ctx.strokeStyle = COLORS.jointAxis;
  ctx.fillStyle = COLORS.jointAxis;
  ctx.lineWidth = 1.5;
  for (const joint of scene.scene.joints) {
    const parentPose = state.poses[joint.parent];
    if (!parentPose) continue;
    if (joint.kind === 'prismatic' && joint.axis) {
      const child = scene.scene.bodies.find(b => b.id === joint.child);
      const childPose = child ? state.poses[child.id] ?? child.pose : null;
      if (!child || !childPose) continue;
      const c = poseApply(childPose, polyCenter(child.polygon));
      const th = parentPose[2];
      const dir: Vec2 = [
        Math.cos(th) * joint.axis[0] - Math.sin(th) * joint.axis[1],
        Math.sin(th) * joint.axis[0] + Math.cos(th) * joint.axis[1],
      ];
      const len = 0.07;
      const a = worldToScreen(v, [c[0] - dir[0] * len, c[1] - dir[1] * len]);
      const b = worldToScreen(v, [c[0] + dir[0] * len, c[1] + dir[1] * len]);
      ctx.beginPath();
      ctx.moveTo(a[0], a[1]);
      ctx.lineTo(b[0], b[1]);
      ctx.stroke();
      // arrowhead at the +axis end
      const ang = Math.atan2(b[1] - a[1], b[0] - a[0]);
      ctx.beginPath();
      ctx.moveTo(b[0], b[1]);
      ctx.lineTo(b[0] - 7 * Math.cos(ang - 0.4), b[1] - 7 * Math.sin(ang - 0.4));
      ctx.lineTo(b[0] - 7 * Math.cos(ang + 0.4), b[1] - 7 * Math.sin(ang + 0.4));
      ctx.closePath();
      ctx.fill();
    } else if (joint.kind === 'revolute' && joint.anchor) {
      const [sx, sy] = worldToScreen(v, poseApply(parentPose, joint.anchor));
      ctx.beginPath();
      ctx.arc(sx, sy, 5, 0, 2 * Math.PI);
      ctx.stroke();
      ctx.beginPath();
      ctx.arc(sx, sy, 1.5, 0, 2 * Math.PI);
      ctx.fill();
    }
  }
}

function drawRobot(ctx: CanvasRenderingContext2D, v: Viewport, state: StateFrame): void {
  const [x, y, th] = state.ee;
  const open = state.gripper === 'open';
  ctx.strokeStyle = open ? COLORS.ee : COLORS.eeClosed;
  ctx.fillStyle = ctx.strokeStyle;
  ctx.lineWidth = 2;
  const heading: Vec2 = [Math.cos(th), Math.sin(th)];
  const side: Vec2 = [-heading[1], heading[0]];
  const gap = open ? 0.018 : 0.007;
  for (const sgn of [-1, 1]) {
    const ox = x + sgn * side[0] * gap;
    const oy = y + sgn * side[1] * gap;
    const a = worldToScreen(v, [ox - heading[0] * 0.012, oy - heading[1] * 0.012]);
    const b = worldToScreen(v, [ox + heading[0] * 0.016, oy + heading[1] * 0.016]);
    ctx.beginPath();
    ctx.moveTo(a[0], a[1]);
    ctx.lineTo(b[0], b[1]);
    ctx.stroke();
  }
  const base = worldToScreen(v, [x - heading[0] * 0.016, y - heading[1] * 0.016]);
  ctx.beginPath();
  ctx.arc(base[0], base[1], 4, 0, 2 * Math.PI);
  ctx.fill();
}

function drawCloud(ctx: CanvasRenderingContext2D, v: Viewport, cloud: Vec2[]): void {
  ctx.fillStyle = COLORS.cloud;
  for (const p of cloud) {
    const [sx, sy] = worldToScreen(v, p);
    ctx.fillRect(sx - 1, sy - 1, 2.5, 2.5);
  }
}

function drawBanner(ctx: CanvasRenderingContext2D, v: Viewport, state: StateFrame): void {
  const parts = [`t=${state.t}`, `reward=${state.reward}`];
  if (state.done) parts.push('DONE');
  if (state.recording) parts.push('REC');
  ctx.fillStyle = state.recording ? COLORS.cut : COLORS.banner;
  ctx.font = 'bold 13px sans-serif';
  ctx.textAlign = 'left';
  ctx.fillText(parts.join('   '), 10, 18);
  if (state.done) {
    ctx.fillStyle = state.reward > 0 ? COLORS.banner : COLORS.cut;
    ctx.font = 'bold 22px sans-serif';
    ctx.textAlign = 'center';
    ctx.fillText(state.reward > 0 ? 'SUCCESS' : 'EPISODE OVER', v.width / 2, 44);
  }
}

export function drawFrame(
  ctx: CanvasRenderingContext2D, v: Viewport,
  scene: SceneFrame | null, state: StateFrame | null,
  opts: DrawOptions,
): void {
  ctx.fillStyle = '#f6f3ec';
  ctx.fillRect(0, 0, v.width, v.height);
  drawGrid(ctx, v);

  if (scene) {
    const [lo, hi] = scene.scene.workspace;
    ctx.strokeStyle = COLORS.workspace;
    ctx.lineWidth = 1;
    ctx.setLineDash([6, 4]);
    tracePath(ctx, v, [[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]]);
    ctx.stroke();
    ctx.setLineDash([]);
  }

  if (scene && state) {
    drawBodies(ctx, v, scene, state);
    drawJoints(ctx, v, scene, state);
    if (opts.showCloud) drawCloud(ctx, v, state.pointcloud);
    drawRobot(ctx, v, state);
    drawBanner(ctx, v, state);
  }

  if (opts.cutPreview) {
    const a = worldToScreen(v, opts.cutPreview[0]);
    const b = worldToScreen(v, opts.cutPreview[1]);
    ctx.strokeStyle = COLORS.cut;
    ctx.lineWidth = 2;
    ctx.setLineDash([8, 5]);
    ctx.beginPath();
    ctx.moveTo(a[0], a[1]);
    ctx.lineTo(b[0], b[1]);
    ctx.stroke();
    ctx.setLineDash([]);
  }

  if (opts.editMode) {
    ctx.fillStyle = COLORS.cut;
    ctx.font = 'bold 13px sans-serif';
    ctx.textAlign = 'right';
    ctx.fillText('EDIT: drag to cut', v.width - 10, 18);
  }
}
