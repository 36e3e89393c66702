// Edit tools: a drag-to-cut state machine and the add-joint form payload.
// Both only assemble messages; whether an edit is legal is the server's call.

import type { BodyDict, ClientMessage, JointSpec, SceneDict, Vec2 } from './protocol';
import { pointInPolygon, transformPolygon } from './view';

export function bodyAt(scene: SceneDict, p: Vec2): BodyDict | null {
  // later bodies drawn on top, so pick in reverse order
  for (let i = scene.bodies.length - 1; i >= 0; i--) {
    const b = scene.bodies[i];
    if (pointInPolygon(transformPolygon(b.pose, b.polygon), p)) return b;
  }
  return null;
}

export class CutTool {
  private start: Vec2 | null = null;
  private current: Vec2 | null = null;

  begin(p: Vec2): void {
    this.start = p;
    this.current = p;
  }

  drag(p: Vec2): void {
    if (this.start) this.current = p;
  }

  // segment endpoints for preview drawing, or null when not dragging
  preview(): [Vec2, Vec2] | null {
    return this.start && this.current ? [this.start, this.current] : null;
  }

  cancel(): void {
    this.start = null;
    this.current = null;
  }

  // Finish the drag: the cut applies to the body under the segment midpoint,
  // so a stroke across a body cuts that body even if it starts outside.
  finish(p: Vec2, scene: SceneDict): ClientMessage | null {
    const seg = this.start ? ([this.start, p] as [Vec2, Vec2]) : null;
    this.cancel();
    if (!seg) return null;
    const dx = seg[1][0] - seg[0][0];
    const dy = seg[1][1] - seg[0][1];
    if (Math.hypot(dx, dy) < 1e-4) return null; // click, not a drag
    const mid: Vec2 = [(seg[0][0] + seg[1][0]) / 2, (seg[0][1] + seg[1][1]) / 2];
    const body = bodyAt(scene, mid);
    if (!body) return null;
    return { type: 'edit_cut', body: body.id, segment: seg };
  }
}

export interface JointFormFields {
  id: string;
  parent: string;
  child: string;
  kind: string;
  axis: string; // "x,y", prismatic only
  anchor: string; // "x,y", revolute only
  limits: string; // "lo,hi" or empty
}

export function parsePair(text: string): Vec2 | null {
  const parts = text.split(',').map(s => Number(s.trim()));
  if (parts.length !== 2 || parts.some(Number.isNaN)) return null;
  return [parts[0], parts[1]];
}

// Build the edit_add_joint message, or a human-readable complaint.
export function jointMessage(f: JointFormFields): ClientMessage | string {
  if (!f.id.trim()) return 'joint needs an id';
  if (!f.parent.trim() || !f.child.trim()) return 'joint needs parent and child bodies';
  if (f.kind !== 'prismatic' && f.kind !== 'revolute' && f.kind !== 'fixed') {
    return `unknown joint kind '${f.kind}'`;
  }
  const joint: JointSpec = {
    id: f.id.trim(),
    parent: f.parent.trim(),
    child: f.child.trim(),
    kind: f.kind,
  };
  if (f.kind === 'prismatic') {
    const axis = parsePair(f.axis);
    if (!axis) return 'prismatic joint needs an axis like 0,-1';
    joint.axis = axis;
  }
  if (f.kind === 'revolute') {
    const anchor = parsePair(f.anchor);
    if (!anchor) return 'revolute joint needs an anchor like 0.1,0.2';
    joint.anchor = anchor;
  }
  if (f.limits.trim()) {
    const limits = parsePair(f.limits);
    if (!limits) return "limits must be 'lo,hi'";
    joint.limits = limits;
  }
  return { type: 'edit_add_joint', joint };
}
