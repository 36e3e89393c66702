// Typed mirror of the bridge websocket protocol (version 1). The shapes here
// must match what the server actually sends; parseFrame rejects anything else
// so a version skew surfaces as a banner instead of silent misrendering.

export const PROTOCOL_VERSION = 1;

export const ACTION_NAMES = [
  '+x', '-x', '+y', '-y', '+rot', '-rot', 'open', 'close',
] as const;
export type ActionName = (typeof ACTION_NAMES)[number];

export type Vec2 = [number, number];
export type Pose = [number, number, number];

export interface BodyDict {
  id: string;
  polygon: Vec2[];
  pose: Pose;
  fixed: boolean;
  graspable: boolean;
  mass: number;
  friction: number;
  sites: Record<string, Vec2>;
  distractor: boolean;
}

export interface JointDict {
  id: string;
  parent: string;
  child: string;
  kind: 'prismatic' | 'revolute' | 'fixed';
  axis: Vec2 | null;
  anchor: Vec2 | null;
  limits: Vec2;
  value: number;
  friction: number;
}

export interface SceneDict {
  format: string;
  version: number;
  name: string;
  workspace: [Vec2, Vec2];
  bodies: BodyDict[];
  joints: JointDict[];
  robot: { start: Pose; grasp_radius: number; ee_radius: number };
  camera: { pose: Pose; fov: number };
  episode_length: number;
}

export interface HelloFrame {
  type: 'hello';
  protocol: number;
  scenes: string[];
}

export interface AckFrame {
  type: 'ack';
  op: string;
  [extra: string]: unknown;
}

export interface SceneFrame {
  type: 'scene';
  name: string;
  domain: 'sim' | 'proxy';
  scene: SceneDict;
}

export interface StateFrame {
  type: 'state';
  poses: Record<string, Pose>;
  joints: Record<string, number>;
  ee: Pose;
  gripper: 'open' | 'closed';
  attached: string | null;
  t: number;
  reward: number;
  done: boolean;
  recording: boolean;
  pointcloud: Vec2[];
}

export interface ErrorFrame {
  type: 'error';
  code: string;
  message?: string;
}

export type ServerFrame =
  | HelloFrame | AckFrame | SceneFrame | StateFrame | ErrorFrame;

export class ProtocolError extends Error {}

function fail(why: string): never {
  throw new ProtocolError(why);
}

function isPose(v: unknown): v is Pose {
  return Array.isArray(v) && v.length === 3 && v.every(c => typeof c === 'number');
}

function isPointList(v: unknown): v is Vec2[] {
  return Array.isArray(v) && v.every(
    p => Array.isArray(p) && p.length === 2 && p.every(c => typeof c === 'number'));
}

// Field checks stay shallow past the top level: the server is trusted once a
// frame has the right shape, the point is catching protocol skew early.
export function parseFrame(raw: string): ServerFrame {
  let data: unknown;
  try {
    data = JSON.parse(raw);
  } catch {
    fail('frame is not JSON');
  }
  if (typeof data !== 'object' || data === null || Array.isArray(data)) {
    fail('frame is not an object');
  }
  const f = data as Record<string, unknown>;
  switch (f.type) {
    case 'hello':
      if (typeof f.protocol !== 'number' || !Array.isArray(f.scenes)) {
        fail('bad hello frame');
      }
      if (f.protocol !== PROTOCOL_VERSION) {
        fail(`server speaks protocol ${f.protocol}, client expects ${PROTOCOL_VERSION}`);
      }
      return f as unknown as HelloFrame;
    case 'ack':
      if (typeof f.op !== 'string') fail('ack frame without op');
      return f as unknown as AckFrame;
    case 'scene':
      if (typeof f.name !== 'string' || typeof f.scene !== 'object' || f.scene === null) {
        fail('bad scene frame');
      }
      return f as unknown as SceneFrame;
    case 'state': {
      if (!isPose(f.ee)) fail('state frame without ee pose');
      if (f.gripper !== 'open' && f.gripper !== 'closed') fail('bad gripper field');
      if (typeof f.poses !== 'object' || f.poses === null) fail('bad poses field');
      if (!isPointList(f.pointcloud)) fail('bad pointcloud field');
      if (typeof f.done !== 'boolean' || typeof f.recording !== 'boolean') {
        fail('bad state flags');
      }
      return f as unknown as StateFrame;
    }
    case 'error':
      if (typeof f.code !== 'string') fail('error frame without code');
      return f as unknown as ErrorFrame;
    default:
      fail(`unknown frame type ${JSON.stringify(f.type)}`);
  }
}

// --- client -> server messages ----------------------------------------------

export interface JointSpec {
  id: string;
  parent: string;
  child: string;
  kind: 'prismatic' | 'revolute' | 'fixed';
  axis?: Vec2;
  anchor?: Vec2;
  limits?: Vec2;
}

export type ClientMessage =
  | { type: 'load_scene'; scene: string; seed?: number }
  | { type: 'reset'; seed?: number }
  | { type: 'action'; name: ActionName }
  | { type: 'record'; op: 'start' | 'stop'; path?: string }
  | { type: 'edit_cut'; body: string; segment: [Vec2, Vec2] }
  | { type: 'edit_add_joint'; joint: JointSpec }
  | { type: 'set_domain'; domain: 'sim' | 'proxy'; seed?: number };

export function encode(msg: ClientMessage): string {
  return JSON.stringify(msg);
}
