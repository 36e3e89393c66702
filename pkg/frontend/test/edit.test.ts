import { describe, expect, it } from 'vitest';
import { bodyAt, CutTool, jointMessage, parsePair } from '../src/edit';
import type { SceneDict } from '../src/protocol';

function body(id: string, x: number, y: number, opts: Partial<SceneDict['bodies'][0]> = {}) {
  return {
    id,
    polygon: [[-0.05, -0.05], [0.05, -0.05], [0.05, 0.05], [-0.05, 0.05]],
    pose: [x, y, 0],
    fixed: false,
    graspable: false,
    mass: 1,
    friction: 0.5,
    sites: {},
    distractor: false,
    ...opts,
  } as SceneDict['bodies'][0];
}

const SCENE: SceneDict = {
  format: 'scene',
  version: 1,
  name: 'test',
  workspace: [[-1, -1], [1, 1]],
  bodies: [body('table', 0, 0), body('block', 0.3, 0.3)],
  joints: [],
  robot: { start: [0, -0.5, 0], grasp_radius: 0.02, ee_radius: 0.012 },
  camera: { pose: [0, -0.8, Math.PI / 2], fov: 1.4 },
  episode_length: 50,
};

describe('bodyAt', () => {
  it('picks the body containing the point, preferring later bodies', () => {
    expect(bodyAt(SCENE, [0.3, 0.3])?.id).toBe('block');
    expect(bodyAt(SCENE, [0.01, -0.02])?.id).toBe('table');
    expect(bodyAt(SCENE, [0.7, 0.7])).toBeNull();
  });
});

describe('CutTool', () => {
  it('builds an edit_cut for the body under the segment midpoint', () => {
    const tool = new CutTool();
    tool.begin([0.3, 0.2]);
    tool.drag([0.3, 0.35]);
    const msg = tool.finish([0.3, 0.4], SCENE);
    expect(msg).toEqual({
      type: 'edit_cut', body: 'block', segment: [[0.3, 0.2], [0.3, 0.4]],
    });
    expect(tool.preview()).toBeNull(); // drag state consumed
  });

  it('treats a click without drag as nothing', () => {
    const tool = new CutTool();
    tool.begin([0.3, 0.3]);
    expect(tool.finish([0.3, 0.3], SCENE)).toBeNull();
  });

  it('returns nothing when the stroke misses every body', () => {
    const tool = new CutTool();
    tool.begin([0.8, 0.8]);
    expect(tool.finish([0.9, 0.9], SCENE)).toBeNull();
  });

  it('cancel clears the preview', () => {
    const tool = new CutTool();
    tool.begin([0, 0]);
    tool.drag([0.1, 0]);
    expect(tool.preview()).not.toBeNull();
    tool.cancel();
    expect(tool.preview()).toBeNull();
    expect(tool.finish([0.2, 0], SCENE)).toBeNull();
  });
});

describe('jointMessage', () => {
  const base = {
    id: 'rail', parent: 'table', child: 'block', kind: 'prismatic',
    axis: '0,-1', anchor: '', limits: '0,0.3',
  };

  it('builds a prismatic joint with axis and limits', () => {
    expect(jointMessage(base)).toEqual({
      type: 'edit_add_joint',
      joint: {
        id: 'rail', parent: 'table', child: 'block', kind: 'prismatic',
        axis: [0, -1], limits: [0, 0.3],
      },
    });
  });

  it('builds a revolute joint from an anchor', () => {
    const msg = jointMessage({
      ...base, id: 'hinge', kind: 'revolute', axis: '', anchor: '0.1, 0.2', limits: '',
    });
    expect(msg).toEqual({
      type: 'edit_add_joint',
      joint: { id: 'hinge', parent: 'table', child: 'block', kind: 'revolute',
               anchor: [0.1, 0.2] },
    });
  });

  it('complains in plain words instead of sending broken payloads', () => {
    expect(jointMessage({ ...base, id: ' ' })).toMatch(/needs an id/);
    expect(jointMessage({ ...base, kind: 'magnet' })).toMatch(/unknown joint kind/);
    expect(jointMessage({ ...base, axis: '1' })).toMatch(/needs an axis/);
    expect(jointMessage({ ...base, limits: 'a,b' })).toMatch(/limits/);
    expect(jointMessage({ ...base, child: '' })).toMatch(/parent and child/);
  });
});

describe('parsePair', () => {
  it('parses comma pairs with spaces and rejects junk', () => {
    expect(parsePair('0,-1')).toEqual([0, -1]);
    expect(parsePair(' 0.5 , 2 ')).toEqual([0.5, 2]);
    expect(parsePair('1')).toBeNull();
    expect(parsePair('a,b')).toBeNull();
    expect(parsePair('1,2,3')).toBeNull();
  });
});
