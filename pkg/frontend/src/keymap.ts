// Keyboard teleop: one message per physical key press. Browsers auto-repeat
// keydown while a key is held, so both the event's repeat flag and a held-key
// set gate the mapping (the flag alone is unreliable across platforms).

import type { ActionName, ClientMessage } from './protocol';

const MOVE_KEYS: Record<string, ActionName> = {
  KeyW: '+y',
  KeyS: '-y',
  KeyA: '-x',
  KeyD: '+x',
  KeyQ: '+rot',
  KeyE: '-rot',
};

export interface KeyContext {
  gripper: 'open' | 'closed';
  recording: boolean;
  recordPath: string;
}

// code is KeyboardEvent.code (layout-independent physical key)
export function keyMessage(code: string, ctx: KeyContext): ClientMessage | null {
  const move = MOVE_KEYS[code];
  if (move) return { type: 'action', name: move };
  switch (code) {
    case 'Space':
      return { type: 'action', name: ctx.gripper === 'open' ? 'close' : 'open' };
    case 'KeyR':
      return { type: 'reset' };
    case 'F9':
      return ctx.recording
        ? { type: 'record', op: 'stop' }
        : { type: 'record', op: 'start', path: ctx.recordPath };
    default:
      return null;
  }
}

export class KeyGate {
  private held = new Set<string>();

  // returns true exactly once per physical press
  press(code: string, repeat: boolean): boolean {
    if (repeat || this.held.has(code)) return false;
    this.held.add(code);
    return true;
  }

  release(code: string): void {
    this.held.delete(code);
  }

  clear(): void {
    this.held.clear();
  }
}
