// Application wiring: DOM, websocket, keyboard, canvas. All state that
// matters lives on the server; this file keeps only the latest frames and
// what the widgets need to build the next message.

import { BridgeClient, serverUrl, type ClientStatus } from './client';
import { CutTool, jointMessage, type JointFormFields } from './edit';
import { KeyGate, keyMessage } from './keymap';
import type { ClientMessage, ErrorFrame, SceneFrame, StateFrame } from './protocol';
import { drawFrame } from './render';
import { fitViewport, screenToWorld, type Viewport } from './view';

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

const canvas = el<HTMLCanvasElement>('scene-canvas');
const ctx = canvas.getContext('2d')!;
const statusDot = el<HTMLSpanElement>('status-dot');
const statusText = el<HTMLSpanElement>('status-text');
const sceneSelect = el<HTMLSelectElement>('scene-select');
const loadBtn = el<HTMLButtonElement>('load-btn');
const domainSelect = el<HTMLSelectElement>('domain-select');
const seedInput = el<HTMLInputElement>('seed-input');
const resetBtn = el<HTMLButtonElement>('reset-btn');
const recordPath = el<HTMLInputElement>('record-path');
const recordBtn = el<HTMLButtonElement>('record-btn');
const cloudToggle = el<HTMLInputElement>('cloud-toggle');
const editToggle = el<HTMLInputElement>('edit-toggle');
const jointForm = el<HTMLFormElement>('joint-form');
const logPane = el<HTMLDivElement>('log');
const reconnectBtn = el<HTMLButtonElement>('reconnect-btn');
const bannerPane = el<HTMLDivElement>('banner');

let scene: SceneFrame | null = null;
let state: StateFrame | null = null;
let viewport: Viewport = fitViewport([[-1, -1], [1, 1]], canvas.width, canvas.height);
let dirty = true;

const cut = new CutTool();
const keys = new KeyGate();

function log(text: string, cls = ''): void {
  const line = document.createElement('div');
  line.textContent = text;
  if (cls) line.className = cls;
  logPane.prepend(line);
  while (logPane.childElementCount > 60) logPane.lastElementChild!.remove();
}

function banner(text: string): void {
  bannerPane.textContent = text;
  bannerPane.style.display = text ? 'block' : 'none';
}

function redraw(): void {
  dirty = true;
}

function frameLoop(): void {
  if (dirty) {
    dirty = false;
    drawFrame(ctx, viewport, scene, state, {
      showCloud: cloudToggle.checked,
      cutPreview: cut.preview(),
      editMode: editToggle.checked,
    });
  }
  requestAnimationFrame(frameLoop);
}

const client = new BridgeClient(serverUrl(location.search), {
  onFrame: frame => {
    switch (frame.type) {
      case 'hello':
        sceneSelect.replaceChildren(...frame.scenes.map(name => {
          const opt = document.createElement('option');
          opt.value = name;
          opt.textContent = name;
          return opt;
        }));
        log(`connected, protocol ${frame.protocol}`);
        banner('');
        break;
      case 'scene':
        scene = frame;
        viewport = fitViewport(frame.scene.workspace, canvas.width, canvas.height);
        domainSelect.value = frame.domain;
        log(`scene ${frame.name} (${frame.domain})`);
        break;
      case 'state':
        state = frame;
        recordBtn.textContent = frame.recording ? 'stop recording' : 'record';
        break;
      case 'ack':
        if (frame.op === 'record' && frame.recording === false) {
          log(`saved ${frame.path} (${frame.steps} steps, `
            + `${frame.success ? 'success' : 'no success'})`, 'ok');
        } else if (frame.op !== 'load_scene') {
          log(`ok: ${frame.op}`);
        }
        break;
      case 'error':
        log(`${(frame as ErrorFrame).code}: ${(frame as ErrorFrame).message ?? ''}`, 'err');
        break;
    }
    redraw();
  },
  onStatus: (s: ClientStatus) => {
    statusDot.className = `dot ${s}`;
    statusText.textContent = s;
    reconnectBtn.style.display = s === 'closed' ? 'inline-block' : 'none';
    if (s === 'closed') banner('connection lost; press reconnect');
    else if (s === 'open') banner('');
    keys.clear();
  },
  onProtocolError: detail => {
    banner(`protocol mismatch: ${detail}; reload or reconnect`);
    log(`protocol: ${detail}`, 'err');
  },
});

function send(msg: ClientMessage): void {
  if (!client.send(msg)) log('not connected', 'err');
}

// --- controls -----------------------------------------------------------------

loadBtn.onclick = () => {
  send({ type: 'load_scene', scene: sceneSelect.value, seed: Number(seedInput.value) || 0 });
};

resetBtn.onclick = () => {
  send({ type: 'reset', seed: Number(seedInput.value) || 0 });
};

domainSelect.onchange = () => {
  send({ type: 'set_domain', domain: domainSelect.value as 'sim' | 'proxy' });
};

recordBtn.onclick = () => {
  if (state?.recording) send({ type: 'record', op: 'stop' });
  else send({ type: 'record', op: 'start', path: recordPath.value || 'session.demo' });
};

cloudToggle.onchange = redraw;
editToggle.onchange = () => {
  cut.cancel();
  redraw();
};

reconnectBtn.onclick = () => client.connect();

jointForm.onsubmit = ev => {
  ev.preventDefault();
  const fields: JointFormFields = {
    id: el<HTMLInputElement>('joint-id').value,
    parent: el<HTMLInputElement>('joint-parent').value,
    child: el<HTMLInputElement>('joint-child').value,
    kind: el<HTMLSelectElement>('joint-kind').value,
    axis: el<HTMLInputElement>('joint-axis').value,
    anchor: el<HTMLInputElement>('joint-anchor').value,
    limits: el<HTMLInputElement>('joint-limits').value,
  };
  const msg = jointMessage(fields);
  if (typeof msg === 'string') log(msg, 'err');
  else send(msg);
};

// --- keyboard teleop ------------------------------------------------------------

window.addEventListener('keydown', ev => {
  const target = ev.target as HTMLElement;
  if (target.tagName === 'INPUT' || target.tagName === 'SELECT'
      || target.tagName === 'TEXTAREA') return;
  if (!keys.press(ev.code, ev.repeat)) {
    if (ev.code === 'Space') ev.preventDefault();
    return;
  }
  const msg = keyMessage(ev.code, {
    gripper: state?.gripper ?? 'open',
    recording: state?.recording ?? false,
    recordPath: recordPath.value || 'session.demo',
  });
  if (msg) {
    ev.preventDefault();
    send(msg);
  }
});

window.addEventListener('keyup', ev => keys.release(ev.code));
window.addEventListener('blur', () => keys.clear());

// --- cut tool -------------------------------------------------------------------

canvas.addEventListener('mousedown', ev => {
  if (!editToggle.checked || !scene) return;
  const rect = canvas.getBoundingClientRect();
  cut.begin(screenToWorld(viewport, [ev.clientX - rect.left, ev.clientY - rect.top]));
  redraw();
});

canvas.addEventListener('mousemove', ev => {
  if (!cut.preview()) return;
  const rect = canvas.getBoundingClientRect();
  cut.drag(screenToWorld(viewport, [ev.clientX - rect.left, ev.clientY - rect.top]));
  redraw();
});

canvas.addEventListener('mouseup', ev => {
  if (!cut.preview() || !scene) return;
  const rect = canvas.getBoundingClientRect();
  const msg = cut.finish(
    screenToWorld(viewport, [ev.clientX - rect.left, ev.clientY - rect.top]),
    scene.scene,
  );
  if (msg) send(msg);
  redraw();
});

canvas.addEventListener('mouseleave', () => {
  cut.cancel();
  redraw();
});

client.connect();
frameLoop();
