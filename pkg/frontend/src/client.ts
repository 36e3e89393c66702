// Thin websocket wrapper: parse incoming frames, hand them to one callback,
// surface connection state. The socket constructor is injectable so tests can
// drive the same code over a node websocket implementation.

import { encode, parseFrame, type ClientMessage, type ServerFrame } from './protocol';

export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: ((ev?: unknown) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

export type ClientStatus = 'connecting' | 'open' | 'closed';

export interface ClientHooks {
  onFrame: (frame: ServerFrame) => void;
  onStatus: (status: ClientStatus) => void;
  onProtocolError: (detail: string) => void;
}

export class BridgeClient {
  private sock: SocketLike | null = null;
  status: ClientStatus = 'closed';

  constructor(
    private url: string,
    private hooks: ClientHooks,
    private factory: SocketFactory = u => new WebSocket(u) as unknown as SocketLike,
  ) {}

  connect(): void {
    if (this.sock) this.sock.close();
    this.setStatus('connecting');
    const sock = this.factory(this.url);
    this.sock = sock;
    sock.onopen = () => this.setStatus('open');
    sock.onclose = () => {
      if (this.sock === sock) this.setStatus('closed');
    };
    sock.onerror = () => {
      // onclose follows; nothing useful in the event object cross-platform
    };
    sock.onmessage = ev => {
      try {
        this.hooks.onFrame(parseFrame(String(ev.data)));
      } catch (e) {
        this.hooks.onProtocolError(e instanceof Error ? e.message : String(e));
      }
    };
  }

  send(msg: ClientMessage): boolean {
    if (!this.sock || this.status !== 'open') return false;
    this.sock.send(encode(msg));
    return true;
  }

  close(): void {
    this.sock?.close();
    this.sock = null;
    this.setStatus('closed');
  }

  private setStatus(s: ClientStatus): void {
    this.status = s;
    this.hooks.onStatus(s);
  }
}

// ws://localhost:8391 unless the page query string says otherwise (?ws=...)
export function serverUrl(search: string): string {
  const q = new URLSearchParams(search);
  return q.get('ws') ?? 'ws://localhost:8391';
}
