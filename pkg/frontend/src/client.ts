// Service client: health polling, command posting, and the telemetry
// stream with automatic reconnection. DOM-free so tests can drive it with
// injected WebSocket and fetch implementations.

import type { CommandAck, CommandBody, HealthInfo, TelemetryFrame } from './types.js';
import { isTelemetryFrame, validateCommand } from './types.js';

export type ConnectionState = 'connecting' | 'live' | 'reconnecting' | 'closed';

export interface WebSocketLike {
  onopen: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
  close(): void;
}

export interface ClientOptions {
  /** WebSocket constructor; defaults to the global one. */
  wsFactory?: (url: string) => WebSocketLike;
  fetchFn?: typeof fetch;
  /** Reconnect backoff schedule in ms; the last entry repeats. */
  backoffMs?: number[];
  setTimeoutFn?: (fn: () => void, ms: number) => unknown;
}

export interface ClientEvents {
  onFrame?: (frame: TelemetryFrame) => void;
  onState?: (state: ConnectionState, detail?: string) => void;
  onGap?: () => void;
}

const DEFAULT_BACKOFF = [250, 500, 1000, 2000, 5000];

export class SteerClient {
  readonly baseUrl: string;
  private readonly ws: (url: string) => WebSocketLike;
  private readonly fetchFn: typeof fetch;
  private readonly backoff: number[];
  private readonly setTimeoutFn: (fn: () => void, ms: number) => unknown;
  private events: ClientEvents;
  private socket: WebSocketLike | null = null;
  private attempts = 0;
  private stopped = false;
  private sawFrames = false;
  state: ConnectionState = 'closed';

  constructor(baseUrl: string, events: ClientEvents = {}, options: ClientOptions = {}) {
    this.baseUrl = baseUrl.replace(/\/+$/, '');
    this.events = events;
    this.ws =
      options.wsFactory ??
      ((url: string) => new WebSocket(url) as unknown as WebSocketLike);
    this.fetchFn = options.fetchFn ?? fetch.bind(globalThis);
    this.backoff = options.backoffMs ?? DEFAULT_BACKOFF;
    this.setTimeoutFn = options.setTimeoutFn ?? ((fn, ms) => setTimeout(fn, ms));
  }

  private setState(state: ConnectionState, detail?: string) {
    this.state = state;
    this.events.onState?.(state, detail);
  }

  get streamUrl(): string {
    return this.baseUrl.replace(/^http/, 'ws') + '/stream';
  }

  async health(): Promise<HealthInfo> {
    const resp = await this.fetchFn(`${this.baseUrl}/health`);
    if (!resp.ok) throw new Error(`health: HTTP ${resp.status}`);
    return (await resp.json()) as HealthInfo;
  }

  /** POST a steering command; resolves with the tick it applies at. */
  async command(body: CommandBody, vTargetRange: [number, number]): Promise<CommandAck> {
    const errors = validateCommand(body, vTargetRange);
    if (Object.keys(errors).length > 0) {
      throw new CommandError(errors);
    }
    const resp = await this.fetchFn(`${this.baseUrl}/command`, {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify(body),
    });
    const payload = (await resp.json()) as CommandAck & { errors?: Record<string, string> };
    if (!resp.ok) {
      throw new CommandError(payload.errors ?? { body: `HTTP ${resp.status}` });
    }
    return payload;
  }

  connect(): void {
    this.stopped = false;
    this.open();
  }

  private open(): void {
    this.setState(this.attempts === 0 ? 'connecting' : 'reconnecting');
    let socket: WebSocketLike;
    try {
      socket = this.ws(this.streamUrl);
    } catch (err) {
      this.scheduleReconnect(String(err));
      return;
    }
    this.socket = socket;
    socket.onopen = () => {
      this.attempts = 0;
    };
    socket.onmessage = (ev) => {
      let parsed: unknown;
      try {
        parsed = JSON.parse(String(ev.data));
      } catch {
        return;
      }
      if (isTelemetryFrame(parsed)) {
        if (!this.sawFrames) this.setState('live');
        this.sawFrames = true;
        this.events.onFrame?.(parsed);
      }
    };
    socket.onclose = () => this.handleDrop('stream closed');
    socket.onerror = () => this.handleDrop('stream error');
  }

  private handleDrop(detail: string): void {
    if (this.socket === null) return;
    this.socket = null;
    if (this.sawFrames) this.events.onGap?.();
    this.sawFrames = false;
    if (!this.stopped) this.scheduleReconnect(detail);
  }

  private scheduleReconnect(detail: string): void {
    this.setState('reconnecting', detail);
    const wait = this.backoff[Math.min(this.attempts, this.backoff.length - 1)] ?? 1000;
    this.attempts += 1;
    this.setTimeoutFn(() => {
      if (!this.stopped) this.open();
    }, wait);
  }

  close(): void {
    this.stopped = true;
    const socket = this.socket;
    this.socket = null;
    socket?.close();
    this.setState('closed');
  }
}

export class CommandError extends Error {
  readonly errors: Record<string, string>;
  constructor(errors: Record<string, string>) {
    super(`command rejected: ${JSON.stringify(errors)}`);
    this.errors = errors;
  }
}
