// Control panel wiring: connect to a steering service, drive the
// noise-reduction slider and target-speed control, stream the charts,
// and export the session log.

import { CommandError, SteerClient } from './client.js';
import { ChartPair } from './charts.js';
import { SessionState } from './session.js';
import type { CommandBody, HealthInfo } from './types.js';

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

const urlInput = el<HTMLInputElement>('service-url');
const connectBtn = el<HTMLButtonElement>('connect');
const banner = el<HTMLDivElement>('banner');
const metaBox = el<HTMLDivElement>('meta');
const epsSlider = el<HTMLInputElement>('eps');
const epsValue = el<HTMLSpanElement>('eps-value');
const vSlider = el<HTMLInputElement>('v-target');
const vValue = el<HTMLSpanElement>('v-value');
const pauseBtn = el<HTMLButtonElement>('pause');
const exportBtn = el<HTMLButtonElement>('export');
const ackBox = el<HTMLSpanElement>('ack');

const session = new SessionState();
const charts = new ChartPair(
  el<HTMLCanvasElement>('chart-velocity').getContext('2d')!,
  el<HTMLCanvasElement>('chart-cost').getContext('2d')!,
);

let client: SteerClient | null = null;
let health: HealthInfo | null = null;
let paused = false;
let lastTickSent = 0;
let dirty = false;

function setBanner(text: string, kind: 'ok' | 'warn' | 'err'): void {
  banner.textContent = text;
  banner.className = `banner ${kind}`;
}

function renderMeta(): void {
  if (!health) {
    metaBox.textContent = 'not connected';
    return;
  }
  metaBox.textContent =
    `checkpoint ${health.checkpoint_hash || '(unhashed)'} | mode ${health.mode} | ` +
    `${health.tick_rate} Hz | service ${health.version} (${health.status})`;
}

function scheduleRender(): void {
  if (dirty) return;
  dirty = true;
  requestAnimationFrame(() => {
    dirty = false;
    const vMax = health ? Math.max(health.v_target_range[1] * 1.2, 1) : 3;
    charts.render(session, vMax);
  });
}

async function sendCommand(body: CommandBody): Promise<void> {
  if (!client || !health) return;
  try {
    const ack = await client.command(body, health.v_target_range);
    lastTickSent = ack.applied_at_tick;
    ackBox.textContent = `applied at tick ${ack.applied_at_tick}`;
    session.addCommand({ kind: 'command', ...body, applied_at_tick: ack.applied_at_tick,
                         sent_at_tick: session.latest?.tick ?? 0 });
  } catch (err) {
    if (err instanceof CommandError) {
      ackBox.textContent = `rejected: ${Object.entries(err.errors)
        .map(([k, v]) => `${k} ${v}`)
        .join('; ')}`;
    } else {
      ackBox.textContent = `command failed: ${String(err)}`;
    }
  }
}

function connect(): void {
  client?.close();
  session.reset();
  health = null;
  renderMeta();
  setBanner('connecting...', 'warn');

  const base = urlInput.value.trim() || 'http://127.0.0.1:8750';
  client = new SteerClient(base, {
    onFrame: (frame) => {
      if (session.addFrame(frame)) scheduleRender();
    },
    onState: (state, detail) => {
      if (state === 'live') setBanner('live', 'ok');
      else if (state === 'reconnecting') setBanner(`reconnecting (${detail ?? 'stream lost'})`, 'err');
      else if (state === 'connecting') setBanner('connecting...', 'warn');
      else setBanner('disconnected', 'err');
    },
    onGap: () => session.markGap(),
  });

  client
    .health()
    .then((info) => {
      health = info;
      epsSlider.value = String(info.epsilon);
      epsValue.textContent = info.epsilon.toFixed(2);
      vSlider.min = String(info.v_target_range[0]);
      vSlider.max = String(info.v_target_range[1]);
      vSlider.value = String(info.v_target);
      vValue.textContent = info.v_target.toFixed(2);
      renderMeta();
    })
    .catch((err) => setBanner(`service unreachable: ${err}`, 'err'));
  client.connect();
}

connectBtn.addEventListener('click', connect);

epsSlider.addEventListener('input', () => {
  epsValue.textContent = Number(epsSlider.value).toFixed(2);
});
// one command per slider release, not per drag step
epsSlider.addEventListener('change', () => {
  void sendCommand({ epsilon: Number(epsSlider.value) });
});

vSlider.addEventListener('input', () => {
  vValue.textContent = Number(vSlider.value).toFixed(2);
});
vSlider.addEventListener('change', () => {
  void sendCommand({ v_target: Number(vSlider.value) });
});

pauseBtn.addEventListener('click', () => {
  paused = !paused;
  pauseBtn.textContent = paused ? 'resume' : 'pause';
  void sendCommand({ pause: paused });
});

exportBtn.addEventListener('click', () => {
  if (session.empty) return;
  const blob = new Blob([session.exportJsonl()], { type: 'application/jsonl' });
  const a = document.createElement('a');
  a.href = URL.createObjectURL(blob);
  a.download = `steer-session-tick${session.latest?.tick ?? 0}.jsonl`;
  a.click();
  URL.revokeObjectURL(a.href);
});

const exportWatch = setInterval(() => {
  exportBtn.disabled = session.empty;
}, 500);
void exportWatch;
void lastTickSent;

renderMeta();
setBanner('enter the service URL and connect', 'warn');
