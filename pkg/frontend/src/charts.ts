// Two stacked streaming charts on plain 2-D canvas: velocity vs target on
// top, noise-cost proxy plus the epsilon step trace below. X axes are
// tick-based and monotone; stream gaps break the line.

import type { SessionState } from './session.js';
import type { TelemetryFrame } from './types.js';

interface Series {
  color: string;
  value: (f: TelemetryFrame) => number;
  label: string;
  step?: boolean;
}

const VELOCITY_SERIES: Series[] = [
  { color: '#4da3ff', value: (f) => f.v, label: 'v (m/s)' },
  { color: '#9be07c', value: (f) => f.v_target, label: 'target (m/s)', step: true },
];

const COST_SERIES: Series[] = [
  { color: '#ff9f43', value: (f) => f.rolling_cost, label: 'rolling cost' },
  { color: '#e36bff', value: (f) => f.epsilon, label: 'eps', step: true },
];

function drawChart(
  ctx: CanvasRenderingContext2D,
  frames: TelemetryFrame[],
  series: Series[],
  gapAfterTick: number | null,
  yMax: number,
): void {
  const { width, height } = ctx.canvas;
  ctx.clearRect(0, 0, width, height);
  ctx.fillStyle = '#10151c';
  ctx.fillRect(0, 0, width, height);
  if (frames.length < 2) return;

  const first = frames[0]!.tick;
  const last = frames[frames.length - 1]!.tick;
  const span = Math.max(last - first, 1);
  const x = (tick: number) => ((tick - first) / span) * (width - 52) + 44;
  const y = (v: number) => height - 16 - (Math.min(Math.max(v, 0), yMax) / yMax) * (height - 30);

  ctx.strokeStyle = '#2a3442';
  ctx.lineWidth = 1;
  for (let g = 0; g <= 4; g++) {
    const gy = y((yMax * g) / 4);
    ctx.beginPath();
    ctx.moveTo(44, gy);
    ctx.lineTo(width - 8, gy);
    ctx.stroke();
    ctx.fillStyle = '#6b7a8c';
    ctx.font = '10px system-ui';
    ctx.fillText(((yMax * g) / 4).toFixed(2), 4, gy + 3);
  }

  for (const s of series) {
    ctx.strokeStyle = s.color;
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    let pen = false;
    let prev: TelemetryFrame | null = null;
    for (const f of frames) {
      const broke =
        prev !== null &&
        (f.tick !== prev.tick + 1 || (gapAfterTick !== null && prev.tick === gapAfterTick));
      const px = x(f.tick);
      const py = y(s.value(f));
      if (!pen || broke) {
        ctx.moveTo(px, py);
        pen = true;
      } else if (s.step && prev !== null) {
        ctx.lineTo(px, y(s.value(prev)));
        ctx.lineTo(px, py);
      } else {
        ctx.lineTo(px, py);
      }
      prev = f;
    }
    ctx.stroke();
  }

  let lx = 48;
  for (const s of series) {
    ctx.fillStyle = s.color;
    ctx.font = '11px system-ui';
    ctx.fillText(s.label, lx, 12);
    lx += ctx.measureText(s.label).width + 18;
  }
}

export class ChartPair {
  constructor(
    private readonly velocityCtx: CanvasRenderingContext2D,
    private readonly costCtx: CanvasRenderingContext2D,
  ) {}

  render(session: SessionState, vMax: number): void {
    drawChart(this.velocityCtx, session.frames, VELOCITY_SERIES, session.gapAfterTick, vMax);
    drawChart(this.costCtx, session.frames, COST_SERIES, session.gapAfterTick, 1.0);
  }
}
