// Wire types of the steering service. Field names and units mirror the
// server's telemetry schema exactly; exports must parse in its log reader.

export interface TelemetryFrame {
  kind: 'frame';
  tick: number;
  v: number;            // m/s
  v_target: number;     // m/s
  epsilon: number;      // noise-reduction level in [0, 1]
  step_cost: number;    // normalized noise cost in [0, 1]
  rolling_cost: number; // 1 s window mean
  db_proxy: number;     // display-only pseudo-decibel, 30 + 40 * rolling_cost
}

export interface CommandBody {
  epsilon?: number;
  v_target?: number;
  pause?: boolean;
}

export interface CommandAck {
  applied_at_tick: number;
}

export interface CommandEvent extends CommandBody {
  kind: 'command';
  applied_at_tick: number;
  sent_at_tick: number;
}

export interface HealthInfo {
  status: string;
  tick: number;
  tick_rate: number;
  checkpoint_hash: string;
  mode: string;
  version: string;
  epsilon: number;
  v_target: number;
  v_target_range: [number, number];
}

export function isTelemetryFrame(value: unknown): value is TelemetryFrame {
  if (typeof value !== 'object' || value === null) return false;
  const f = value as Record<string, unknown>;
  return (
    f.kind === 'frame' &&
    typeof f.tick === 'number' &&
    typeof f.v === 'number' &&
    typeof f.v_target === 'number' &&
    typeof f.epsilon === 'number' &&
    typeof f.step_cost === 'number' &&
    typeof f.rolling_cost === 'number' &&
    typeof f.db_proxy === 'number'
  );
}

/** Client-side mirror of the server's command bounds. */
export function validateCommand(
  cmd: CommandBody,
  vTargetRange: [number, number],
): Record<string, string> {
  const errors: Record<string, string> = {};
  if (cmd.epsilon !== undefined && !(cmd.epsilon >= 0 && cmd.epsilon <= 1)) {
    errors.epsilon = `must lie in [0, 1], got ${cmd.epsilon}`;
  }
  const [lo, hi] = vTargetRange;
  if (cmd.v_target !== undefined && !(cmd.v_target >= lo && cmd.v_target <= hi)) {
    errors.v_target = `must lie in [${lo}, ${hi}], got ${cmd.v_target}`;
  }
  return errors;
}
