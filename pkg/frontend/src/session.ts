// Session state: ring buffers of the last 30 s of telemetry, the command
// history, and the JSONL export whose schema matches the service logs.

import type { CommandEvent, TelemetryFrame } from './types.js';

export const WINDOW_SECONDS = 30;
export const TICK_RATE = 50;
export const BUFFER_FRAMES = WINDOW_SECONDS * TICK_RATE; // 1500

export class SessionState {
  frames: TelemetryFrame[] = [];
  commands: CommandEvent[] = [];
  latest: TelemetryFrame | null = null;
  /** Set when the stream dropped; the next frame starts a new chart segment. */
  gapAfterTick: number | null = null;
  private gapPending = false;

  addFrame(frame: TelemetryFrame): boolean {
    if (this.latest !== null && frame.tick <= this.latest.tick) {
      if (this.gapPending) {
        // the service restarted and its tick counter regressed: drop the
        // stale segment rather than render old frames alongside new ones
        this.frames = [];
        this.gapAfterTick = null;
      } else {
        // never display anything older than what is already shown
        return false;
      }
    }
    this.gapPending = false;
    this.latest = frame;
    this.frames.push(frame);
    if (this.frames.length > BUFFER_FRAMES) {
      this.frames.splice(0, this.frames.length - BUFFER_FRAMES);
    }
    return true;
  }

  addCommand(event: CommandEvent): void {
    this.commands.push(event);
  }

  markGap(): void {
    if (this.latest !== null) {
      this.gapAfterTick = this.latest.tick;
      this.gapPending = true;
    }
  }

  /** Ticks at which an epsilon change was acknowledged (for the step trace). */
  epsilonSteps(): Array<{ tick: number; epsilon: number }> {
    return this.commands
      .filter((c) => c.epsilon !== undefined)
      .map((c) => ({ tick: c.applied_at_tick, epsilon: c.epsilon as number }));
  }

  get empty(): boolean {
    return this.frames.length === 0;
  }

  reset(): void {
    this.frames = [];
    this.commands = [];
    this.latest = null;
    this.gapAfterTick = null;
    this.gapPending = false;
  }

  /**
   * Time-ordered JSONL: frames plus command annotations interleaved at the
   * tick each command was acknowledged for. Parses in the service's log
   * reader (kinds "frame" and "command").
   */
  exportJsonl(): string {
    const lines: string[] = [];
    const pending = [...this.commands].sort(
      (a, b) => a.applied_at_tick - b.applied_at_tick,
    );
    let next = 0;
    for (const frame of this.frames) {
      while (next < pending.length) {
        const cmd = pending[next];
        if (cmd === undefined || cmd.applied_at_tick > frame.tick) break;
        lines.push(JSON.stringify(cmd));
        next += 1;
      }
      lines.push(JSON.stringify(frame));
    }
    for (; next < pending.length; next += 1) {
      lines.push(JSON.stringify(pending[next]));
    }
    return lines.join('\n') + (lines.length > 0 ? '\n' : '');
  }
}
