"""Live steering service: runs a trained policy in a simulated rollout and
exposes command/telemetry endpoints so the noise-reduction level and target
velocity can be adjusted while it walks.

Concurrency model: one control-loop thread owns the environment and policy.
Commands land in a last-writer-wins mailbox and are applied only at tick
boundaries, so replays are deterministic. Telemetry fans out through bounded
per-subscriber queues (drop-oldest); slow subscribers never block the loop.
"""

from __future__ import annotations

import asyncio
import threading
import time
from collections import deque
from dataclasses import dataclass

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import JSONResponse

from . import __version__
from .agent import PolicyDivergence, act_deterministic
from .checkpoint import CheckpointBundle
from .env import Action, observe, reset, step
from .logs import dump_record

QUEUE_SIZE = 256
DB_PROXY_BASE = 30.0   # display-only pseudo-decibel affine map
DB_PROXY_SPAN = 40.0


class CommandRejected(ValueError):
    def __init__(self, errors: dict):
        super().__init__(f"rejected command: {errors}")
        self.errors = errors


@dataclass(frozen=True)
class SteerCommand:
    epsilon: float = None
    v_target: float = None
    pause: bool = None


class Subscriber:
    """Bounded telemetry queue; oldest frames are dropped under backpressure."""

    def __init__(self):
        self._frames = deque(maxlen=QUEUE_SIZE)
        self._cond = threading.Condition()
        self.closed = False

    def push(self, frame: dict):
        with self._cond:
            self._frames.append(frame)
            self._cond.notify()

    def next(self, timeout: float = None):
        """Oldest pending frame, or None on timeout/close."""
        with self._cond:
            if not self._frames:
                self._cond.wait(timeout)
            if not self._frames:
                return None
            return self._frames.popleft()

    def close(self):
        with self._cond:
            self.closed = True
            self._cond.notify_all()


class ControlLoop:
    """Owns env + policy; applies steering commands at tick boundaries only."""

    def __init__(self, bundle: CheckpointBundle, seed: int = 0,
                 tick_rate: float = 50.0, pace: bool = False,
                 initial_epsilon: float = 0.5):
        self.bundle = bundle
        self.tick_rate = float(tick_rate)
        self.pace = pace
        self.seed = int(seed)
        self.status = "idle"
        self.tick = 0

        self._state = reset(self.seed, bundle.env_params)
        self.epsilon = float(initial_epsilon)
        self.v_target = self._state.v_target
        self._window = deque(maxlen=max(1, int(round(self.tick_rate))))  # 1 s of costs

        self._lock = threading.Lock()
        self._wake = threading.Condition(self._lock)
        self._mailbox = None
        self._producing = None
        self._paused = False
        self._stop = False
        self._subscribers = []
        self._thread = None

    # ------------------------------------------------------------------- api

    def validate(self, cmd: SteerCommand) -> dict:
        errors = {}
        if cmd.epsilon is not None and not (0.0 <= cmd.epsilon <= 1.0):
            errors["epsilon"] = f"must lie in [0, 1], got {cmd.epsilon}"
        lo, hi = self.bundle.env_params.v_target_range
        if cmd.v_target is not None and not (lo <= cmd.v_target <= hi):
            errors["v_target"] = f"must lie in [{lo}, {hi}], got {cmd.v_target}"
        return errors

    def submit(self, cmd: SteerCommand) -> int:
        """Queue a command (last writer wins); returns the tick it applies at."""
        errors = self.validate(cmd)
        if errors:
            raise CommandRejected(errors)
        with self._lock:
            self._mailbox = cmd
            base = self._producing if self._producing is not None else self.tick
            self._wake.notify_all()
            return base + 1

    def subscribe(self) -> Subscriber:
        sub = Subscriber()
        with self._lock:
            self._subscribers.append(sub)
        return sub

    def unsubscribe(self, sub: Subscriber):
        sub.close()
        with self._lock:
            if sub in self._subscribers:
                self._subscribers.remove(sub)

    def start(self):
        self._thread = threading.Thread(target=self.run, daemon=True)
        self._thread.start()
        return self

    def stop(self):
        with self._lock:
            self._stop = True
            self._wake.notify_all()
        if self._thread is not None:
            self._thread.join(timeout=5.0)

    # ------------------------------------------------------------------ loop

    def _apply(self, cmd: SteerCommand):
        if cmd.epsilon is not None:
            self.epsilon = float(cmd.epsilon)
        if cmd.v_target is not None:
            self.v_target = float(cmd.v_target)
            self._state = type(self._state)(
                v=self._state.v, v_target=self.v_target,
                phase=self._state.phase, t=self._state.t,
            )
        if cmd.pause is not None:
            self._paused = bool(cmd.pause)

    def run(self):
        self.status = "running"
        next_deadline = time.monotonic()
        try:
            while True:
                with self._lock:
                    while not self._stop and self._paused and self._mailbox is None:
                        self._wake.wait(0.25)
                    if self._stop:
                        break
                    cmd, self._mailbox = self._mailbox, None
                    if cmd is not None:
                        self._apply(cmd)
                    if self._paused:
                        continue  # no frames while paused; tick counter untouched
                    self._producing = self.tick + 1

                frame = self._step_once(self._producing)

                with self._lock:
                    self.tick = self._producing
                    self._producing = None
                    for sub in self._subscribers:
                        sub.push(frame)

                if self.pace:
                    next_deadline += 1.0 / self.tick_rate
                    delay = next_deadline - time.monotonic()
                    if delay > 0:
                        time.sleep(delay)
                    else:
                        next_deadline = time.monotonic()
        except PolicyDivergence as exc:
            self.status = f"diverged: {exc}"
            return
        self.status = "stopped"

    def _step_once(self, tick: int) -> dict:
        bundle = self.bundle
        obs = observe(self._state)
        a = act_deterministic(obs, self.epsilon, bundle.policy, bundle.conditioning)
        self._state, tr = step(self._state, Action(a[0], a[1]),
                               bundle.env_params, bundle.cost_params)
        if tr.done:
            fresh = reset(self.seed + tick, bundle.env_params)
            self._state = type(fresh)(v=fresh.v, v_target=self.v_target,
                                      phase=fresh.phase, t=fresh.t)
        self._window.append(tr.cost)
        rolling = float(np.mean(self._window))
        return {
            "kind": "frame",
            "tick": tick,
            "v": float(self._state.v if not tr.done else 0.0),
            "v_target": float(self.v_target),
            "epsilon": float(self.epsilon),
            "step_cost": float(tr.cost),
            "rolling_cost": rolling,
            "db_proxy": DB_PROXY_BASE + DB_PROXY_SPAN * rolling,
        }


def create_app(loop: ControlLoop, checkpoint_hash: str = ""):
    """HTTP surface: GET /health, POST /command, WebSocket GET /stream."""
    app = FastAPI(title="quietwalk steering service")
    app.state.loop = loop

    @app.get("/health")
    def health():
        return {
            "status": loop.status,
            "tick": loop.tick,
            "tick_rate": loop.tick_rate,
            "checkpoint_hash": checkpoint_hash,
            "mode": loop.bundle.mode,
            "version": __version__,
            "epsilon": loop.epsilon,
            "v_target": loop.v_target,
            "v_target_range": list(loop.bundle.env_params.v_target_range),
        }

    @app.post("/command")
    def command(body: dict):
        unknown = set(body) - {"epsilon", "v_target", "pause"}
        if unknown:
            return JSONResponse(
                status_code=400,
                content={"errors": {k: "unknown field" for k in sorted(unknown)}},
            )
        try:
            cmd = SteerCommand(
                epsilon=None if body.get("epsilon") is None else float(body["epsilon"]),
                v_target=None if body.get("v_target") is None else float(body["v_target"]),
                pause=None if body.get("pause") is None else bool(body["pause"]),
            )
        except (TypeError, ValueError):
            return JSONResponse(status_code=400,
                                content={"errors": {"body": "fields must be numeric/boolean"}})
        try:
            applied_at = loop.submit(cmd)
        except CommandRejected as exc:
            return JSONResponse(status_code=400, content={"errors": exc.errors})
        return {"applied_at_tick": applied_at}

    @app.websocket("/stream")
    async def stream(ws: WebSocket):
        await ws.accept()
        sub = loop.subscribe()
        try:
            while True:
                frame = await asyncio.get_event_loop().run_in_executor(
                    None, sub.next, 0.25
                )
                if frame is None:
                    if sub.closed or loop.status not in ("running", "idle"):
                        break
                    continue
                await ws.send_text(dump_record(frame))
        except (WebSocketDisconnect, RuntimeError):
            pass
        finally:
            loop.unsubscribe(sub)

    return app


def serve(bundle: CheckpointBundle, host: str, port: int, seed: int = 0,
          pace: bool = True, checkpoint_hash: str = ""):
    """Blocking entry point used by the CLI."""
    import uvicorn

    loop = ControlLoop(bundle, seed=seed, pace=pace).start()
    app = create_app(loop, checkpoint_hash=checkpoint_hash)
    try:
        uvicorn.run(app, host=host, port=port, log_level="warning")
    finally:
        loop.stop()
