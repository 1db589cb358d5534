"""Deterministic 1-D impact-walker surrogate.

A point mass tracks a commanded velocity. Thrust ``u`` accelerates it, but
traction depends on how vigorously the stance foot strikes (``w``): quiet
stepping limits traction, which creates the agility-vs-noise trade-off.
Exactly one foot strikes per control step, rotating through the four feet.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .noise_cost import ContactSnapshot, CostParams, normalization_bounds, normalized_cost

OBS_DIM = 6  # v, v_target, phase one-hot (4)


class EpisodeFinished(RuntimeError):
    """step() called on a state whose episode already ended."""


@dataclass(frozen=True)
class EnvParams:
    dt: float = 0.02
    c1: float = 8.0           # thrust gain (m/s^2 per unit thrust)
    c2: float = 2.0           # drag (1/s)
    v0: float = 0.5           # traction softness (m/s)
    u_max: float = 1.0
    vimp_max: float = 2.0     # max impact speed (m/s)
    F_base: float = 30.0      # stance base force (N)
    c3: float = 70.0          # force per unit thrust (N)
    episode_len: int = 200
    v_target_range: tuple = (0.5, 2.25)
    sigma_track: float = 0.25

    def __post_init__(self):
        positives = (
            self.dt, self.c1, self.c2, self.v0, self.u_max, self.vimp_max,
            self.F_base, self.c3, self.episode_len, self.sigma_track,
        )
        if any(x <= 0 for x in positives):
            raise ValueError("all EnvParams must be positive")
        lo, hi = self.v_target_range
        if not (0.0 <= lo <= hi <= 5.0):
            raise ValueError("v_target_range must lie within [0, 5]")


@dataclass(frozen=True)
class EnvState:
    v: float
    v_target: float
    phase: int
    t: int


@dataclass(frozen=True)
class Action:
    u: float  # thrust command in [-1, 1]
    w: float  # impact-vigor command in [-1, 1]


@dataclass(frozen=True)
class Transition:
    obs: np.ndarray
    action: Action
    reward: float
    cost: float
    next_obs: np.ndarray
    done: bool
    snapshot: ContactSnapshot = field(repr=False, default=None)


def observe(state: EnvState) -> np.ndarray:
    obs = np.zeros(OBS_DIM)
    obs[0] = state.v
    obs[1] = state.v_target
    obs[2 + state.phase] = 1.0
    return obs


def reset(seed: int, params: EnvParams) -> EnvState:
    """Fresh episode: v = 0, phase 0, v_target drawn uniformly per seed."""
    rng = np.random.default_rng(seed)
    lo, hi = params.v_target_range
    return EnvState(v=0.0, v_target=float(rng.uniform(lo, hi)), phase=0, t=0)


def step(
    state: EnvState,
    action: Action,
    params: EnvParams,
    cost_params: CostParams,
) -> tuple:
    """Advance one control period; returns (next_state, transition)."""
    if state.t >= params.episode_len:
        raise EpisodeFinished(f"episode ended at t={state.t}")
    u = min(max(action.u, -1.0), 1.0)
    w = min(max(action.w, -1.0), 1.0)
    u_hat = params.u_max * (u + 1.0) / 2.0
    w_hat = params.vimp_max * (w + 1.0) / 2.0
    traction = w_hat / (w_hat + params.v0)
    v_next = state.v + params.dt * (params.c1 * u_hat * traction - params.c2 * state.v)

    forces = [0.0, 0.0, 0.0, 0.0]
    vels = [0.0, 0.0, 0.0, 0.0]
    forces[state.phase] = params.F_base + params.c3 * u_hat
    vels[state.phase] = w_hat
    snapshot = ContactSnapshot(tuple(forces), tuple(vels))

    err = v_next - state.v_target
    reward = math.exp(-(err * err) / params.sigma_track)
    cost = normalized_cost(snapshot, cost_params)

    next_state = EnvState(
        v=v_next,
        v_target=state.v_target,
        phase=(state.phase + 1) % 4,
        t=state.t + 1,
    )
    transition = Transition(
        obs=observe(state),
        action=Action(u, w),
        reward=reward,
        cost=cost,
        next_obs=observe(next_state),
        done=next_state.t == params.episode_len,
        snapshot=snapshot,
    )
    return next_state, transition


def batch_step(states, actions, params: EnvParams, cost_params: CostParams):
    """Elementwise step over N independent environments."""
    if len(states) != len(actions):
        raise ValueError(f"length mismatch: {len(states)} states vs {len(actions)} actions")
    results = [step(s, a, params, cost_params) for s, a in zip(states, actions)]
    next_states = [r[0] for r in results]
    transitions = [r[1] for r in results]
    return next_states, transitions


def steady_state_velocity(u: float, w: float, params: EnvParams) -> float:
    """Closed-form fixed point of the velocity recurrence for a held action."""
    u_hat = params.u_max * (min(max(u, -1.0), 1.0) + 1.0) / 2.0
    w_hat = params.vimp_max * (min(max(w, -1.0), 1.0) + 1.0) / 2.0
    traction = w_hat / (w_hat + params.v0)
    return params.c1 * u_hat * traction / params.c2


def cost_bounds(params: EnvParams, cost_params: CostParams) -> tuple:
    """Achievable per-step normalized-cost range (c_lo, c_hi) of this walker.

    One foot strikes per step with force in [F_base, F_base + c3 * u_max]
    and impact speed in [0, vimp_max]; the bounds are the normalized cost
    of the laziest and the most aggressive strike.
    """
    quiet = ContactSnapshot((params.F_base, 0, 0, 0), (0, 0, 0, 0))
    loud = ContactSnapshot(
        (params.F_base + params.c3 * params.u_max, 0, 0, 0),
        (params.vimp_max, 0, 0, 0),
    )
    return normalized_cost(quiet, cost_params), normalized_cost(loud, cost_params)


class VecEnv:
    """N independent walkers stepped as numpy arrays (trainer hot path).

    Matches the scalar ``step`` dynamics (same formulas; summation order in
    the cost may differ in the last ulps). Each env draws fresh targets from
    its own seeded stream, so a run is reproducible from (seed, actions).
    A single instance must not be stepped concurrently.
    """

    def __init__(self, n: int, params: EnvParams, cost_params: CostParams, seed: int):
        self.n = n
        self.params = params
        self.cost_params = cost_params
        root = np.random.SeedSequence(seed)
        self._rngs = [np.random.default_rng(s) for s in root.spawn(n)]
        self.v = np.zeros(n)
        self.v_target = np.array([self._draw_target(i) for i in range(n)])
        self.phase = np.zeros(n, dtype=int)
        self.t = np.zeros(n, dtype=int)
        # idle feet contribute a constant force term; stance foot varies
        cp = cost_params
        self._zero_force_term = math.exp(-cp.F_max / cp.sigma_F)
        lo, hi = normalization_bounds(cp)
        self._raw_lo, self._raw_span = lo, hi - lo

    def _draw_target(self, i: int) -> float:
        lo, hi = self.params.v_target_range
        return float(self._rngs[i].uniform(lo, hi))

    @property
    def states(self):
        return [
            EnvState(v=float(self.v[i]), v_target=float(self.v_target[i]),
                     phase=int(self.phase[i]), t=int(self.t[i]))
            for i in range(self.n)
        ]

    def observations(self) -> np.ndarray:
        obs = np.zeros((self.n, OBS_DIM))
        obs[:, 0] = self.v
        obs[:, 1] = self.v_target
        obs[np.arange(self.n), 2 + self.phase] = 1.0
        return obs

    def step(self, actions: np.ndarray):
        """Advance every env one tick; finished episodes reset in place.

        ``actions`` is (n, 2); returns (rewards, costs, dones, abs_errors).
        """
        actions = np.asarray(actions, dtype=np.float64)
        if actions.shape != (self.n, 2):
            raise ValueError(f"actions must have shape ({self.n}, 2), got {actions.shape}")
        p, cp = self.params, self.cost_params
        u = np.clip(actions[:, 0], -1.0, 1.0)
        w = np.clip(actions[:, 1], -1.0, 1.0)
        u_hat = p.u_max * (u + 1.0) / 2.0
        w_hat = p.vimp_max * (w + 1.0) / 2.0
        traction = w_hat / (w_hat + p.v0)
        v_next = self.v + p.dt * (p.c1 * u_hat * traction - p.c2 * self.v)

        force = np.clip(p.F_base + p.c3 * u_hat, 0.0, cp.F_max)
        vimp = np.clip(w_hat, 0.0, cp.v_clip)
        raw = (
            cp.lambda1 * (np.exp((force - cp.F_max) / cp.sigma_F) + 3.0 * self._zero_force_term)
            + cp.lambda2 * (1.0 - np.exp(-(vimp * vimp) / cp.sigma_v))
        )
        costs = np.clip((raw - self._raw_lo) / self._raw_span, 0.0, 1.0)

        err = v_next - self.v_target
        rewards = np.exp(-(err * err) / p.sigma_track)

        self.v = v_next
        self.phase = (self.phase + 1) % 4
        self.t = self.t + 1
        dones = self.t >= p.episode_len
        for i in np.nonzero(dones)[0]:
            self.v[i] = 0.0
            self.phase[i] = 0
            self.t[i] = 0
            self.v_target[i] = self._draw_target(int(i))
        return rewards, costs, dones, np.abs(err)

    def set_target(self, i: int, v_target: float):
        self.v_target[i] = float(v_target)
