"""Per-level PID-Lagrangian PPO over a shared constraint-conditioned policy.

Each constraint level owns its environments, rollout buffer, and Lagrange
multiplier. Per iteration: collect rollouts at every level, estimate reward
and cost advantages (GAE), update each multiplier from the measured episode
cost, combine advantages through the multiplier, and apply clipped-surrogate
updates whose actor loss is the plain mean across levels. Oracle variants
reuse the same machinery: ``oracle_safe`` is the single-level unconditioned
case, ``oracle_morl`` is plain PPO on the scalarized reward r - beta * c
(``ppo`` is its beta = 0 alias).

Constraint targets: the walker strikes one foot per step, so its per-step
normalized cost spans only a quarter of the [0, 1] normalization box. With
``budget_map = "env_range"`` (default) a level eps is mapped affinely onto
the achievable cost range before the PID comparison, which keeps every
level's constraint meaningful; ``"identity"`` compares eps directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .agent import (
    ConditioningMode,
    CriticPair,
    PolicyParams,
    condition_inputs,
    critic_loss,
    sample_actions,
    values_batch,
)
from .env import EnvParams, VecEnv, cost_bounds
from .nn import adam_init, adam_update, backward, forward_cached
from .noise_cost import CostParams

TRAIN_MODES = ("cncp", "conc", "rc", "oracle_safe", "oracle_morl", "ppo")


class TrainingDiverged(RuntimeError):
    """A loss or statistic became non-finite; iteration aborted."""


@dataclass(frozen=True)
class TrainerConfig:
    n_levels: int = 16
    horizon: int = 256                 # transitions per environment per iteration
    iterations: int = 2000
    gamma: float = 0.99
    lambda_gae: float = 0.95
    lambda_gae_cost: float = None      # cost-stream GAE mix; None: use lambda_gae
    eps_clip: float = 0.2
    epochs_per_iter: int = 5
    minibatch_size: int = 512
    actor_lr: float = 3e-4
    critic_lr: float = 1e-3
    seed: int = 0
    entropy_coef: float = 0.0
    max_grad_norm: float = 0.5
    pid_kp: float = 0.5
    pid_ki: float = 0.05
    pid_kd: float = 0.1
    integral_max: float = 100.0
    lambda_ramp_iters: int = 0         # applied multiplier strength ramps in linearly
    lambda_max: float = float("inf")   # cap on the applied multiplier
    budget_map: str = "env_range"      # env_range | identity
    aux_coef: float = 0.1              # action-smoothness bonus scale
    aux_midpoint: float = 400.0        # sigmoid decay midpoint (iterations)
    aux_steepness: float = 0.01
    checkpoint_every: int = 0          # 0: final checkpoint only

    def __post_init__(self):
        if not (0.0 < self.gamma < 1.0):
            raise ValueError("gamma must lie in (0, 1)")
        if not (0.0 <= self.lambda_gae <= 1.0):
            raise ValueError("lambda_gae must lie in [0, 1]")
        if self.eps_clip <= 0:
            raise ValueError("eps_clip must be > 0")
        if self.budget_map not in ("env_range", "identity"):
            raise ValueError("budget_map must be 'env_range' or 'identity'")


@dataclass(frozen=True)
class AgentConfig:
    hidden_dims: tuple = (64, 64)
    feature_dim: int = 16
    activation: str = "elu"
    init_log_std: float = -0.5
    rc_repeat: int = 10


def uniform_levels(n: int) -> np.ndarray:
    """N constraint levels uniformly interpolated over [0, 1]."""
    if n < 2:
        raise ValueError("a uniform schedule needs at least 2 levels")
    levels = np.linspace(0.0, 1.0, n)
    assert levels[0] == 0.0 and levels[-1] == 1.0
    return levels


@dataclass(frozen=True)
class LagrangeState:
    lam: float = 0.0
    integral: float = 0.0
    prev_error: float = 0.0
    kp: float = 0.5
    ki: float = 0.05
    kd: float = 0.1
    integral_max: float = 100.0


def update_lagrange(state: LagrangeState, measured_cost: float, eps: float) -> LagrangeState:
    """PID step on the constraint violation e = measured_cost - eps."""
    if not math.isfinite(measured_cost):
        raise TrainingDiverged(f"non-finite measured cost {measured_cost}")
    e = measured_cost - eps
    integral = min(max(state.integral + e, 0.0), state.integral_max)
    derivative = e - state.prev_error
    lam = max(0.0, state.kp * e + state.ki * integral + state.kd * derivative)
    return replace(state, lam=lam, integral=integral, prev_error=e)


def gae(values, bootstrap_value, rewards, dones, gamma, lambda_gae):
    """Generalized advantage estimation with episode-boundary masking.

    Returns (advantages, returns) with returns = advantages + values.
    """
    values = np.asarray(values, dtype=np.float64)
    rewards = np.asarray(rewards, dtype=np.float64)
    dones = np.asarray(dones, dtype=bool)
    if not (len(values) == len(rewards) == len(dones)):
        raise ValueError("values, rewards, dones must have equal lengths")
    T = len(rewards)
    adv = np.zeros(T)
    next_value = float(bootstrap_value)
    carry = 0.0
    for t in range(T - 1, -1, -1):
        mask = 0.0 if dones[t] else 1.0
        delta = rewards[t] + gamma * next_value * mask - values[t]
        carry = delta + gamma * lambda_gae * mask * carry
        adv[t] = carry
        next_value = values[t]
    return adv, adv + values


def gae_batch(values, bootstrap, rewards, dones, gamma, lambda_gae):
    """Vectorized GAE over (E, T) arrays of E parallel streams."""
    E, T = rewards.shape
    adv = np.zeros((E, T))
    next_value = bootstrap.astype(np.float64).copy()
    carry = np.zeros(E)
    for t in range(T - 1, -1, -1):
        mask = 1.0 - dones[:, t].astype(np.float64)
        delta = rewards[:, t] + gamma * next_value * mask - values[:, t]
        carry = delta + gamma * lambda_gae * mask * carry
        adv[:, t] = carry
        next_value = values[:, t].copy()
    return adv, adv + values


def combined_advantage(a_r, a_c, lam):
    """Lagrangian-combined advantage (A_r - lam * A_c) / (1 + lam)."""
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    return (np.asarray(a_r) - lam * np.asarray(a_c)) / (1.0 + lam)


def reward_weight_schedule(t: float, t0: float, k: float) -> float:
    """Sigmoid decay weight in [0, 1] with midpoint t0 and steepness k."""
    if t < 0:
        raise ValueError("t must be >= 0")
    z = k * (t - t0)
    if z > 700.0:
        return 0.0
    return 1.0 / (1.0 + math.exp(z))


def normalize_advantages(a: np.ndarray) -> np.ndarray:
    return (a - a.mean()) / (a.std() + 1e-8)


@dataclass
class RolloutBuffer:
    """Fixed-horizon storage for one constraint level (E env streams)."""

    eps: float
    obs: np.ndarray          # (E, T, obs_dim)
    cond: np.ndarray         # (E, T, cond_dim)
    actions: np.ndarray      # (E, T, 2) raw policy samples
    log_probs: np.ndarray    # (E, T)
    rewards: np.ndarray      # (E, T) training rewards (env + weighted aux)
    env_rewards: np.ndarray  # (E, T) pure tracking rewards
    costs: np.ndarray        # (E, T)
    dones: np.ndarray        # (E, T)
    value_r: np.ndarray = None
    value_c: np.ndarray = None
    bootstrap_r: np.ndarray = None
    bootstrap_c: np.ndarray = None
    episode_costs: list = field(default_factory=list)    # completed this iteration
    episode_rewards: list = field(default_factory=list)
    episode_errors: list = field(default_factory=list)   # mean |v - v_target|

    @property
    def size(self) -> int:
        return self.obs.shape[0] * self.obs.shape[1]

    def flat(self, arr: np.ndarray) -> np.ndarray:
        return arr.reshape(self.size, *arr.shape[2:])


def surrogate_loss(cond, actions, old_log_probs, a_hat, policy: PolicyParams,
                   eps_clip: float, entropy_coef: float = 0.0):
    """Clipped-surrogate actor loss (negated objective) with gradients.

    Returns (loss, grad_mean_params, grad_log_std).
    """
    cond = np.asarray(cond, dtype=np.float64)
    if cond.ndim != 2 or cond.shape[0] == 0:
        raise ValueError("surrogate_loss requires a nonempty batch")
    n = cond.shape[0]
    means, cache = forward_cached(policy.mean_params, policy.spec, cond)
    std = policy.std()
    z = (actions - means) / std
    log_probs = -0.5 * np.sum(z * z, axis=1) - np.sum(np.log(std)) - math.log(2 * math.pi)
    ratio = np.exp(log_probs - old_log_probs)
    s_plain = ratio * a_hat
    s_clip = np.clip(ratio, 1.0 - eps_clip, 1.0 + eps_clip) * a_hat
    objective = np.minimum(s_plain, s_clip)
    entropy = float(np.sum(np.log(std)) + 0.5 * len(std) * math.log(2 * math.pi * math.e))
    loss = -float(np.mean(objective)) - entropy_coef * entropy
    if not math.isfinite(loss):
        raise TrainingDiverged("non-finite surrogate loss")
    # gradient flows through the ratio only where the unclipped branch is active
    active = (s_plain <= s_clip).astype(np.float64)
    d_lp = -(1.0 / n) * a_hat * ratio * active
    d_mean = d_lp[:, None] * (z / std)
    grad_mean, _ = backward(policy.mean_params, policy.spec, cond, d_mean, cache=cache)
    grad_log_std = np.sum(d_lp[:, None] * (z * z - 1.0), axis=0) - entropy_coef * np.ones_like(std)
    return loss, grad_mean, grad_log_std


def _clip_grad(grad: np.ndarray, max_norm: float) -> np.ndarray:
    if max_norm <= 0:
        return grad
    norm = float(np.linalg.norm(grad))
    if norm > max_norm:
        return grad * (max_norm / norm)
    return grad


class Trainer:
    """Owns the policy, critics, environments, and multipliers for one run."""

    def __init__(self, mode: str, env_params: EnvParams, cost_params: CostParams,
                 agent_cfg: AgentConfig, cfg: TrainerConfig,
                 fixed_eps: float = None, beta: float = None):
        if mode not in TRAIN_MODES:
            raise ValueError(f"mode must be one of {TRAIN_MODES}")
        if mode == "ppo":
            mode, beta = "oracle_morl", 0.0
        self.mode = mode
        self.env_params = env_params
        self.cost_params = cost_params
        self.agent_cfg = agent_cfg
        self.cfg = cfg
        self.beta = float(beta) if beta is not None else None
        self.fixed_eps = float(fixed_eps) if fixed_eps is not None else None

        if mode in ("cncp", "conc", "rc"):
            self.conditioning = ConditioningMode(mode, agent_cfg.rc_repeat)
            self.levels = uniform_levels(cfg.n_levels)
            self.envs_per_level = 1
        elif mode == "oracle_safe":
            if self.fixed_eps is None:
                raise ValueError("oracle_safe requires a fixed constraint level")
            self.conditioning = ConditioningMode("unconditioned")
            self.levels = np.array([self.fixed_eps])
            self.envs_per_level = cfg.n_levels  # keep total env count comparable
        else:  # oracle_morl
            if self.beta is None or self.beta < 0:
                raise ValueError("oracle_morl requires beta >= 0")
            self.conditioning = ConditioningMode("unconditioned")
            self.levels = np.array([1.0])  # recorded level; no constraint enforced
            self.envs_per_level = cfg.n_levels

        self.n_levels = len(self.levels)
        self.n_envs = self.n_levels * self.envs_per_level
        self.use_lagrange = mode != "oracle_morl"

        ss = np.random.SeedSequence(cfg.seed)
        env_seed, policy_seed, action_seed, shuffle_seed = [
            int(s.generate_state(1)[0]) for s in ss.spawn(4)
        ]
        self.venv = VecEnv(self.n_envs, env_params, cost_params, seed=env_seed)
        obs_dim = self.venv.observations().shape[1]
        self.policy = PolicyParams.create(
            obs_dim, self.conditioning, agent_cfg.hidden_dims,
            agent_cfg.activation, policy_seed, agent_cfg.init_log_std,
        )
        if mode == "cncp":
            self.critics = CriticPair.create_decomposed(
                obs_dim, agent_cfg.feature_dim, agent_cfg.hidden_dims,
                agent_cfg.activation, policy_seed + 1,
            )
        else:
            self.critics = CriticPair.create_scalar(
                obs_dim + self.conditioning.extra_dims(), agent_cfg.hidden_dims,
                agent_cfg.activation, policy_seed + 1,
            )
        self.action_rng = np.random.default_rng(action_seed)
        self.shuffle_rng = np.random.default_rng(shuffle_seed)

        self.lagrange = [
            LagrangeState(kp=cfg.pid_kp, ki=cfg.pid_ki, kd=cfg.pid_kd,
                          integral_max=cfg.integral_max)
            for _ in range(self.n_levels)
        ]
        lo, hi = cost_bounds(env_params, cost_params)
        if cfg.budget_map == "env_range":
            self.budgets = lo + self.levels * (hi - lo)
        else:
            self.budgets = self.levels.copy()

        self._env_eps = np.repeat(self.levels, self.envs_per_level)
        self._prev_actions = np.zeros((self.n_envs, 2))
        self._ep_cost_sum = np.zeros(self.n_envs)
        self._ep_reward_sum = np.zeros(self.n_envs)
        self._ep_err_sum = np.zeros(self.n_envs)
        self._ep_len = np.zeros(self.n_envs, dtype=int)
        self._last_measured = np.array([float(b) for b in self.budgets])

        self._opt_actor = adam_init(len(self.policy.mean_params))
        self._opt_log_std = adam_init(len(self.policy.log_std))
        self._opt_critics = {k: adam_init(len(v)) for k, v in self.critics.arrays().items()}
        self.iteration = 0

    # ------------------------------------------------------------------ rollout

    def collect_rollouts(self, horizon: int = None):
        """Gather `horizon` transitions per environment into per-level buffers."""
        cfg = self.cfg
        T = cfg.horizon if horizon is None else horizon
        E, L = self.envs_per_level, self.n_levels
        n = self.n_envs
        obs_dim = self.venv.observations().shape[1]
        cond_dim = obs_dim + self.conditioning.extra_dims()

        obs_buf = np.zeros((n, T, obs_dim))
        cond_buf = np.zeros((n, T, cond_dim))
        act_buf = np.zeros((n, T, 2))
        lp_buf = np.zeros((n, T))
        rew_buf = np.zeros((n, T))
        env_rew_buf = np.zeros((n, T))
        cost_buf = np.zeros((n, T))
        done_buf = np.zeros((n, T), dtype=bool)
        episode_costs = [[] for _ in range(L)]
        episode_rewards = [[] for _ in range(L)]
        episode_errors = [[] for _ in range(L)]

        aux_w = reward_weight_schedule(self.iteration, cfg.aux_midpoint, cfg.aux_steepness)
        for t in range(T):
            obs = self.venv.observations()
            cond = condition_inputs(obs, self._env_eps, self.conditioning)
            samples, lps = sample_actions(cond, self.policy, self.action_rng)
            executed = np.clip(samples, -1.0, 1.0)
            rewards, costs, dones, abs_errors = self.venv.step(executed)
            smooth = np.exp(-np.sum((executed - self._prev_actions) ** 2, axis=1))
            train_rewards = rewards + cfg.aux_coef * aux_w * smooth

            obs_buf[:, t] = obs
            cond_buf[:, t] = cond
            act_buf[:, t] = samples
            lp_buf[:, t] = lps
            rew_buf[:, t] = train_rewards
            env_rew_buf[:, t] = rewards
            cost_buf[:, t] = costs
            done_buf[:, t] = dones
            self._prev_actions = executed

            self._ep_cost_sum += costs
            self._ep_reward_sum += rewards
            self._ep_err_sum += abs_errors
            self._ep_len += 1
            for i in np.nonzero(dones)[0]:
                level = i // E
                episode_costs[level].append(self._ep_cost_sum[i] / self._ep_len[i])
                episode_rewards[level].append(self._ep_reward_sum[i] / self._ep_len[i])
                episode_errors[level].append(self._ep_err_sum[i] / self._ep_len[i])
                self._ep_cost_sum[i] = self._ep_reward_sum[i] = self._ep_err_sum[i] = 0.0
                self._ep_len[i] = 0

        buffers = []
        for level in range(L):
            sl = slice(level * E, (level + 1) * E)
            buffers.append(RolloutBuffer(
                eps=float(self.levels[level]),
                obs=obs_buf[sl], cond=cond_buf[sl], actions=act_buf[sl],
                log_probs=lp_buf[sl], rewards=rew_buf[sl], env_rewards=env_rew_buf[sl],
                costs=cost_buf[sl], dones=done_buf[sl],
                episode_costs=episode_costs[level],
                episode_rewards=episode_rewards[level],
                episode_errors=episode_errors[level],
            ))
        self._attach_values(buffers)
        return buffers

    def _attach_values(self, buffers):
        """Critic predictions for every stored obs plus the bootstrap states."""
        final_obs = self.venv.observations()
        for level, buf in enumerate(buffers):
            E, T, obs_dim = buf.obs.shape
            flat_obs = buf.flat(buf.obs)
            eps_col = np.full(flat_obs.shape[0], buf.eps)
            buf.value_r = values_batch(flat_obs, eps_col, self.critics, "reward",
                                       self.conditioning).reshape(E, T)
            buf.value_c = values_batch(flat_obs, eps_col, self.critics, "cost",
                                       self.conditioning).reshape(E, T)
            tail = final_obs[level * E:(level + 1) * E]
            eps_tail = np.full(E, buf.eps)
            buf.bootstrap_r = values_batch(tail, eps_tail, self.critics, "reward",
                                           self.conditioning)
            buf.bootstrap_c = values_batch(tail, eps_tail, self.critics, "cost",
                                           self.conditioning)

    # ------------------------------------------------------------------ update

    def train_iteration(self, buffers):
        """One optimization pass over fresh buffers; returns a metrics dict."""
        cfg = self.cfg
        conds, acts, old_lps, a_hats = [], [], [], []
        ret_r, ret_c, eps_cols = [], [], []
        measured_costs = []
        applied_lams = []

        for i, buf in enumerate(buffers):
            stream = buf.rewards if self.beta is None else buf.rewards - self.beta * buf.costs
            adv_r, returns_r = gae_batch(buf.value_r, buf.bootstrap_r, stream,
                                         buf.dones, cfg.gamma, cfg.lambda_gae)
            lam_c = cfg.lambda_gae if cfg.lambda_gae_cost is None else cfg.lambda_gae_cost
            adv_c, returns_c = gae_batch(buf.value_c, buf.bootstrap_c, buf.costs,
                                         buf.dones, cfg.gamma, lam_c)
            if buf.episode_costs:
                measured = float(np.mean(buf.episode_costs))
                self._last_measured[i] = measured
            else:
                measured = float(self._last_measured[i])
            measured_costs.append(measured)

            if self.use_lagrange:
                self.lagrange[i] = update_lagrange(self.lagrange[i], measured,
                                                   float(self.budgets[i]))
                lam = min(self.lagrange[i].lam, cfg.lambda_max)
                if cfg.lambda_ramp_iters > 0:
                    # ease constraint pressure in while the tracking basin is
                    # still forming; full strength after the ramp
                    lam *= min(1.0, (self.iteration + 1) / cfg.lambda_ramp_iters)
                applied_lams.append(lam)
                a_hat = combined_advantage(
                    normalize_advantages(adv_r.ravel()),
                    normalize_advantages(adv_c.ravel()),
                    lam,
                )
            else:
                a_hat = normalize_advantages(adv_r.ravel())

            conds.append(buf.flat(buf.cond))
            acts.append(buf.flat(buf.actions))
            old_lps.append(buf.flat(buf.log_probs))
            a_hats.append(a_hat)
            ret_r.append(returns_r.ravel())
            ret_c.append(returns_c.ravel())
            eps_cols.append(np.full(buf.size, buf.eps))

        conds = np.concatenate(conds)
        acts = np.concatenate(acts)
        old_lps = np.concatenate(old_lps)
        a_hats = np.concatenate(a_hats)
        ret_r = np.concatenate(ret_r)
        ret_c = np.concatenate(ret_c)
        eps_cols = np.concatenate(eps_cols)
        obs_all = np.concatenate([buf.flat(buf.obs) for buf in buffers])

        total = len(a_hats)
        batch = min(cfg.minibatch_size, total)
        actor_losses, critic_r_losses, critic_c_losses = [], [], []
        for _ in range(cfg.epochs_per_iter):
            perm = self.shuffle_rng.permutation(total)
            for start in range(0, total, batch):
                idx = perm[start:start + batch]
                loss, g_mean, g_log_std = surrogate_loss(
                    conds[idx], acts[idx], old_lps[idx], a_hats[idx],
                    self.policy, cfg.eps_clip, cfg.entropy_coef,
                )
                actor_losses.append(loss)
                self.policy.mean_params, self._opt_actor = adam_update(
                    self.policy.mean_params, _clip_grad(g_mean, cfg.max_grad_norm),
                    self._opt_actor, lr=cfg.actor_lr,
                )
                self.policy.log_std, self._opt_log_std = adam_update(
                    self.policy.log_std, _clip_grad(g_log_std, cfg.max_grad_norm),
                    self._opt_log_std, lr=cfg.actor_lr,
                )
                np.clip(self.policy.log_std, -5.0, 1.0, out=self.policy.log_std)

                for f, targets, sink in (("reward", ret_r, critic_r_losses),
                                         ("cost", ret_c, critic_c_losses)):
                    c_loss, grads = critic_loss(obs_all[idx], eps_cols[idx], targets[idx],
                                                self.critics, f, self.conditioning)
                    sink.append(c_loss)
                    updates = {}
                    for name, g in grads.items():
                        new_arr, self._opt_critics[name] = adam_update(
                            self.critics.arrays()[name], _clip_grad(g, cfg.max_grad_norm),
                            self._opt_critics[name], lr=cfg.critic_lr,
                        )
                        updates[name] = new_arr
                    self.critics = self.critics.with_arrays(updates)

        metrics = {
            "iter": self.iteration,
            "levels": [float(x) for x in self.levels],
            "budgets": [float(x) for x in self.budgets],
            "measured_cost": [float(x) for x in measured_costs],
            "mean_reward": [
                float(np.mean(buf.episode_rewards)) if buf.episode_rewards else None
                for buf in buffers
            ],
            "tracking_error": [
                float(np.mean(buf.episode_errors)) if buf.episode_errors else None
                for buf in buffers
            ],
            "lambda": [float(x) for x in applied_lams] if self.use_lagrange else [],
            "lambda_pid": [float(ls.lam) for ls in self.lagrange] if self.use_lagrange else [],
            "actor_loss": float(np.mean(actor_losses)),
            "critic_loss_reward": float(np.mean(critic_r_losses)),
            "critic_loss_cost": float(np.mean(critic_c_losses)),
            "aux_weight": reward_weight_schedule(self.iteration, cfg.aux_midpoint,
                                                 cfg.aux_steepness),
        }
        if not math.isfinite(metrics["actor_loss"]):
            raise TrainingDiverged(f"non-finite actor loss at iteration {self.iteration}")
        self.iteration += 1
        return metrics

    def run(self, on_metrics=None, on_checkpoint=None):
        """Full training loop; callbacks receive metrics dicts / iteration ids."""
        for _ in range(self.cfg.iterations):
            buffers = self.collect_rollouts()
            metrics = self.train_iteration(buffers)
            if on_metrics is not None:
                on_metrics(metrics)
            k = self.cfg.checkpoint_every
            if on_checkpoint is not None and k > 0 and self.iteration % k == 0:
                on_checkpoint(self.iteration)
        return self
