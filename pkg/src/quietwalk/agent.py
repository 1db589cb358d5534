"""Constraint-conditioned Gaussian policy and decomposed reward/cost critics.

The policy receives the noise-reduction level as an extra input. Critics
come in two flavors:

* decomposed: V_f(s, eps) = <xi_f(s), w_f(eps)>, a state-feature network
  paired with a level-dependent weight network, per stream f in {reward, cost};
* scalar: a plain critic on the conditioned input (the concatenation
  baselines use this).

Conditioning variants: ``cncp`` and ``conc`` append eps once, ``rc`` appends
it ``rc_repeat`` times, ``unconditioned`` passes observations through
(the fixed-level oracle policies).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .nn import MLPSpec, backward, forward, forward_cached, init

MODE_KINDS = ("cncp", "conc", "rc", "unconditioned")
ACTION_DIM = 2
LOG_STD_MIN, LOG_STD_MAX = -5.0, 1.0
_LOG_2PI = math.log(2.0 * math.pi)


class PolicyDivergence(RuntimeError):
    """Policy network produced non-finite outputs."""


@dataclass(frozen=True)
class ConditioningMode:
    kind: str = "cncp"
    rc_repeat: int = 10

    def __post_init__(self):
        if self.kind not in MODE_KINDS:
            raise ValueError(f"kind must be one of {MODE_KINDS}")
        if self.rc_repeat < 1:
            raise ValueError("rc_repeat must be >= 1")

    def extra_dims(self) -> int:
        if self.kind == "unconditioned":
            return 0
        return self.rc_repeat if self.kind == "rc" else 1


def check_level(eps: float) -> float:
    eps = float(eps)
    if not (0.0 <= eps <= 1.0):
        raise ValueError(f"constraint level must lie in [0, 1], got {eps}")
    return eps


def condition_input(obs: np.ndarray, eps: float, mode: ConditioningMode) -> np.ndarray:
    """Append the constraint level to one observation vector."""
    obs = np.asarray(obs, dtype=np.float64)
    if mode.kind == "unconditioned":
        return obs.copy()
    return np.concatenate([obs, np.full(mode.extra_dims(), check_level(eps))])


def condition_inputs(obs: np.ndarray, eps: np.ndarray, mode: ConditioningMode) -> np.ndarray:
    """Batched variant: obs (B, d), eps (B,)."""
    obs = np.asarray(obs, dtype=np.float64)
    if mode.kind == "unconditioned":
        return obs.copy()
    cols = np.repeat(np.asarray(eps, dtype=np.float64).reshape(-1, 1), mode.extra_dims(), axis=1)
    return np.concatenate([obs, cols], axis=1)


@dataclass
class PolicyParams:
    spec: MLPSpec
    mean_params: np.ndarray
    log_std: np.ndarray  # shape (ACTION_DIM,), state-independent

    @classmethod
    def create(cls, obs_dim, mode, hidden_dims, activation, seed, init_log_std=-0.5):
        spec = MLPSpec(
            input_dim=obs_dim + mode.extra_dims(),
            hidden_dims=tuple(hidden_dims),
            output_dim=ACTION_DIM,
            activation=activation,
        )
        return cls(
            spec=spec,
            mean_params=init(spec, seed),
            log_std=np.full(ACTION_DIM, float(init_log_std)),
        )

    def std(self) -> np.ndarray:
        return np.exp(np.clip(self.log_std, LOG_STD_MIN, LOG_STD_MAX))


def gaussian_log_prob(a: np.ndarray, mean: np.ndarray, std: np.ndarray) -> np.ndarray:
    """Diagonal-Gaussian log density; batched over leading axis if present."""
    z = (a - mean) / std
    return -0.5 * np.sum(z * z, axis=-1) - np.sum(np.log(std)) - 0.5 * ACTION_DIM * _LOG_2PI


def policy_mean(policy: PolicyParams, cond_input: np.ndarray) -> np.ndarray:
    mean = forward(policy.mean_params, policy.spec, cond_input)
    if not np.all(np.isfinite(mean)):
        raise PolicyDivergence("policy mean is non-finite")
    return mean


def act(obs, eps, policy: PolicyParams, mode: ConditioningMode, rng):
    """Sample an action; returns (clamped action, pre-clamp log_prob)."""
    mean = policy_mean(policy, condition_input(obs, eps, mode))
    std = policy.std()
    sample = mean + std * rng.standard_normal(ACTION_DIM)
    log_prob = float(gaussian_log_prob(sample, mean, std))
    return np.clip(sample, -1.0, 1.0), log_prob


def act_deterministic(obs, eps, policy: PolicyParams, mode: ConditioningMode):
    """Evaluation variant: the (clamped) mean action."""
    mean = policy_mean(policy, condition_input(obs, eps, mode))
    return np.clip(mean, -1.0, 1.0)


def sample_actions(cond_inputs, policy: PolicyParams, rng):
    """Batched rollout sampling; returns raw (unclamped) samples + log_probs.

    Raw samples are what the surrogate ratio is computed against; the
    environment clamps on execution.
    """
    means = forward(policy.mean_params, policy.spec, cond_inputs)
    if not np.all(np.isfinite(means)):
        raise PolicyDivergence("policy mean is non-finite")
    std = policy.std()
    samples = means + std * rng.standard_normal(means.shape)
    return samples, gaussian_log_prob(samples, means, std)


@dataclass
class CriticPair:
    """Reward and cost critics; decomposed or scalar depending on mode."""

    decomposed: bool
    # decomposed form
    xi_spec: MLPSpec = None
    w_spec: MLPSpec = None
    xi_r: np.ndarray = None
    xi_c: np.ndarray = None
    w_r: np.ndarray = None
    w_c: np.ndarray = None
    # scalar form
    v_spec: MLPSpec = None
    v_r: np.ndarray = None
    v_c: np.ndarray = None

    @classmethod
    def create_decomposed(cls, obs_dim, feature_dim, hidden_dims, activation, seed):
        xi_spec = MLPSpec(obs_dim, tuple(hidden_dims), feature_dim, activation)
        w_spec = MLPSpec(1, tuple(hidden_dims), feature_dim, activation)
        return cls(
            decomposed=True,
            xi_spec=xi_spec,
            w_spec=w_spec,
            xi_r=init(xi_spec, seed),
            xi_c=init(xi_spec, seed + 1),
            w_r=init(w_spec, seed + 2),
            w_c=init(w_spec, seed + 3),
        )

    @classmethod
    def create_scalar(cls, input_dim, hidden_dims, activation, seed):
        v_spec = MLPSpec(input_dim, tuple(hidden_dims), 1, activation)
        return cls(
            decomposed=False,
            v_spec=v_spec,
            v_r=init(v_spec, seed),
            v_c=init(v_spec, seed + 1),
        )

    def arrays(self) -> dict:
        if self.decomposed:
            return {"xi_r": self.xi_r, "xi_c": self.xi_c, "w_r": self.w_r, "w_c": self.w_c}
        return {"v_r": self.v_r, "v_c": self.v_c}

    def with_arrays(self, updates: dict) -> "CriticPair":
        return replace(self, **updates)


def value(obs, eps, critics: CriticPair, f: str, mode: ConditioningMode) -> float:
    """V_f(s, eps) for f in {reward, cost}."""
    if f not in ("reward", "cost"):
        raise ValueError(f"f must be 'reward' or 'cost', got {f!r}")
    if critics.decomposed:
        xi = forward(critics.xi_r if f == "reward" else critics.xi_c, critics.xi_spec, obs)
        w = forward(
            critics.w_r if f == "reward" else critics.w_c,
            critics.w_spec,
            np.array([check_level(eps)]),
        )
        return float(xi @ w)
    x = condition_input(obs, eps, mode)
    net = critics.v_r if f == "reward" else critics.v_c
    return float(forward(net, critics.v_spec, x)[0])


def values_batch(obs, eps, critics: CriticPair, f: str, mode: ConditioningMode) -> np.ndarray:
    """Batched V_f over obs (B, d) and eps (B,)."""
    if critics.decomposed:
        xi_net = critics.xi_r if f == "reward" else critics.xi_c
        w_net = critics.w_r if f == "reward" else critics.w_c
        xi = forward(xi_net, critics.xi_spec, obs)
        # only a handful of distinct levels appear per batch
        unique, inverse = np.unique(np.asarray(eps, dtype=np.float64), return_inverse=True)
        w_unique = forward(w_net, critics.w_spec, unique.reshape(-1, 1))
        return np.sum(xi * w_unique[inverse], axis=1)
    x = condition_inputs(obs, eps, mode)
    net = critics.v_r if f == "reward" else critics.v_c
    return forward(net, critics.v_spec, x)[:, 0]


def critic_loss(obs, eps, targets, critics: CriticPair, f: str, mode: ConditioningMode):
    """Mean squared error against target returns, with gradients.

    Returns (loss, grads) where grads maps the relevant array names of
    ``critics.arrays()`` to gradient vectors.
    """
    obs = np.asarray(obs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if obs.ndim != 2 or obs.shape[0] == 0:
        raise ValueError("critic_loss requires a nonempty batch")
    n = obs.shape[0]
    if critics.decomposed:
        xi_name, w_name = ("xi_r", "w_r") if f == "reward" else ("xi_c", "w_c")
        xi_net, w_net = critics.arrays()[xi_name], critics.arrays()[w_name]
        unique, inverse = np.unique(np.asarray(eps, dtype=np.float64), return_inverse=True)
        xi, xi_cache = forward_cached(xi_net, critics.xi_spec, obs)
        w_unique, w_cache = forward_cached(w_net, critics.w_spec, unique.reshape(-1, 1))
        w = w_unique[inverse]
        pred = np.sum(xi * w, axis=1)
        resid = pred - targets
        loss = float(np.mean(resid * resid))
        cot = (2.0 / n) * resid
        g_xi, _ = backward(xi_net, critics.xi_spec, obs, cot[:, None] * w, cache=xi_cache)
        # accumulate cotangents of samples sharing a level before the w backward
        cot_w = np.zeros((len(unique), xi.shape[1]))
        np.add.at(cot_w, inverse, cot[:, None] * xi)
        g_w, _ = backward(w_net, critics.w_spec, unique.reshape(-1, 1), cot_w, cache=w_cache)
        return loss, {xi_name: g_xi, w_name: g_w}
    v_name = "v_r" if f == "reward" else "v_c"
    net = critics.arrays()[v_name]
    x = condition_inputs(obs, eps, mode)
    pred, cache = forward_cached(net, critics.v_spec, x)
    resid = pred[:, 0] - targets
    loss = float(np.mean(resid * resid))
    cot = ((2.0 / n) * resid)[:, None]
    g, _ = backward(net, critics.v_spec, x, cot, cache=cache)
    return loss, {v_name: g}
