"""Deterministic evaluation of trained checkpoints over the (eps, v_target)
grid, emitting one structured record per cell.

Conditioned policies are rolled out once per (eps, v_target). Unconditioned
checkpoints ignore the level input: fixed-level oracles are evaluated at
their training level only, scalarized-reward oracles are rolled out per
v_target and their statistics replicated across the eps grid so violation
metrics remain comparable.
"""

from __future__ import annotations

import numpy as np

from .agent import act_deterministic
from .checkpoint import CheckpointBundle
from .env import Action, observe, reset, step


def rollout_stats(bundle: CheckpointBundle, policy_eps: float, v_target: float):
    """One deterministic episode; returns (mean_cost, tracking_error, mean_reward)."""
    params = bundle.env_params
    state = reset(0, params)
    state = type(state)(v=state.v, v_target=float(v_target), phase=state.phase, t=state.t)
    costs, abs_errors, rewards = [], [], []
    for _ in range(params.episode_len):
        obs = observe(state)
        a = act_deterministic(obs, policy_eps, bundle.policy, bundle.conditioning)
        state, tr = step(state, Action(a[0], a[1]), params, bundle.cost_params)
        costs.append(tr.cost)
        rewards.append(tr.reward)
        abs_errors.append(abs(state.v - v_target))
    return float(np.mean(costs)), float(np.mean(abs_errors)), float(np.mean(rewards))


def evaluate_checkpoint(bundle: CheckpointBundle, eval_eps, v_targets, method: str = None):
    """Evaluation records for one checkpoint across the grid."""
    method = method or bundle.mode
    records = []

    def record(eps, policy_eps, v_target, stats):
        mean_cost, tracking_error, mean_reward = stats
        return {
            "kind": "eval",
            "method": method,
            "mode": bundle.mode,
            "eps": float(eps),
            "policy_eps": float(policy_eps),
            "v_target": float(v_target),
            "seed": int(bundle.seed),
            "mean_cost": mean_cost,
            "tracking_error": tracking_error,
            "mean_reward": mean_reward,
        }

    if bundle.conditioned:
        for eps in eval_eps:
            for v_target in v_targets:
                stats = rollout_stats(bundle, float(eps), float(v_target))
                records.append(record(eps, eps, v_target, stats))
    elif bundle.mode == "oracle_safe":
        eps = float(bundle.fixed_eps)
        for v_target in v_targets:
            stats = rollout_stats(bundle, eps, float(v_target))
            records.append(record(eps, eps, v_target, stats))
    else:  # scalarized-reward oracle: behavior is level-independent
        for v_target in v_targets:
            stats = rollout_stats(bundle, 0.0, float(v_target))
            for eps in eval_eps:
                records.append(record(eps, 0.0, v_target, stats))
    return records
