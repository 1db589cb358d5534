import math

import numpy as np
import pytest

from quietwalk.agent import ConditioningMode, PolicyParams
from quietwalk.env import EnvParams, cost_bounds
from quietwalk.noise_cost import CostParams
from quietwalk.trainer import (
    AgentConfig,
    LagrangeState,
    Trainer,
    TrainerConfig,
    TrainingDiverged,
    combined_advantage,
    gae,
    gae_batch,
    reward_weight_schedule,
    surrogate_loss,
    uniform_levels,
    update_lagrange,
)


def brute_force_gae1(values, bootstrap, rewards, dones, gamma):
    """Discounted return minus value, restarted at episode boundaries."""
    T = len(rewards)
    adv = np.zeros(T)
    for t in range(T):
        total, disc = 0.0, 1.0
        for k in range(t, T):
            total += disc * rewards[k]
            if dones[k]:
                break
            disc *= gamma
        else:
            total += disc * bootstrap  # disc carries gamma^(T-t) after the loop
        adv[t] = total - values[t]
    return adv


# ----------------------------------------------------------------- schedules


def test_uniform_levels():
    levels = uniform_levels(16)
    assert levels[0] == 0.0 and levels[-1] == 1.0
    assert np.all(np.diff(levels) > 0)
    assert np.allclose(np.diff(levels), np.diff(levels)[0])
    with pytest.raises(ValueError):
        uniform_levels(1)


# ----------------------------------------------------------------------- GAE


def test_gae_lambda1_matches_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(200):
        T = int(rng.integers(1, 13))
        rewards = rng.normal(size=T)
        values = rng.normal(size=T)
        dones = rng.random(T) < 0.2
        bootstrap = float(rng.normal())
        adv, rets = gae(values, bootstrap, rewards, dones, 0.97, 1.0)
        expected = brute_force_gae1(values, bootstrap, rewards, dones, 0.97)
        assert np.allclose(adv, expected, atol=1e-8)
        assert np.allclose(rets, adv + values, atol=1e-12)


def test_gae_lambda0_is_one_step_td():
    rng = np.random.default_rng(1)
    T = 10
    rewards = rng.normal(size=T)
    values = rng.normal(size=T)
    dones = np.zeros(T, dtype=bool)
    dones[4] = True
    bootstrap = 0.8
    adv, _ = gae(values, bootstrap, rewards, dones, 0.99, 0.0)
    for t in range(T):
        nv = bootstrap if t == T - 1 else values[t + 1]
        mask = 0.0 if dones[t] else 1.0
        assert adv[t] == pytest.approx(rewards[t] + 0.99 * nv * mask - values[t], abs=1e-12)


def test_gae_zero_inputs():
    adv, rets = gae(np.zeros(6), 0.0, np.zeros(6), np.zeros(6, dtype=bool), 0.99, 0.95)
    assert np.all(adv == 0.0) and np.all(rets == 0.0)


def test_gae_length_mismatch():
    with pytest.raises(ValueError):
        gae(np.zeros(3), 0.0, np.zeros(4), np.zeros(4, dtype=bool), 0.99, 0.95)


def test_gae_batch_matches_single():
    rng = np.random.default_rng(2)
    E, T = 4, 9
    values = rng.normal(size=(E, T))
    rewards = rng.normal(size=(E, T))
    dones = rng.random((E, T)) < 0.15
    bootstrap = rng.normal(size=E)
    adv_b, ret_b = gae_batch(values, bootstrap, rewards, dones, 0.99, 0.95)
    for e in range(E):
        adv, ret = gae(values[e], bootstrap[e], rewards[e], dones[e], 0.99, 0.95)
        assert np.allclose(adv_b[e], adv, atol=1e-12)
        assert np.allclose(ret_b[e], ret, atol=1e-12)


# ---------------------------------------------------------- combined advantage


def test_combined_advantage_identities():
    a_r = np.array([2.0, -1.0, 0.3])
    a_c = np.array([1.0, 0.5, -0.2])
    assert np.array_equal(combined_advantage(a_r, a_c, 0.0), a_r)
    assert combined_advantage(2.0, 1.0, 1.0) == pytest.approx(0.5)
    big = combined_advantage(a_r, a_c, 1e12)
    assert np.allclose(big, -a_c, atol=1e-9)
    with pytest.raises(ValueError):
        combined_advantage(a_r, a_c, -0.1)


def test_combined_advantage_monotone_in_cost():
    rng = np.random.default_rng(3)
    for _ in range(100):
        a_r = float(rng.normal())
        c1, c2 = sorted(rng.normal(size=2))
        lam = float(rng.uniform(0.01, 5))
        assert combined_advantage(a_r, c2, lam) <= combined_advantage(a_r, c1, lam)


# ------------------------------------------------------------------------ PID


def test_update_lagrange_hand_case():
    state = LagrangeState(kp=0.5, ki=0.05, kd=0.1)
    new = update_lagrange(state, measured_cost=0.2, eps=0.0)
    assert new.lam == pytest.approx(0.13, abs=1e-12)
    assert new.integral == pytest.approx(0.2)
    assert new.prev_error == pytest.approx(0.2)


def test_update_lagrange_projection():
    state = LagrangeState()
    new = update_lagrange(state, measured_cost=0.0, eps=1.0)  # e = -1
    assert new.lam == 0.0
    assert new.integral == 0.0  # clamped at zero from below


def test_update_lagrange_increasing_under_persistent_error():
    state = LagrangeState()
    lams = []
    for _ in range(30):
        state = update_lagrange(state, measured_cost=0.1, eps=0.0)
        lams.append(state.lam)
    assert all(b > a for a, b in zip(lams[1:], lams[2:]))  # integral accumulation
    assert lams[-1] > lams[0]


def test_update_lagrange_nonnegative_random_sequences():
    rng = np.random.default_rng(4)
    state = LagrangeState()
    for _ in range(10_000):
        state = update_lagrange(state, float(rng.uniform(0, 1)), float(rng.uniform(0, 1)))
        assert state.lam >= 0.0
        assert 0.0 <= state.integral <= state.integral_max


def test_update_lagrange_rejects_non_finite():
    with pytest.raises(TrainingDiverged):
        update_lagrange(LagrangeState(), float("nan"), 0.5)


# ------------------------------------------------------------------- schedule


def test_reward_weight_schedule():
    assert reward_weight_schedule(2000, 2000, 0.01) == pytest.approx(0.5)
    assert reward_weight_schedule(0, 2000, 0.01) == pytest.approx(1.0, abs=1e-8)
    assert reward_weight_schedule(100_000, 2000, 0.01) == pytest.approx(0.0, abs=1e-12)
    assert reward_weight_schedule(2300, 2000, 0.01) == pytest.approx(1 / (1 + math.e**3), abs=1e-12)
    with pytest.raises(ValueError):
        reward_weight_schedule(-1, 2000, 0.01)


# ------------------------------------------------------------------ surrogate


def _toy_policy(cond_dim=3, seed=0):
    mode = ConditioningMode("conc")
    return PolicyParams.create(cond_dim - 1, mode, (4,), "tanh", seed)


def test_surrogate_new_equals_old_gives_mean_advantage():
    policy = _toy_policy()
    rng = np.random.default_rng(5)
    cond = rng.normal(size=(32, 3))
    from quietwalk.agent import sample_actions

    actions, lps = sample_actions(cond, policy, rng)
    a_hat = rng.normal(size=32)
    loss, _, _ = surrogate_loss(cond, actions, lps, a_hat, policy, 0.2)
    assert loss == pytest.approx(-float(np.mean(a_hat)), abs=1e-10)


def test_surrogate_clip_case():
    # eta = 2, A = 1, clip 0.2 -> objective contribution min(2, 1.2) = 1.2
    policy = _toy_policy(seed=2)
    rng = np.random.default_rng(6)
    cond = rng.normal(size=(1, 3))
    from quietwalk.agent import sample_actions

    actions, lps = sample_actions(cond, policy, rng)
    old_lps = lps - math.log(2.0)  # makes the ratio exactly 2
    loss, _, _ = surrogate_loss(cond, actions, old_lps, np.array([1.0]), policy, 0.2)
    assert loss == pytest.approx(-1.2, abs=1e-10)


def test_surrogate_zero_advantage_zero_gradient():
    policy = _toy_policy(seed=3)
    rng = np.random.default_rng(7)
    cond = rng.normal(size=(16, 3))
    from quietwalk.agent import sample_actions

    actions, lps = sample_actions(cond, policy, rng)
    loss, g_mean, g_std = surrogate_loss(cond, actions, lps, np.zeros(16), policy, 0.2)
    assert loss == 0.0
    assert np.all(g_mean == 0.0) and np.all(g_std == 0.0)


def test_surrogate_objective_bounded_by_min_structure():
    policy = _toy_policy(seed=4)
    rng = np.random.default_rng(8)
    cond = rng.normal(size=(64, 3))
    from quietwalk.agent import sample_actions
    from quietwalk.nn import forward

    actions, _ = sample_actions(cond, policy, rng)
    old_lps = rng.normal(size=64)  # arbitrary old log-probs: wide ratio spread
    a_hat = rng.normal(size=64)
    means = forward(policy.mean_params, policy.spec, cond)
    std = policy.std()
    from quietwalk.agent import gaussian_log_prob

    new_lps = gaussian_log_prob(actions, means, std)
    eta = np.exp(new_lps - old_lps)
    per_sample = np.minimum(eta * a_hat, np.clip(eta, 0.8, 1.2) * a_hat)
    assert np.all(per_sample <= np.maximum(eta * a_hat, np.clip(eta, 0.8, 1.2) * a_hat) + 1e-12)
    loss, _, _ = surrogate_loss(cond, actions, old_lps, a_hat, policy, 0.2)
    assert loss == pytest.approx(-float(np.mean(per_sample)), abs=1e-10)


def test_surrogate_gradient_matches_finite_differences():
    policy = _toy_policy(seed=9)
    rng = np.random.default_rng(9)
    cond = rng.normal(size=(8, 3))
    from quietwalk.agent import sample_actions

    actions, lps = sample_actions(cond, policy, rng)
    old_lps = lps + rng.normal(0, 0.1, size=8)
    a_hat = rng.normal(size=8)

    def loss_at(params, log_std):
        saved_p, saved_s = policy.mean_params, policy.log_std
        policy.mean_params, policy.log_std = params, log_std
        val, _, _ = surrogate_loss(cond, actions, old_lps, a_hat, policy, 0.2)
        policy.mean_params, policy.log_std = saved_p, saved_s
        return val

    _, g_mean, g_std = surrogate_loss(cond, actions, old_lps, a_hat, policy, 0.2)
    h = 1e-6
    for i in range(0, len(policy.mean_params), max(1, len(policy.mean_params) // 20)):
        up, dn = policy.mean_params.copy(), policy.mean_params.copy()
        up[i] += h
        dn[i] -= h
        numeric = (loss_at(up, policy.log_std) - loss_at(dn, policy.log_std)) / (2 * h)
        assert g_mean[i] == pytest.approx(numeric, abs=1e-5, rel=1e-3)
    for j in range(2):
        up, dn = policy.log_std.copy(), policy.log_std.copy()
        up[j] += h
        dn[j] -= h
        numeric = (loss_at(policy.mean_params, up) - loss_at(policy.mean_params, dn)) / (2 * h)
        assert g_std[j] == pytest.approx(numeric, abs=1e-5, rel=1e-3)


def test_surrogate_empty_buffer():
    policy = _toy_policy()
    with pytest.raises(ValueError):
        surrogate_loss(np.zeros((0, 3)), np.zeros((0, 2)), np.zeros(0), np.zeros(0), policy, 0.2)


# -------------------------------------------------------------------- trainer


def small_trainer(mode="cncp", **kwargs):
    cfg = TrainerConfig(
        n_levels=4, horizon=32, iterations=2, minibatch_size=64,
        epochs_per_iter=2, seed=kwargs.pop("seed", 0), **kwargs,
    )
    agent_cfg = AgentConfig(hidden_dims=(16, 16), feature_dim=4)
    extra = {}
    if mode == "oracle_safe":
        extra["fixed_eps"] = 0.0
    if mode == "oracle_morl":
        extra["beta"] = 1.0
    return Trainer(mode, EnvParams(), CostParams(), agent_cfg, cfg, **extra)


def test_collect_rollouts_shapes_and_eps_binding():
    tr = small_trainer()
    buffers = tr.collect_rollouts()
    assert len(buffers) == 4
    for level, buf in enumerate(buffers):
        assert buf.obs.shape == (1, 32, 6)
        assert buf.eps == tr.levels[level]
        # every conditioned input carries this buffer's level
        assert np.all(buf.cond[:, :, -1] == buf.eps)


def test_collect_rollouts_deterministic():
    a = small_trainer(seed=3).collect_rollouts()
    b = small_trainer(seed=3).collect_rollouts()
    for x, y in zip(a, b):
        assert np.array_equal(x.actions, y.actions)
        assert np.array_equal(x.rewards, y.rewards)
        assert np.array_equal(x.costs, y.costs)


def test_collect_rollouts_zero_horizon():
    tr = small_trainer()
    buffers = tr.collect_rollouts(horizon=0)
    assert all(buf.size == 0 for buf in buffers)


def test_train_iteration_runs_and_reports():
    tr = small_trainer()
    metrics = tr.train_iteration(tr.collect_rollouts())
    assert metrics["iter"] == 0
    assert len(metrics["lambda"]) == 4
    assert len(metrics["measured_cost"]) == 4
    assert all(lam >= 0 for lam in metrics["lambda"])
    assert math.isfinite(metrics["actor_loss"])


def test_buffer_isolation():
    tr = small_trainer(seed=5)
    buffers = tr.collect_rollouts()
    target = buffers[1]
    loss_before, _, _ = surrogate_loss(
        target.flat(target.cond), target.flat(target.actions),
        target.flat(target.log_probs), np.ones(target.size), tr.policy, 0.2,
    )
    buffers[2].cond[:, :, -1] = 0.77  # corrupt another buffer's level
    loss_after, _, _ = surrogate_loss(
        target.flat(target.cond), target.flat(target.actions),
        target.flat(target.log_probs), np.ones(target.size), tr.policy, 0.2,
    )
    assert loss_before == loss_after


def test_lambda_frozen_zero_equals_plain_ppo_advantages():
    # with lambda = 0 the combined advantage is exactly the reward stream
    rng = np.random.default_rng(11)
    a_r = rng.normal(size=128)
    a_c = rng.normal(size=128)
    from quietwalk.trainer import normalize_advantages

    combined = combined_advantage(normalize_advantages(a_r), normalize_advantages(a_c), 0.0)
    assert np.array_equal(combined, normalize_advantages(a_r))


def test_oracle_safe_single_level():
    tr = small_trainer("oracle_safe")
    assert tr.n_levels == 1
    assert tr.conditioning.kind == "unconditioned"
    buffers = tr.collect_rollouts()
    assert len(buffers) == 1
    assert buffers[0].obs.shape[0] == 4  # env count preserved
    tr.train_iteration(buffers)


def test_oracle_morl_no_multipliers():
    tr = small_trainer("oracle_morl")
    assert not tr.use_lagrange
    metrics = tr.train_iteration(tr.collect_rollouts())
    assert metrics["lambda"] == []


def test_ppo_mode_is_morl_beta_zero():
    tr = Trainer(
        "ppo", EnvParams(), CostParams(), AgentConfig(hidden_dims=(16,), feature_dim=4),
        TrainerConfig(n_levels=2, horizon=16, iterations=1, seed=0),
    )
    assert tr.mode == "oracle_morl" and tr.beta == 0.0


def test_budget_map_env_range():
    tr = small_trainer()
    lo, hi = cost_bounds(EnvParams(), CostParams())
    assert tr.budgets[0] == pytest.approx(lo)
    assert tr.budgets[-1] == pytest.approx(hi)
    tr_id = small_trainer(budget_map="identity")
    assert np.array_equal(tr_id.budgets, tr_id.levels)
