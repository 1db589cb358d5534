import numpy as np
import pytest

from quietwalk.env import (
    Action,
    EnvParams,
    EpisodeFinished,
    VecEnv,
    batch_step,
    cost_bounds,
    observe,
    reset,
    steady_state_velocity,
    step,
)
from quietwalk.noise_cost import CostParams, normalized_cost

ENV = EnvParams()
COST = CostParams()


def test_reset_deterministic_and_initial_conditions():
    a = reset(123, ENV)
    b = reset(123, ENV)
    assert a == b
    assert a.v == 0.0
    assert a.phase == 0 and a.t == 0


def test_reset_target_mean_matches_uniform():
    targets = np.array([reset(s, ENV).v_target for s in range(10_000)])
    lo, hi = ENV.v_target_range
    mean = (lo + hi) / 2
    se = (hi - lo) / np.sqrt(12) / np.sqrt(len(targets))
    assert abs(targets.mean() - mean) < 3 * se
    assert targets.min() >= lo and targets.max() <= hi


def test_zero_thrust_at_rest_stays_at_rest():
    state = reset(0, ENV)
    _, tr = step(state, Action(-1.0, -1.0), ENV, COST)
    assert tr.next_obs[0] == 0.0
    assert tr.snapshot.forces[0] == ENV.F_base
    assert tr.snapshot.impact_velocities[0] == 0.0


def test_held_action_converges_to_closed_form():
    v_star = steady_state_velocity(1.0, 1.0, ENV)
    assert v_star == pytest.approx(3.2, abs=1e-12)  # 8 * 0.8 / 2 with w_hat = 2
    state = reset(0, ENV)
    for _ in range(2000):
        if state.t >= ENV.episode_len:
            state = type(state)(v=state.v, v_target=state.v_target, phase=0, t=0)
        state, _ = step(state, Action(1.0, 1.0), ENV, COST)
    assert abs(state.v - v_star) < 1e-6


def test_reward_is_one_on_target():
    # with zero thrust from v = v_target = 0 drag keeps v' = 0
    params = EnvParams(v_target_range=(0.0, 0.0))
    state = reset(0, params)
    _, tr = step(state, Action(-1.0, -1.0), params, COST)
    assert tr.reward == 1.0


def test_phase_cycles_and_episode_terminates():
    state = reset(4, ENV)
    rng = np.random.default_rng(0)
    for k in range(ENV.episode_len):
        assert state.phase == k % 4
        state, tr = step(state, Action(*rng.uniform(-1, 1, 2)), ENV, COST)
        assert 0.0 < tr.reward <= 1.0
        assert 0.0 <= tr.cost <= 1.0
        assert tr.done == (k == ENV.episode_len - 1)
    with pytest.raises(EpisodeFinished):
        step(state, Action(0.0, 0.0), ENV, COST)


def test_step_cost_equals_normalized_cost_of_snapshot():
    state = reset(9, ENV)
    _, tr = step(state, Action(0.3, 0.7), ENV, COST)
    assert tr.cost == normalized_cost(tr.snapshot, COST)


def test_batch_step_matches_single_steps():
    rng = np.random.default_rng(17)
    states = [reset(s, ENV) for s in range(64)]
    actions = [Action(*rng.uniform(-1, 1, 2)) for _ in range(64)]
    batched_states, batched = batch_step(states, actions, ENV, COST)
    for i, (s, a) in enumerate(zip(states, actions)):
        single_state, single = step(s, a, ENV, COST)
        assert batched_states[i] == single_state
        assert batched[i].reward == single.reward
        assert batched[i].cost == single.cost
        assert np.array_equal(batched[i].next_obs, single.next_obs)


def test_batch_step_single_and_permutation():
    state = reset(2, ENV)
    act = Action(0.1, -0.2)
    _, batched = batch_step([state], [act], ENV, COST)
    _, single = step(state, act, ENV, COST)
    assert batched[0].reward == single.reward

    rng = np.random.default_rng(1)
    states = [reset(s, ENV) for s in range(8)]
    actions = [Action(*rng.uniform(-1, 1, 2)) for _ in range(8)]
    _, fwd = batch_step(states, actions, ENV, COST)
    perm = [5, 2, 7, 0, 1, 6, 3, 4]
    _, shuffled = batch_step([states[i] for i in perm], [actions[i] for i in perm], ENV, COST)
    for j, i in enumerate(perm):
        assert shuffled[j].reward == fwd[i].reward


def test_batch_step_length_mismatch():
    with pytest.raises(ValueError):
        batch_step([reset(0, ENV)], [], ENV, COST)


def test_quiet_stepping_limits_speed():
    assert steady_state_velocity(1.0, -0.8, ENV) < steady_state_velocity(1.0, 1.0, ENV)
    # quiet gait cannot reach the top commanded speed
    assert steady_state_velocity(1.0, -0.8, ENV) < 2.25


def test_determinism_of_trajectories():
    rng_a, rng_b = np.random.default_rng(5), np.random.default_rng(5)

    def rollout(rng):
        state = reset(33, ENV)
        out = []
        for _ in range(50):
            state, tr = step(state, Action(*rng.uniform(-1, 1, 2)), ENV, COST)
            out.append((state.v, tr.reward, tr.cost))
        return out

    assert rollout(rng_a) == rollout(rng_b)


def test_observation_layout():
    state = reset(7, ENV)
    obs = observe(state)
    assert obs.shape == (6,)
    assert obs[0] == state.v and obs[1] == state.v_target
    assert obs[2:].sum() == 1.0 and obs[2 + state.phase] == 1.0


def test_cost_bounds_bracket_rollout_costs():
    lo, hi = cost_bounds(ENV, COST)
    assert 0.0 < lo < hi < 1.0
    assert hi == pytest.approx(0.25, abs=1e-9)
    rng = np.random.default_rng(21)
    state = reset(0, ENV)
    for _ in range(100):
        state, tr = step(state, Action(*rng.uniform(-1, 1, 2)), ENV, COST)
        assert lo - 1e-12 <= tr.cost <= hi + 1e-12


def test_vecenv_resets_and_determinism():
    venv_a = VecEnv(4, ENV, COST, seed=42)
    venv_b = VecEnv(4, ENV, COST, seed=42)
    rng = np.random.default_rng(0)
    actions = rng.uniform(-1, 1, (4, 2))
    for _ in range(ENV.episode_len + 5):
        r_a, c_a, _, _ = venv_a.step(actions)
        r_b, c_b, _, _ = venv_b.step(actions)
        assert np.array_equal(r_a, r_b) and np.array_equal(c_a, c_b)
    # after episode_len steps every env has reset and drawn a new target
    assert all(s.t == 5 for s in venv_a.states)


def test_vecenv_matches_scalar_step_oracle():
    venv = VecEnv(3, ENV, COST, seed=9)
    rng = np.random.default_rng(1)
    states = venv.states
    for _ in range(ENV.episode_len - 1):  # stop short of the reset boundary
        actions = rng.uniform(-1, 1, (3, 2))
        rewards, costs, dones, abs_errors = venv.step(actions)
        for i in range(3):
            states[i], tr = step(states[i], Action(*actions[i]), ENV, COST)
            assert rewards[i] == pytest.approx(tr.reward, abs=1e-12)
            assert costs[i] == pytest.approx(tr.cost, abs=1e-12)
            assert bool(dones[i]) == tr.done
            assert abs_errors[i] == pytest.approx(abs(states[i].v - states[i].v_target), abs=1e-12)
        assert np.allclose(venv.observations()[:, 0], [s.v for s in states], atol=1e-12)


def test_vecenv_rejects_bad_action_shape():
    venv = VecEnv(2, ENV, COST, seed=0)
    with pytest.raises(ValueError):
        venv.step(np.zeros((3, 2)))
