import numpy as np
import pytest

from quietwalk.nn import (
    AdamState,
    MLPSpec,
    NonFiniteGradient,
    adam_init,
    adam_update,
    backward,
    forward,
    init,
    load_params,
    param_count,
    save_params,
)


def numerical_grad(params, spec, x, cot, h=1e-6):
    grad = np.zeros_like(params)
    for i in range(len(params)):
        up, down = params.copy(), params.copy()
        up[i] += h
        down[i] -= h
        grad[i] = (
            float(np.sum(forward(up, spec, x) * cot)) - float(np.sum(forward(down, spec, x) * cot))
        ) / (2 * h)
    return grad


def test_init_deterministic_and_biases_zero():
    spec = MLPSpec(4, (8, 8), 2)
    a, b = init(spec, 3), init(spec, 3)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, init(spec, 4))
    # biases: first bias block starts after 4*8 weights
    assert np.all(a[32:40] == 0.0)


def test_init_variance_scaling():
    spec = MLPSpec(256, (256,), 1)
    params = init(spec, 0)
    w0 = params[: 256 * 256]
    assert abs(w0.var() - 1.0 / 256) < 0.2 / 256


def test_forward_zero_params():
    spec = MLPSpec(3, (5,), 2)
    assert np.array_equal(forward(np.zeros(param_count(spec)), spec, np.ones(3)), np.zeros(2))


def test_forward_hand_computed_linear():
    # 1 input, no hidden, 1 output: y = w*x + b
    spec = MLPSpec(1, (), 1)
    params = np.array([2.0, 0.5])
    assert forward(params, spec, np.array([3.0])) == pytest.approx(6.5)


def test_forward_hand_computed_one_hidden_tanh():
    spec = MLPSpec(2, (2,), 1, activation="tanh")
    # W0 = [[1, 0], [0, 1]], b0 = [0.1, -0.1], W1 = [[1], [2]], b1 = [0.5]
    params = np.array([1, 0, 0, 1, 0.1, -0.1, 1, 2, 0.5], dtype=float)
    x = np.array([0.3, -0.2])
    h = np.tanh(np.array([0.4, -0.3]))
    assert forward(params, spec, x)[0] == pytest.approx(h[0] + 2 * h[1] + 0.5, abs=1e-12)


def test_batched_forward_equals_per_sample():
    spec = MLPSpec(4, (6, 5), 3)
    params = init(spec, 1)
    xs = np.random.default_rng(2).normal(size=(10, 4))
    batched = forward(params, spec, xs)
    for i in range(10):
        assert np.allclose(batched[i], forward(params, spec, xs[i]), atol=1e-12)


def test_backward_linear_case():
    spec = MLPSpec(1, (), 1)
    params = np.array([2.0, 0.5])
    grad, grad_in = backward(params, spec, np.array([3.0]), np.array([1.0]))
    assert grad[0] == pytest.approx(3.0)  # d(w*x+b)/dw = x
    assert grad[1] == pytest.approx(1.0)
    assert grad_in[0] == pytest.approx(2.0)  # d/dx = w


def test_backward_zero_cotangent():
    spec = MLPSpec(3, (4,), 2)
    params = init(spec, 0)
    grad, grad_in = backward(params, spec, np.ones(3), np.zeros(2))
    assert np.all(grad == 0) and np.all(grad_in == 0)


def test_backward_does_not_mutate_params():
    spec = MLPSpec(3, (4,), 2)
    params = init(spec, 0)
    before = params.copy()
    backward(params, spec, np.ones(3), np.ones(2))
    assert np.array_equal(params, before)


@pytest.mark.parametrize("activation", ["elu", "tanh"])
def test_gradient_check_random_small_nets(activation):
    rng = np.random.default_rng(99)
    for trial in range(50):
        dims = (int(rng.integers(1, 5)), int(rng.integers(1, 9)), int(rng.integers(1, 9)))
        spec = MLPSpec(dims[0], (dims[1], dims[2]), int(rng.integers(1, 4)), activation)
        params = init(spec, trial) + rng.normal(0, 0.1, param_count(spec))
        x = rng.normal(size=spec.input_dim)
        cot = rng.normal(size=spec.output_dim)
        analytic, _ = backward(params, spec, x, cot)
        numeric = numerical_grad(params, spec, x, cot)
        denom = max(np.linalg.norm(numeric), 1e-8)
        assert np.linalg.norm(analytic - numeric) / denom < 1e-5


def test_backward_batched_input_gradient():
    spec = MLPSpec(3, (5,), 2)
    params = init(spec, 7)
    xs = np.random.default_rng(0).normal(size=(4, 3))
    cots = np.random.default_rng(1).normal(size=(4, 2))
    grad_sum, grad_in = backward(params, spec, xs, cots)
    acc = np.zeros_like(params)
    for i in range(4):
        g, gi = backward(params, spec, xs[i], cots[i])
        acc += g
        assert np.allclose(gi, grad_in[i], atol=1e-12)
    assert np.allclose(grad_sum, acc, atol=1e-12)


def test_adam_zero_gradient_fresh_state():
    params = np.array([1.0, -2.0])
    new, state = adam_update(params, np.zeros(2), adam_init(2), lr=0.1)
    assert np.array_equal(new, params)
    assert state.t == 1


def test_adam_first_step_is_signed_lr():
    params = np.zeros(3)
    grad = np.array([0.5, -3.0, 1e-3])
    lr = 0.01
    new, _ = adam_update(params, grad, adam_init(3), lr=lr)
    assert np.allclose(new, -lr * np.sign(grad), rtol=1e-4)


def test_adam_two_steps_match_hand_recurrence():
    b1, b2, eps, lr = 0.9, 0.999, 1e-8, 0.05
    p = np.array([1.0, 2.0])
    g1 = np.array([0.3, -0.7])
    g2 = np.array([-0.1, 0.4])
    m = v = np.zeros(2)
    expect = p.copy()
    for t, g in enumerate((g1, g2), start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        expect = expect - lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
    got, state = adam_update(p, g1, adam_init(2), lr=lr)
    got, state = adam_update(got, g2, state, lr=lr)
    assert np.allclose(got, expect, atol=1e-15)


def test_adam_rejects_non_finite():
    with pytest.raises(NonFiniteGradient):
        adam_update(np.zeros(2), np.array([np.nan, 0.0]), adam_init(2))


def test_param_file_round_trip_bit_exact(tmp_path):
    spec = MLPSpec(5, (7, 3), 2, activation="tanh")
    params = init(spec, 12) * np.pi
    path = tmp_path / "net.npz"
    save_params(path, spec, params)
    spec2, params2 = load_params(path)
    assert spec2 == spec
    assert np.array_equal(params2, params)
