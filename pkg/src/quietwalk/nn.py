"""Small MLP function approximator with analytic gradients and Adam.

Parameters live in a single flat float64 vector with a fixed layout
(per layer: row-major weight matrix, then bias). The backward pass is an
exact reverse-mode gradient of <output, cotangent>, checked against finite
differences in the tests. No activation on the final layer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ACTIVATIONS = ("tanh", "elu")


class NonFiniteGradient(ValueError):
    """Update rejected because the gradient contains non-finite entries."""


@dataclass(frozen=True)
class MLPSpec:
    input_dim: int
    hidden_dims: tuple
    output_dim: int
    activation: str = "elu"

    def __post_init__(self):
        dims = (self.input_dim, *self.hidden_dims, self.output_dim)
        if any(int(d) < 1 for d in dims):
            raise ValueError("all MLP dimensions must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        object.__setattr__(self, "hidden_dims", tuple(int(d) for d in self.hidden_dims))

    @property
    def layer_dims(self):
        return (self.input_dim, *self.hidden_dims, self.output_dim)


def param_count(spec: MLPSpec) -> int:
    dims = spec.layer_dims
    return sum((dims[i] + 1) * dims[i + 1] for i in range(len(dims) - 1))


def _layer_slices(spec: MLPSpec):
    dims = spec.layer_dims
    offset = 0
    for i in range(len(dims) - 1):
        fan_in, fan_out = dims[i], dims[i + 1]
        w = slice(offset, offset + fan_in * fan_out)
        offset += fan_in * fan_out
        b = slice(offset, offset + fan_out)
        offset += fan_out
        yield fan_in, fan_out, w, b


def init(spec: MLPSpec, seed: int) -> np.ndarray:
    """Fan-in-scaled normal weights (variance 1/fan_in), zero biases."""
    rng = np.random.default_rng(seed)
    params = np.zeros(param_count(spec))
    for fan_in, fan_out, w, _b in _layer_slices(spec):
        params[w] = rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=fan_in * fan_out)
    return params


def _act(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "tanh":
        return np.tanh(z)
    # elu via one vectorized exp: max(z,0) + exp(min(z,0)) - 1
    return np.maximum(z, 0.0) + np.exp(np.minimum(z, 0.0)) - 1.0


def _act_grad(z: np.ndarray, a: np.ndarray, kind: str) -> np.ndarray:
    if kind == "tanh":
        return 1.0 - a * a
    return np.exp(np.minimum(z, 0.0))  # 1 where z > 0, exp(z) otherwise


def forward(params: np.ndarray, spec: MLPSpec, x: np.ndarray) -> np.ndarray:
    """Evaluate the network; accepts (input_dim,) or (B, input_dim)."""
    y, _ = forward_cached(params, spec, x)
    return y


def forward_cached(params: np.ndarray, spec: MLPSpec, x: np.ndarray):
    """Forward pass returning (output, cache) for reuse in backward."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    h = x.reshape(1, -1) if single else x
    if h.shape[1] != spec.input_dim:
        raise ValueError(f"input dim {h.shape[1]} != spec input_dim {spec.input_dim}")
    layers = list(_layer_slices(spec))
    pre, post = [], [h]
    for k, (fan_in, fan_out, w, b) in enumerate(layers):
        z = post[-1] @ params[w].reshape(fan_in, fan_out) + params[b]
        pre.append(z)
        if k < len(layers) - 1:
            post.append(_act(z, spec.activation))
        else:
            post.append(z)
    out = post[-1]
    return (out[0] if single else out), (pre, post, single)


def backward(params, spec: MLPSpec, x, output_cotangent, cache=None):
    """Exact gradient of <output, cotangent> w.r.t. params and input.

    Param gradients are summed over the batch; the input gradient keeps the
    batch shape. Does not mutate ``params``.
    """
    if cache is None:
        _, cache = forward_cached(params, spec, x)
    pre, post, single = cache
    cot = np.asarray(output_cotangent, dtype=np.float64)
    cot = cot.reshape(1, -1) if cot.ndim == 1 else cot
    if cot.shape != pre[-1].shape:
        raise ValueError(f"cotangent shape {cot.shape} != output shape {pre[-1].shape}")
    layers = list(_layer_slices(spec))
    grad = np.zeros_like(params)
    delta = cot
    for k in range(len(layers) - 1, -1, -1):
        fan_in, fan_out, w, b = layers[k]
        grad[w] = (post[k].T @ delta).ravel()
        grad[b] = delta.sum(axis=0)
        delta = delta @ params[w].reshape(fan_in, fan_out).T
        if k > 0:
            delta = delta * _act_grad(pre[k - 1], post[k], spec.activation)
    grad_input = delta[0] if single else delta
    return grad, grad_input


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0


def adam_init(n: int) -> AdamState:
    return AdamState(m=np.zeros(n), v=np.zeros(n), t=0)


def adam_update(
    params: np.ndarray,
    grad: np.ndarray,
    state: AdamState,
    lr: float = 3e-4,
    betas=(0.9, 0.999),
    eps: float = 1e-8,
):
    """One bias-corrected adaptive-moment step; returns (params', state')."""
    if params.shape != grad.shape:
        raise ValueError("params/grad length mismatch")
    if not np.all(np.isfinite(grad)):
        raise NonFiniteGradient("gradient contains NaN or Inf")
    b1, b2 = betas
    m = b1 * state.m + (1.0 - b1) * grad
    v = b2 * state.v + (1.0 - b2) * grad * grad
    t = state.t + 1
    m_hat = m / (1.0 - b1**t)
    v_hat = v / (1.0 - b2**t)
    new_params = params - lr * m_hat / (np.sqrt(v_hat) + eps)
    return new_params, AdamState(m=m, v=v, t=t)


def save_params(path, spec: MLPSpec, params: np.ndarray):
    """Self-describing parameter file; round-trips bit-exactly."""
    np.savez(
        path,
        params=np.asarray(params, dtype=np.float64),
        input_dim=spec.input_dim,
        hidden_dims=np.asarray(spec.hidden_dims, dtype=np.int64),
        output_dim=spec.output_dim,
        activation=spec.activation,
    )


def load_params(path):
    with np.load(path, allow_pickle=False) as data:
        spec = MLPSpec(
            input_dim=int(data["input_dim"]),
            hidden_dims=tuple(int(d) for d in data["hidden_dims"]),
            output_dim=int(data["output_dim"]),
            activation=str(data["activation"]),
        )
        return spec, data["params"].copy()
