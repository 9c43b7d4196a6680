"""Elementwise activation functions with analytic derivatives."""

from __future__ import annotations

import enum
import time

import numpy as np

SELU_LAMBDA = 1.0507009873554805
SELU_ALPHA = 1.6732632423543772
CELU_ALPHA = 1.0

_GELU_C = float(np.sqrt(2.0 / np.pi))
_GELU_K = 0.044715


class ActivationKind(str, enum.Enum):
    RELU = "relu"
    SIGMOID = "sigmoid"
    TANH = "tanh"
    MISH = "mish"
    GELU = "gelu"
    SELU = "selu"
    CELU = "celu"

    @classmethod
    def parse(cls, value: "str | ActivationKind") -> "ActivationKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            valid = ", ".join(k.value for k in cls)
            raise ValueError(f"unknown activation {value!r}; expected one of: {valid}") from None


def _sigmoid(x):
    # exp only ever sees non-positive arguments
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def _softplus(x):
    return np.logaddexp(0.0, x)


def _relu(x, grad):
    a = np.maximum(x, 0.0)
    if not grad:
        return a, None
    return a, (x > 0).astype(x.dtype)


def _sigmoid_act(x, grad):
    s = _sigmoid(x)
    if not grad:
        return s, None
    return s, s * (1.0 - s)


def _tanh(x, grad):
    t = np.tanh(x)
    if not grad:
        return t, None
    return t, 1.0 - t * t


def _mish(x, grad):
    sp = _softplus(x)
    t = np.tanh(sp)
    a = x * t
    if not grad:
        return a, None
    return a, t + x * (1.0 - t * t) * _sigmoid(x)


def _gelu(x, grad):
    # tanh approximation; written with in-place ops, this is the hot loop of basis training
    # |x| beyond 50 saturates tanh anyway; clamping keeps x**2 (and the derivative) finite
    z2 = np.clip(x, -50.0, 50.0)
    z2 *= z2
    u = z2 * _GELU_K
    u += 1.0
    u *= x
    u *= _GELU_C
    t = np.tanh(u, out=u)
    a = t + 1.0
    a *= x
    a *= 0.5
    if not grad:
        return a, None
    d = t * t
    np.subtract(1.0, d, out=d)
    d *= x
    z2 *= 3.0 * _GELU_K
    z2 += 1.0
    d *= z2
    d *= 0.5 * _GELU_C
    t += 1.0
    t *= 0.5
    d += t
    return a, d


def _selu(x, grad):
    neg = np.exp(np.minimum(x, 0.0))
    a = SELU_LAMBDA * np.where(x > 0, x, SELU_ALPHA * (neg - 1.0))
    if not grad:
        return a, None
    return a, SELU_LAMBDA * np.where(x > 0, 1.0, SELU_ALPHA * neg)


def _celu(x, grad):
    neg = np.exp(np.minimum(x, 0.0) / CELU_ALPHA)
    a = np.maximum(x, 0.0) + np.minimum(0.0, CELU_ALPHA * (neg - 1.0))
    if not grad:
        return a, None
    return a, np.where(x > 0, 1.0, neg)


_IMPL = {
    ActivationKind.RELU: _relu,
    ActivationKind.SIGMOID: _sigmoid_act,
    ActivationKind.TANH: _tanh,
    ActivationKind.MISH: _mish,
    ActivationKind.GELU: _gelu,
    ActivationKind.SELU: _selu,
    ActivationKind.CELU: _celu,
}


def activate(kind, x):
    """Evaluate activation ``kind`` elementwise. Scalars in, scalars out."""
    kind = ActivationKind.parse(kind)
    arr = np.atleast_1d(np.asarray(x, dtype=np.float64))
    a, _ = _IMPL[kind](arr, False)
    return float(a[0]) if np.ndim(x) == 0 else a


def activation_grad(kind, x):
    """Analytic derivative of activation ``kind`` at ``x``."""
    kind = ActivationKind.parse(kind)
    arr = np.atleast_1d(np.asarray(x, dtype=np.float64))
    _, d = _IMPL[kind](arr, True)
    return float(d[0]) if np.ndim(x) == 0 else d


def activate_with_grad(kind: ActivationKind, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Value and derivative in one pass, sharing intermediates."""
    return _IMPL[kind](x, True)


def time_activation(kind, n_iters: int = 1000, batch_size: int = 100_000, seed: int = 0,
                    warmup: int = 10) -> dict:
    """Wall-clock totals of ``n_iters`` forward and backward elementwise passes.

    The backward pass is the chain-rule product ``upstream * f'(x)``, which
    is what one hidden layer costs during backpropagation.
    """
    if n_iters < 1:
        raise ValueError("n_iters must be >= 1")
    kind = ActivationKind.parse(kind)
    fn = _IMPL[kind]
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(batch_size) * 3.0
    upstream = rng.standard_normal(batch_size)

    for _ in range(warmup):
        fn(x, False)
        fn(x, True)

    t0 = time.perf_counter_ns()
    for _ in range(n_iters):
        fn(x, False)
    forward_ns = time.perf_counter_ns() - t0

    t0 = time.perf_counter_ns()
    for _ in range(n_iters):
        _, d = fn(x, True)
        d *= upstream
    backward_ns = time.perf_counter_ns() - t0

    return {
        "activation": kind.value,
        "forward_ns": forward_ns,
        "backward_ns": backward_ns,
        "n_iters": n_iters,
        "batch_size": batch_size,
    }
