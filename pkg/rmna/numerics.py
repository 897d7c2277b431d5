"""
Dense array helpers shared by the learned stages.

Everything here is a pure function of its inputs (randomness comes from an
explicit seed or ``np.random.Generator``). Ops preserve the dtype they are
given: models run in float32, gradient checks feed float64.
"""

import math
from typing import Callable, Dict, Iterable, Mapping, Optional, Sequence, Tuple

import numpy as np

from rmna.domain.errors import NumericError, ShapeError

DTYPE = np.float32
LEAKY_RELU_SLOPE = 0.2

Params = Dict[str, np.ndarray]


def check_finite(x: np.ndarray, op: str) -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise NumericError(f"non-finite value produced by {op}")
    return x


def as_rng(seed: int | Sequence[int] | np.random.Generator | None) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


# linear algebra


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a, b = np.asarray(a), np.asarray(b)
    inner_b = b.shape[0] if b.ndim == 1 else b.shape[-2]
    if a.ndim == 0 or b.ndim == 0 or a.shape[-1] != inner_b:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    return check_finite(a @ b, "matmul")


def concat(arrays: Sequence[np.ndarray], axis: int = -1) -> np.ndarray:
    arrays = [np.asarray(a) for a in arrays]
    if not arrays:
        raise ShapeError("concat: nothing to concatenate")
    ref = list(arrays[0].shape)
    ax = axis % len(ref)
    for a in arrays[1:]:
        shape = list(a.shape)
        if len(shape) != len(ref) or shape[:ax] + shape[ax + 1 :] != ref[:ax] + ref[ax + 1 :]:
            raise ShapeError(f"concat: incompatible shapes {arrays[0].shape} and {a.shape}")
    return np.concatenate(arrays, axis=axis)


def add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise ShapeError(f"add: shapes differ {a.shape} vs {b.shape}")
    return check_finite(a + b, "add")


def l1_norm(x: np.ndarray, axis: int = -1) -> np.ndarray:
    return check_finite(np.sum(np.abs(x), axis=axis), "l1_norm")


def l2_norm(x: np.ndarray, axis: int = -1) -> np.ndarray:
    return check_finite(np.sqrt(np.sum(np.square(x), axis=axis)), "l2_norm")


def norm(x: np.ndarray, kind: str, axis: int = -1) -> np.ndarray:
    if kind == "L1":
        return l1_norm(x, axis=axis)
    if kind == "L2":
        return l2_norm(x, axis=axis)
    raise ValueError(f"unknown norm {kind!r}")


def norm_grad(diff: np.ndarray, kind: str) -> np.ndarray:
    """d||diff|| / d diff, row-wise; the L2 gradient at the origin is taken as 0."""
    if kind == "L1":
        return np.sign(diff)
    if kind == "L2":
        n = np.sqrt(np.sum(np.square(diff), axis=-1, keepdims=True))
        return np.divide(diff, n, out=np.zeros_like(diff), where=n > 0)
    raise ValueError(f"unknown norm {kind!r}")


# nonlinearities


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    x = np.asarray(x)
    shifted = x - np.max(x, axis=axis, keepdims=True)
    ex = np.exp(shifted)
    return check_finite(ex / np.sum(ex, axis=axis, keepdims=True), "softmax")


def softmax_backward(probs: np.ndarray, dprobs: np.ndarray, axis: int = -1) -> np.ndarray:
    return probs * (dprobs - np.sum(dprobs * probs, axis=axis, keepdims=True))


def leaky_relu(x: np.ndarray, slope: float = LEAKY_RELU_SLOPE) -> np.ndarray:
    x = np.asarray(x)
    return np.where(x > 0, x, slope * x)


def leaky_relu_grad(x: np.ndarray, slope: float = LEAKY_RELU_SLOPE) -> np.ndarray:
    return np.where(x > 0, 1.0, slope).astype(x.dtype, copy=False)


def elu(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    return np.where(x > 0, x, np.expm1(np.minimum(x, 0)))


def elu_grad(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, 1.0, np.exp(np.minimum(x, 0))).astype(x.dtype, copy=False)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_grad(x: np.ndarray) -> np.ndarray:
    return (x > 0).astype(x.dtype, copy=False)


def softplus(x: np.ndarray) -> np.ndarray:
    """log(1 + exp(x)) without overflow."""
    return np.logaddexp(0, x)


def sigmoid(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def dropout_mask(
    shape: Tuple[int, ...],
    p: float,
    rng: np.random.Generator,
    dtype=DTYPE,
) -> np.ndarray:
    """Inverted-dropout mask: survivors carry 1 / (1 - p), dropped units 0."""
    if not 0.0 <= p < 1.0:
        raise ValueError("dropout probability must be in [0, 1)")
    if p == 0.0:
        return np.ones(shape, dtype=dtype)
    keep = rng.random(shape) >= p
    return (keep / (1.0 - p)).astype(dtype)


def dropout(
    x: np.ndarray,
    p: float,
    *,
    seed: int | np.random.Generator | None = None,
    train: bool = True,
) -> np.ndarray:
    if not 0.0 <= p < 1.0:
        raise ValueError("dropout probability must be in [0, 1)")
    x = np.asarray(x)
    if not train or p == 0.0:
        return x
    return x * dropout_mask(x.shape, p, as_rng(seed), dtype=x.dtype)


# initialization


def glorot_init(
    shape: Tuple[int, ...],
    seed: int | Sequence[int] | np.random.Generator | None,
    dtype=DTYPE,
) -> np.ndarray:
    """Uniform on +-sqrt(6 / (fan_in + fan_out)); the last two axes give (fan_out, fan_in)."""
    if not shape or any(s <= 0 for s in shape):
        raise ShapeError(f"glorot_init: shape must be positive, got {shape}")
    if len(shape) == 1:
        fan_in, fan_out = shape[0], 1
    else:
        fan_out, fan_in = shape[-2], shape[-1]
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return as_rng(seed).uniform(-limit, limit, size=shape).astype(dtype)


def uniform_init(
    shape: Tuple[int, ...],
    bound: float,
    seed: int | Sequence[int] | np.random.Generator | None,
    dtype=DTYPE,
) -> np.ndarray:
    return as_rng(seed).uniform(-bound, bound, size=shape).astype(dtype)


def normalize_rows(x: np.ndarray) -> np.ndarray:
    n = np.sqrt(np.sum(np.square(x), axis=-1, keepdims=True))
    return np.divide(x, n, out=np.zeros_like(x), where=n > 0)


# optimization


class AdamState:
    """Per-parameter first/second moments plus the step counter."""

    def __init__(
        self,
        m: Params,
        v: Params,
        *,
        learning_rate: float = 0.001,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        step: int = 0,
    ):
        self.m = m
        self.v = v
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step = step

    @classmethod
    def zeros(cls, params: Mapping[str, np.ndarray], **kwargs) -> "AdamState":
        return cls(
            {k: np.zeros_like(p) for k, p in params.items()},
            {k: np.zeros_like(p) for k, p in params.items()},
            **kwargs,
        )

    def copy(self) -> "AdamState":
        return AdamState(
            {k: a.copy() for k, a in self.m.items()},
            {k: a.copy() for k, a in self.v.items()},
            learning_rate=self.learning_rate,
            beta1=self.beta1,
            beta2=self.beta2,
            eps=self.eps,
            step=self.step,
        )


def adam_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
) -> Tuple[Params, AdamState]:
    """
    One bias-corrected Adam update; returns new params and state, inputs are untouched.

    Parameters without an entry in ``grads`` are carried over unchanged (frozen).
    """
    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    new_params: Params = {}
    new_m: Params = {}
    new_v: Params = {}
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            new_params[name] = p
            new_m[name] = state.m[name]
            new_v[name] = state.v[name]
            continue
        if g.shape != p.shape or state.m[name].shape != p.shape:
            raise ShapeError(f"adam_step: {name} grad {g.shape} vs param {p.shape}")
        m = b1 * state.m[name] + (1.0 - b1) * g
        v = b2 * state.v[name] + (1.0 - b2) * np.square(g)
        update = state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.eps)
        new_params[name] = check_finite((p - update).astype(p.dtype, copy=False), "adam_step")
        new_m[name] = m.astype(p.dtype, copy=False)
        new_v[name] = v.astype(p.dtype, copy=False)
    new_state = AdamState(
        new_m,
        new_v,
        learning_rate=state.learning_rate,
        beta1=b1,
        beta2=b2,
        eps=state.eps,
        step=t,
    )
    return new_params, new_state


# verification


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(1e-8, abs(analytic) + abs(numeric))


def grad_check(
    loss_fn: Callable[[Params], float],
    params: Mapping[str, np.ndarray],
    analytic_grads: Mapping[str, np.ndarray],
    step: float = 1e-4,
    *,
    coords_per_tensor: Optional[int] = None,
    names: Optional[Iterable[str]] = None,
    seed: int = 0,
) -> float:
    """
    Max relative error between analytic gradients and central differences.

    ``coords_per_tensor`` samples that many coordinates from each tensor
    (all of them when None or when the tensor is smaller).
    """
    rng = np.random.default_rng(seed)
    work = {k: np.array(v, copy=True) for k, v in params.items()}
    worst = 0.0
    for name in names if names is not None else sorted(analytic_grads):
        grad = analytic_grads[name]
        p = work[name]
        flat_size = p.size
        if coords_per_tensor is None or coords_per_tensor >= flat_size:
            coords = np.arange(flat_size)
        else:
            coords = rng.choice(flat_size, size=coords_per_tensor, replace=False)
        for c in coords:
            idx = np.unravel_index(int(c), p.shape)
            orig = p[idx]
            p[idx] = orig + step
            up = float(loss_fn(work))
            p[idx] = orig - step
            down = float(loss_fn(work))
            p[idx] = orig
            numeric = (up - down) / (2.0 * step)
            worst = max(worst, relative_error(float(grad[idx]), numeric))
    return worst
