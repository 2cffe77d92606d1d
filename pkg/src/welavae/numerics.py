"""Dense layers, hand-wired gradients and the Adam optimizer.

Arrays are plain ``numpy.ndarray``. Training runs in float32; every function
here is dtype-preserving so the finite-difference checks can rerun the same
code in float64.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np


class DimensionError(ValueError):
    """Raised when array shapes are incompatible."""


def affine_forward(x: np.ndarray, W: np.ndarray, b: np.ndarray) -> np.ndarray:
    if x.ndim != 2 or W.ndim != 2 or b.ndim != 1 or x.shape[1] != W.shape[0] or W.shape[1] != b.shape[0]:
        raise DimensionError(
            f"affine: x{tuple(x.shape)} @ W{tuple(W.shape)} + b{tuple(b.shape)} is not defined"
        )
    return x @ W + b


def affine_backward(grad_out: np.ndarray, x: np.ndarray, W: np.ndarray):
    """Return ``(grad_x, grad_W, grad_b)`` for ``out = x @ W + b``."""
    if grad_out.ndim != 2 or grad_out.shape != (x.shape[0], W.shape[1]) or x.shape[1] != W.shape[0]:
        raise DimensionError(
            f"affine backward: grad{tuple(grad_out.shape)} inconsistent with "
            f"x{tuple(x.shape)}, W{tuple(W.shape)}"
        )
    return grad_out @ W.T, x.T @ grad_out, grad_out.sum(axis=0)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(grad_out: np.ndarray, x: np.ndarray) -> np.ndarray:
    # subgradient at exactly zero is 0
    return np.where(x > 0, grad_out, 0).astype(grad_out.dtype, copy=False)


class ParamStore:
    """Named parameters with gradient buffers of the same shape.

    Iteration is always in sorted-name order so serialization and optimizer
    updates are deterministic.
    """

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def add(self, name: str, value: np.ndarray) -> None:
        if name in self.params:
            raise KeyError(f"parameter {name!r} already registered")
        self.params[name] = value
        self.grads[name] = np.zeros_like(value)

    def names(self) -> list[str]:
        return sorted(self.params)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def __iter__(self) -> Iterator[str]:
        return iter(self.names())

    def __len__(self) -> int:
        return len(self.params)

    def zero_grad(self) -> None:
        for g in self.grads.values():
            g[...] = 0

    def set_grads(self, grads: dict[str, np.ndarray]) -> None:
        for name, g in grads.items():
            if g.shape != self.params[name].shape:
                raise DimensionError(
                    f"gradient for {name!r} has shape {g.shape}, parameter has {self.params[name].shape}"
                )
            self.grads[name][...] = g

    def astype(self, dtype) -> "ParamStore":
        out = ParamStore()
        for name in self.names():
            out.add(name, self.params[name].astype(dtype, copy=True))
        return out

    def copy(self) -> "ParamStore":
        out = ParamStore()
        for name in self.names():
            out.add(name, self.params[name].copy())
        return out

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.params.values()))


@dataclass
class AdamState:
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: ParamStore, learning_rate: float = 1e-4, **kw) -> "AdamState":
        state = cls(learning_rate=learning_rate, **kw)
        for name in params.names():
            state.m[name] = np.zeros_like(params[name])
            state.v[name] = np.zeros_like(params[name])
        return state


def adam_step(params: ParamStore, state: AdamState) -> None:
    """One bias-corrected Adam update, in place. Gradients are left as they are."""
    if set(state.m) != set(params.params):
        raise RuntimeError("AdamState was not initialised for this ParamStore")
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for name in params.names():
        g = params.grads[name]
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        params.params[name] -= (state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)).astype(
            params.params[name].dtype, copy=False
        )


def grad_check(
    loss_fn: Callable[[ParamStore], tuple[float, dict[str, np.ndarray]]],
    params: ParamStore,
    h: float = 1e-3,
    max_coords: int | None = None,
    seed: int = 0,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``loss_fn(params)`` must return ``(loss, grads)``. The check runs on a
    float64 copy of ``params``; ``max_coords`` limits how many coordinates per
    parameter are probed (all of them by default).
    """
    p64 = params.astype(np.float64)
    _, analytic = loss_fn(p64)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for name in p64.names():
        theta = p64.params[name]
        flat = theta.reshape(-1)
        idx = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            idx = rng.choice(flat.size, size=max_coords, replace=False)
        grad = np.asarray(analytic[name], dtype=np.float64).reshape(-1)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + h
            f_plus = float(loss_fn(p64)[0])
            flat[i] = orig - h
            f_minus = float(loss_fn(p64)[0])
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2 * h)
            err = abs(grad[i] - numeric) / max(1e-8, abs(grad[i]) + abs(numeric))
            worst = max(worst, err)
    return worst
