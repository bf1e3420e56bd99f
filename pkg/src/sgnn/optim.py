"""Seeded mini-batch iteration and per-parameter SGD / Adam updates."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, NumericError, ShapeError


@dataclass
class OptimState:
    kind: str = "adam"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    name: str = "param"
    m: np.ndarray | None = None
    v: np.ndarray | None = None
    step_count: int = 0

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise ContractError(f"unknown optimizer {self.kind!r}")


def apply_update(state: OptimState, param: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """Return the updated parameter; ``param`` itself is not modified."""
    if param.shape != grad.shape:
        raise ShapeError(f"{state.name}: gradient shape {grad.shape} != parameter shape {param.shape}")
    if not np.all(np.isfinite(grad)):
        raise NumericError(f"non-finite gradient for {state.name}")
    if state.weight_decay:
        grad = grad + state.weight_decay * param
    state.step_count += 1
    if state.kind == "sgd":
        return param - state.lr * grad
    if state.m is None:
        state.m = np.zeros_like(param)
        state.v = np.zeros_like(param)
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = state.m / (1.0 - state.beta1 ** state.step_count)
    v_hat = state.v / (1.0 - state.beta2 ** state.step_count)
    return param - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


def batch_iterator(n: int, batch_size: int, seed, epoch: int = 0) -> list[np.ndarray]:
    """A seeded permutation of ``range(n)`` cut into ``ceil(n / batch_size)`` batches."""
    if batch_size < 1:
        raise ContractError("batch size must be >= 1")
    entropy = list(seed) if isinstance(seed, (tuple, list)) else [int(seed)]
    rng = np.random.default_rng(entropy + [int(epoch)])
    perm = rng.permutation(n)
    return [perm[i:i + batch_size] for i in range(0, n, batch_size)]


def num_batches(n: int, batch_size: int) -> int:
    return math.ceil(n / batch_size)
