"""Training objectives and their analytic gradients.

Output-level losses return ``(value, grad_h)`` (plus ``grad_r`` for the
classification head). ``chain_to_params`` pushes a gradient w.r.t. a module's
output back to its ``W`` and ``U`` one module deep.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import ConfigError, ContractError, ShapeError
from .module import SeparableModule, activation_grad, pre_activation


@dataclass
class LossValueGrad:
    value: float
    grad_w: np.ndarray
    grad_u: np.ndarray | None = None
    grad_r: np.ndarray | None = None


def gae_loss(h_batch: np.ndarray, adj_batch: np.ndarray, pos_weight: float = 1.0):
    """Weighted binary cross-entropy between ``sigmoid(H H^T)`` and ``adj_batch``.

    ``adj_batch`` is the 0/1 block ``A[B, B]`` with a unit diagonal; positive
    entries are weighted by ``pos_weight``. The value is the mean over all m^2
    entries.
    """
    m = h_batch.shape[0]
    if m < 2:
        raise ContractError("gae_loss needs a batch of at least 2 nodes")
    if adj_batch.shape != (m, m):
        raise ShapeError(f"adjacency block must be {(m, m)}, got {adj_batch.shape}")
    s = h_batch @ h_batch.T
    # softplus(s) = log(1 + e^s), softplus(-s) = softplus(s) - s
    sp_pos = np.logaddexp(0.0, s)
    sp_neg = sp_pos - s
    value = np.sum(pos_weight * adj_batch * sp_neg + (1.0 - adj_batch) * sp_pos) / (m * m)
    sig = expit(s)
    g = (pos_weight * adj_batch * (sig - 1.0) + (1.0 - adj_batch) * sig) / (m * m)
    grad_h = (g + g.T) @ h_batch
    return float(value), grad_h


def recon_loss(h: np.ndarray, p_dense: np.ndarray):
    """``||P - H H^T||_F`` with gradient ``2 (H H^T - P) H / ||.||``."""
    if p_dense.shape != (h.shape[0], h.shape[0]):
        raise ShapeError(f"P must be {(h.shape[0],) * 2}, got {p_dense.shape}")
    e = h @ h.T - p_dense
    value = float(np.sqrt(np.sum(e * e)))
    grad_h = 2.0 * (e @ h) / max(value, 1e-12)
    return value, grad_h


def softmax_ce_loss(h_batch: np.ndarray, r: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy of ``softmax(H R)`` against integer labels.

    Returns ``(value, grad_h, grad_r)``.
    """
    labels = np.asarray(labels, dtype=np.int64)
    m, c = h_batch.shape[0], r.shape[1]
    if h_batch.shape[1] != r.shape[0]:
        raise ShapeError(f"head R must have {h_batch.shape[1]} rows, got {r.shape}")
    if labels.shape != (m,):
        raise ShapeError("one label per row required")
    if m and (labels.min() < 0 or labels.max() >= c):
        raise ContractError(f"label outside [0, {c})")
    logits = h_batch @ r
    shift = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.sum(np.exp(shift), axis=1))
    log_p = shift - log_z[:, None]
    value = float(-np.mean(log_p[np.arange(m), labels]))
    d = np.exp(log_p)
    d[np.arange(m), labels] -= 1.0
    d /= m
    return value, d @ r.T, h_batch.T @ d


def bt_loss(h_t: np.ndarray, z_next: np.ndarray, names=("module t", "module t+1")):
    """Mean squared distance ``||H - Z||_F^2 / (rows * cols)``."""
    if h_t.shape != z_next.shape:
        raise ConfigError(
            f"backward-training shapes differ: {names[0]} outputs {h_t.shape[1]} columns "
            f"but {names[1]} expects {z_next.shape[1]}"
        )
    diff = h_t - z_next
    scale = 1.0 / diff.size
    return float(scale * np.sum(diff * diff)), 2.0 * scale * diff


def chain_to_params(grad_h: np.ndarray, module: SeparableModule, x_prop_rows: np.ndarray,
                    use_u: bool, value: float = 0.0, grad_r=None) -> LossValueGrad:
    """Gradients w.r.t. ``W`` (and ``U`` when ``use_u``) of ``H = act(X' U W)``."""
    pre = pre_activation(module, x_prop_rows, use_u)
    if grad_h.shape != pre.shape:
        raise ShapeError(f"grad_h shape {grad_h.shape} does not match output {pre.shape}")
    g = grad_h * activation_grad(module.activation, pre)
    if use_u:
        xu = x_prop_rows @ module.u
        return LossValueGrad(value, xu.T @ g, x_prop_rows.T @ (g @ module.w.T), grad_r)
    return LossValueGrad(value, x_prop_rows.T @ g, None, grad_r)
