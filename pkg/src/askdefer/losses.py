"""Losses for ask-vs-defer training, with values and logit gradients.

Conventions used throughout:

* `mae(logits, y)` is one minus the softmax probability of the true class.
* `sig(v) = (1 - tanh v) / 2`, so sig(+inf) = 0 and sig(-inf) = 1.
* The joint surrogate weights the standard branch by sig(s_logit) and the
  enriched branch by sig(-s_logit); a selector logit pushed to +inf therefore
  hands the instance to the enriched model, matching s(x) = 1{s_logit > 0}.
* Cross-entropy against a hard one-hot target that is wrong is clamped at
  -ln(CE_EPS) so deterministic wrong experts stay finite.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ConfigurationError
from .nn_core import softmax

CE_EPS = 1e-12
CE_CAP = -np.log(CE_EPS)


@dataclass
class DeferCostConfig:
    """Expert-branch cost: alpha scales the expert error, delta is additive."""

    alpha: float = 1.0
    delta: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigurationError("alpha must be in [0, 1]")
        if not 0.0 <= self.delta <= 1.0:
            raise ConfigurationError("delta must be in [0, 1]")


@dataclass
class LossValue:
    value: float
    grad_f: Optional[np.ndarray] = None
    grad_g: Optional[np.ndarray] = None
    grad_s: Optional[float] = None


def sigmoid(v):
    v = np.asarray(v, dtype=np.float64)
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out if out.ndim else float(out)


def cross_entropy(logits: np.ndarray, y: int) -> float:
    """-log softmax(logits)[y], computed via logsumexp."""
    z = np.asarray(logits, dtype=np.float64)
    m = np.max(z)
    return float(m + np.log(np.sum(np.exp(z - m))) - z[y])


def onehot_cross_entropy(target_onehot: np.ndarray, y: int) -> float:
    """CE of a hard target distribution; clamped at CE_CAP when wrong."""
    p = float(np.asarray(target_onehot)[y])
    return float(-np.log(max(p, CE_EPS)))


# ---------------------------------------------------------------------------
# 0-1 losses
# ---------------------------------------------------------------------------


def ltd_01(f_pred: int, s: int, expert_pred: int, y: int,
           cost: DeferCostConfig = DeferCostConfig()) -> float:
    """Defer-style 0-1 loss: machine error if kept, scaled expert error
    plus the query cost if deferred."""
    keep = float(f_pred != y) * (1 - s)
    defer = (cost.alpha * float(expert_pred != y) + cost.delta) * s
    return keep + defer


def lta_01(f_pred: int, g_pred: int, s: int, y: int) -> float:
    """Ask-style 0-1 loss: the selected model's error counts."""
    return float(f_pred != y) * (1 - s) + float(g_pred != y) * s


# ---------------------------------------------------------------------------
# Differentiable surrogates
# ---------------------------------------------------------------------------


def ltd_ce_surrogate(f_logits: np.ndarray, s: float, expert_onehot: np.ndarray,
                     y: int) -> LossValue:
    """Cross-entropy mixture: (1-s) * CE(f, y) + s * CE(expert, y).

    `s` is a given mixing weight in [0, 1]; `grad_s` is the derivative with
    respect to it.
    """
    p = softmax(f_logits)
    ce_f = cross_entropy(f_logits, y)
    ce_e = onehot_cross_entropy(expert_onehot, y)
    grad_f = (1.0 - s) * p
    grad_f[y] -= (1.0 - s)
    return LossValue(
        value=(1.0 - s) * ce_f + s * ce_e,
        grad_f=grad_f,
        grad_s=ce_e - ce_f,
    )


def lta_surrogate(f_logits: np.ndarray, g_logits: np.ndarray, s: int, y: int,
                  lf: Callable[[np.ndarray, int], LossValue],
                  lg: Callable[[np.ndarray, int], LossValue]) -> LossValue:
    """Hard-selector surrogate: lf on the kept branch, lg on the asked one."""
    vf = lf(f_logits, y)
    vg = lg(g_logits, y)
    grad_f = None if vf.grad_f is None else (1 - s) * vf.grad_f
    grad_g = None if vg.grad_f is None else s * vg.grad_f
    return LossValue(
        value=vf.value * (1 - s) + vg.value * s,
        grad_f=grad_f,
        grad_g=grad_g,
    )


def mae_loss(logits: np.ndarray, y: int) -> LossValue:
    """1 - softmax(logits)[y], gradient taken w.r.t. the logits."""
    p = softmax(logits)
    grad = p[y] * p
    grad[y] -= p[y]
    return LossValue(value=float(1.0 - p[y]), grad_f=grad)


def sig_loss(s_logit: float) -> LossValue:
    """(1 - tanh(s_logit)) / 2 with its derivative."""
    t = np.tanh(s_logit)
    return LossValue(value=float(0.5 * (1.0 - t)),
                     grad_s=float(-0.5 * (1.0 - t * t)))


def joint_surrogate(f_logits: np.ndarray, g_logits: np.ndarray, s_logit: float,
                    y: int, cost: DeferCostConfig = DeferCostConfig()) -> LossValue:
    """mae(f) * sig(s_logit) + (mae(g) + delta) * sig(-s_logit).

    Saturating the selector logit to -inf leaves only the standard branch,
    +inf only the enriched one; delta penalizes asking.
    """
    vf = mae_loss(f_logits, y)
    vg = mae_loss(g_logits, y)
    wf = sig_loss(s_logit)                    # weight on the standard branch
    wg_value = 1.0 - wf.value                 # sig(-s) = 1 - sig(s)
    sech2_half = -wf.grad_s                   # 0.5 * sech^2(s_logit)
    g_term = vg.value + cost.delta
    return LossValue(
        value=vf.value * wf.value + g_term * wg_value,
        grad_f=wf.value * vf.grad_f,
        grad_g=wg_value * vg.grad_f,
        grad_s=float(sech2_half * (g_term - vf.value)),
    )


def ltd_mixture_loss(f_logits: np.ndarray, s_logit: float,
                     expert_onehot: np.ndarray, y: int,
                     cost: DeferCostConfig = DeferCostConfig()) -> LossValue:
    """Trainable defer surrogate with a learned selector head.

    The mixing weight is sigmoid(s_logit); the defer branch pays
    alpha * CE(expert, y) + delta.
    """
    sp = sigmoid(s_logit)
    p = softmax(f_logits)
    ce_f = cross_entropy(f_logits, y)
    defer_cost = cost.alpha * onehot_cross_entropy(expert_onehot, y) + cost.delta
    grad_f = (1.0 - sp) * p
    grad_f[y] -= (1.0 - sp)
    return LossValue(
        value=(1.0 - sp) * ce_f + sp * defer_cost,
        grad_f=grad_f,
        grad_s=float(sp * (1.0 - sp) * (defer_cost - ce_f)),
    )


# ---------------------------------------------------------------------------
# Vectorized variants used by the training loops. Gradients are per-sample
# (no batch averaging); callers divide by the batch size.
# ---------------------------------------------------------------------------


def softmax_batch(logits: np.ndarray) -> np.ndarray:
    z = logits - np.max(logits, axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def ce_batch(logits: np.ndarray, y: np.ndarray):
    """Per-sample cross-entropy values and logit gradients."""
    n = logits.shape[0]
    z = logits - np.max(logits, axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    vals = lse - z[np.arange(n), y]
    grads = softmax_batch(logits)
    grads[np.arange(n), y] -= 1.0
    return vals, grads


def mae_batch(logits: np.ndarray, y: np.ndarray):
    n = logits.shape[0]
    p = softmax_batch(logits)
    py = p[np.arange(n), y]
    grads = (py[:, None]) * p
    grads[np.arange(n), y] -= py
    return 1.0 - py, grads


def joint_batch(f_logits: np.ndarray, g_logits: np.ndarray, s_logits: np.ndarray,
                y: np.ndarray, cost: DeferCostConfig):
    """Batched joint surrogate; returns (values, d_f, d_g, d_s)."""
    vf, df = mae_batch(f_logits, y)
    vg, dg = mae_batch(g_logits, y)
    t = np.tanh(s_logits)
    wf = 0.5 * (1.0 - t)
    wg = 1.0 - wf
    sech2_half = 0.5 * (1.0 - t * t)
    g_term = vg + cost.delta
    vals = vf * wf + g_term * wg
    ds = sech2_half * (g_term - vf)
    return vals, wf[:, None] * df, wg[:, None] * dg, ds


def ltd_mixture_batch(f_logits: np.ndarray, s_logits: np.ndarray,
                      expert_onehot: np.ndarray, y: np.ndarray,
                      cost: DeferCostConfig):
    """Batched defer surrogate; returns (values, d_f, d_s)."""
    n = f_logits.shape[0]
    sp = sigmoid(s_logits)
    ce_f, df = ce_batch(f_logits, y)
    p_true = expert_onehot[np.arange(n), y]
    defer_cost = cost.alpha * (-np.log(np.maximum(p_true, CE_EPS))) + cost.delta
    vals = (1.0 - sp) * ce_f + sp * defer_cost
    ds = sp * (1.0 - sp) * (defer_cost - ce_f)
    return vals, (1.0 - sp)[:, None] * df, ds
