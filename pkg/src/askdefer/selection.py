"""Budgeted selection: per-instance scores, calibration-quantile threshold,
and oracle selectors used to validate the policy.

The policy asks (queries the enriched model) on instances whose score
strictly exceeds a threshold tau. Fitting tau on calibration scores with
budget beta picks the smallest tau >= 0 whose strict-exceedance fraction is
at most beta, so the calibration ask rate never exceeds the budget; ties at
tau do not ask, and scores at or below zero never trigger asking even with
a full budget. Under heavy score ties this is a conservative approximation
of the continuous-distribution quantile rule.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DataError
from .losses import softmax_batch

DELTA_MODES = ("loss_gap", "selector_logit")


@dataclass
class SelectionPolicy:
    tau: float
    beta: float


def plugin_risk(probs: np.ndarray) -> np.ndarray:
    """Model-probability estimate of the conditional risk, 1 - sum(p^2).

    This is the expected error of a predictor that samples from `probs`
    when the label itself follows `probs`; for the uniform vector it equals
    1 - 1/K, for a point mass it is 0.
    """
    p = np.asarray(probs, dtype=np.float64)
    return 1.0 - np.sum(p * p, axis=-1)


def delta_scores(bundle, X: np.ndarray, H, mode: str = "loss_gap") -> np.ndarray:
    """Per-instance ask scores for a batch.

    loss_gap: estimated risk of the standard model minus estimated risk of
    the enriched model, both from their own softmax outputs.
    selector_logit: the trained selector logit used directly as the score.
    """
    if mode not in DELTA_MODES:
        raise ConfigurationError(f"unknown delta mode {mode!r}")
    X = np.asarray(X, dtype=np.float64)
    if mode == "selector_logit":
        return bundle.s_logits(X)
    if H is None:
        raise DataError("loss_gap scoring needs materialized feedback")
    pf = softmax_batch(bundle.f_logits(X))
    pg = softmax_batch(bundle.g_logits(X, H))
    return plugin_risk(pf) - plugin_risk(pg)


def delta_score(bundle, sample, mode: str = "loss_gap") -> float:
    """Single-sample ask score; see `delta_scores`."""
    H = None if sample.h is None else sample.h[None, :]
    return float(delta_scores(bundle, sample.x[None, :], H, mode)[0])


def fit_threshold(scores, beta: float) -> SelectionPolicy:
    """Smallest tau >= 0 with at most a beta fraction of scores above it."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        raise ConfigurationError("cannot fit a threshold on empty scores")
    if not 0.0 <= beta <= 1.0:
        raise ConfigurationError("beta must be in [0, 1]")
    n = scores.size
    allowed = int(np.floor(beta * n + 1e-9))
    if allowed >= n:
        tau = 0.0
    else:
        # (allowed+1)-th largest score is the smallest cut meeting the budget
        tau = max(0.0, float(np.sort(scores)[::-1][allowed]))
    return SelectionPolicy(tau=tau, beta=float(beta))


def select(policy: SelectionPolicy, score: float) -> int:
    """1 iff the score strictly exceeds the threshold."""
    return int(score > policy.tau)


def oracle_select_ltd(f_pred: int, expert_pred: int, y: int) -> int:
    """Label-aware defer oracle: defer only when the expert is right and the
    machine is wrong (ties go to the machine)."""
    return int(expert_pred == y and f_pred != y)


def selector_oracle_accuracy(p_correct_a, p_correct_b, weights=None) -> float:
    """Expected accuracy of the best per-instance choice between two agents.

    Arguments are each agent's conditional probability of being correct per
    instance; the optimal label-independent selector picks the larger one
    pointwise, so the achievable accuracy is the (weighted) mean of the max.
    """
    a = np.asarray(p_correct_a, dtype=np.float64)
    b = np.asarray(p_correct_b, dtype=np.float64)
    return float(np.average(np.maximum(a, b), weights=weights))


def brute_force_budget_select(scores, losses_f, losses_g, beta: float):
    """Exhaustive 2^n oracle: the ask vector minimizing total risk subject
    to an ask fraction of at most beta. Validation only; n is capped at 20."""
    scores = np.asarray(scores, dtype=np.float64)
    lf = np.asarray(losses_f, dtype=np.float64)
    lg = np.asarray(losses_g, dtype=np.float64)
    n = lf.size
    if not (scores.size == n == lg.size):
        raise ConfigurationError("scores and losses must have equal length")
    if n > 20:
        raise ConfigurationError("brute force limited to n <= 20")
    allowed = int(np.floor(beta * n + 1e-9))
    masks = np.arange(1 << n, dtype=np.uint32)
    bits = ((masks[:, None] >> np.arange(n, dtype=np.uint32)) & 1).astype(np.uint8)
    feasible = bits.sum(axis=1) <= allowed
    risks = lf.sum() + bits @ (lg - lf)
    risks[~feasible] = np.inf
    best = bits[int(np.argmin(risks))]
    return [int(b) for b in best]


def policy_risk(policy: SelectionPolicy, scores, losses_f, losses_g) -> float:
    """Total empirical risk of applying the policy to the given instances."""
    ask = np.asarray(scores, dtype=np.float64) > policy.tau
    lf = np.asarray(losses_f, dtype=np.float64)
    lg = np.asarray(losses_g, dtype=np.float64)
    return float(np.where(ask, lg, lf).sum())
