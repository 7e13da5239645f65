"""Attention weights over history items and their embedding features.

Two weighting levels appear here. Item-level weights (NAIS, DeepICF and
Design 1) come from a smoothed softmax over per-item logits: weights are
exp(v_j) divided by the sum of exps raised to beta. Feature-level weights
assign each history item a full vector of per-feature weights; Design 1
scales a per-item feature softmax by the item-level weight, Design 2 runs
a smoothed softmax over the history axis independently for every feature.

The smoothed softmax is not shift invariant when beta != 1, so its logits
are clamped to [-30, 30] instead of max-subtracted; exp stays finite in
double precision over that range. The plain per-item feature softmax is
shift invariant and uses max subtraction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import AttentionMode
from .params import ParameterSet

LOGIT_CLAMP = 30.0


@dataclass
class AttentionOutput:
    """Normalized weights plus the retained pre-normalization logits."""

    item_weights: np.ndarray | None = None
    feature_weights: np.ndarray | None = None
    item_logits: np.ndarray | None = None
    feature_logits: np.ndarray | None = None


@dataclass
class SmoothedSoftmax:
    """Weights of a smoothed softmax with the pieces its gradient needs."""

    weights: np.ndarray
    exp: np.ndarray
    denom: float | np.ndarray
    grad_mask: np.ndarray


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def feature_logits(p: np.ndarray, q: np.ndarray, W: np.ndarray, b: np.ndarray, H: np.ndarray) -> np.ndarray:
    """Unnormalized per-feature attention logits for one (target, history) pair."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    hidden = relu(W @ (p * q) + b)
    return H.T @ hidden


def item_logit(p: np.ndarray, q: np.ndarray, W: np.ndarray, b: np.ndarray, h: np.ndarray) -> float:
    """Scalar attention logit for one (target, history) pair."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    return float(h @ relu(W @ (p * q) + b))


def normalize_features(logits: np.ndarray) -> np.ndarray:
    """Softmax over the feature axis of a single history item's logits."""
    logits = np.asarray(logits, dtype=float)
    if logits.size == 0:
        raise ValueError("cannot normalize an empty logit vector")
    if not np.all(np.isfinite(logits)):
        raise ValueError("feature logits must be finite")
    shifted = np.exp(logits - np.max(logits))
    return shifted / np.sum(shifted)


def smoothed_softmax(logits: np.ndarray, beta: float) -> np.ndarray:
    """exp(v_j) / (sum_j exp(v_j)) ** beta over a history of logits."""
    return _smoothed_parts(np.asarray(logits, dtype=float), beta).weights


def _smoothed_parts(logits: np.ndarray, beta: float) -> SmoothedSoftmax:
    if logits.size == 0:
        raise ValueError("smoothed softmax needs at least one logit")
    if not 0.0 < beta <= 1.0:
        raise ValueError(f"beta must lie in (0, 1], got {beta}")
    if not np.all(np.isfinite(logits)):
        raise ValueError("logits must be finite")
    mask = (logits > -LOGIT_CLAMP) & (logits < LOGIT_CLAMP)
    e = np.exp(np.clip(logits, -LOGIT_CLAMP, LOGIT_CLAMP))
    denom = float(np.sum(e))
    return SmoothedSoftmax(weights=e / denom**beta, exp=e, denom=denom, grad_mask=mask)


def _row_softmax(a_hat: np.ndarray) -> np.ndarray:
    """Row-wise shifted softmax over the feature axis of an m x d matrix."""
    shifted = np.exp(a_hat - a_hat.max(axis=1, keepdims=True))
    return shifted / shifted.sum(axis=1, keepdims=True)


def _col_smoothed_parts(a_hat: np.ndarray, beta: float) -> SmoothedSoftmax:
    """Smoothed softmax over the history axis, independently per feature."""
    if a_hat.shape[0] == 0:
        raise ValueError("smoothed softmax needs at least one history item")
    mask = (a_hat > -LOGIT_CLAMP) & (a_hat < LOGIT_CLAMP)
    e = np.exp(np.clip(a_hat, -LOGIT_CLAMP, LOGIT_CLAMP))
    denom = e.sum(axis=0)
    return SmoothedSoftmax(weights=e / denom**beta, exp=e, denom=denom, grad_mask=mask)


def hidden_prod(p: np.ndarray, Q_hist: np.ndarray, W: np.ndarray, b: np.ndarray):
    """Shared hidden layer over a whole history, elementwise-product encoding.

    Returns (X, Z, R, M): interaction vectors, pre-activations, ReLU
    outputs and the ReLU mask, each with one row per history item.
    """
    X = p[None, :] * Q_hist
    Z = X @ W.T + b
    M = Z > 0.0
    return X, Z, np.where(M, Z, 0.0), M


def hidden_concat(p: np.ndarray, Q_hist: np.ndarray, W: np.ndarray, b: np.ndarray):
    """Shared hidden layer, concatenation encoding (NAIS CONCAT mode)."""
    d = p.shape[0]
    Z = p @ W[:, :d].T + Q_hist @ W[:, d:].T + b
    M = Z > 0.0
    return Z, np.where(M, Z, 0.0), M


def nais_weights(
    p: np.ndarray,
    Q_hist: np.ndarray,
    params: ParameterSet,
    beta: float,
    mode: AttentionMode = AttentionMode.PROD,
) -> AttentionOutput:
    """Item-level smoothed-softmax weights for a NAIS-style model."""
    _require_history(Q_hist)
    if mode is AttentionMode.CONCAT:
        _, R, _ = hidden_concat(p, Q_hist, params.W, params.b)
    else:
        _, _, R, _ = hidden_prod(p, Q_hist, params.W, params.b)
    v = R @ params.h
    parts = _smoothed_parts(v, beta)
    return AttentionOutput(item_weights=parts.weights, item_logits=v)


def design1_weights(p: np.ndarray, Q_hist: np.ndarray, params: ParameterSet, beta: float) -> AttentionOutput:
    """Feature weights scaled per item by a smoothed item-level softmax.

    Row j of feature_weights is the softmax of that item's feature logits
    multiplied by the item weight b_j, so the row sums to b_j exactly.
    """
    _require_history(Q_hist)
    _, _, R, _ = hidden_prod(p, Q_hist, params.W, params.b)
    v = R @ params.h
    item = _smoothed_parts(v, beta)
    a_hat = R @ params.H
    s = _row_softmax(a_hat)
    return AttentionOutput(
        item_weights=item.weights,
        feature_weights=item.weights[:, None] * s,
        item_logits=v,
        feature_logits=a_hat,
    )


def design2_weights(p: np.ndarray, Q_hist: np.ndarray, params: ParameterSet, beta: float) -> AttentionOutput:
    """Feature weights from per-feature smoothed softmaxes over the history."""
    _require_history(Q_hist)
    _, _, R, _ = hidden_prod(p, Q_hist, params.W, params.b)
    a_hat = R @ params.H
    cols = _col_smoothed_parts(a_hat, beta)
    return AttentionOutput(feature_weights=cols.weights, feature_logits=a_hat)


def _require_history(Q_hist: np.ndarray) -> None:
    if Q_hist.ndim != 2 or Q_hist.shape[0] == 0:
        raise ValueError("attention weights need a nonempty history matrix")
