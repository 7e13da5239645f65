"""Forward passes for every model kind.

All five models score a (user, target item) pair against the user's
training history. The forward pass is written once, in forward_cache,
which retains every intermediate the exact backward pass needs; the
predict_* functions are thin wrappers that return only the score.

Empty histories fall back to a constant: 0 for FISM, NAIS and FLA_NAIS,
and the user-plus-item bias for the DeepICF family.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .attention import (
    AttentionOutput,
    SmoothedSoftmax,
    _col_smoothed_parts,
    _row_softmax,
    _smoothed_parts,
    hidden_concat,
    hidden_prod,
)
from .config import AttentionMode, Design, DEEP_KINDS, FLA_KINDS, ModelConfig, ModelKind
from .params import ParameterSet


@dataclass
class PredictionContext:
    """One scoring instance: user index, target item, history item indices.

    The history is the user's training positives with the target removed;
    a target appearing in its own history is a construction bug.
    """

    user: int
    target: int
    history: np.ndarray

    def __post_init__(self) -> None:
        self.history = np.asarray(self.history, dtype=np.int64)
        if self.history.ndim != 1:
            raise ValueError("history must be a 1-d index array")
        if np.any(self.history == self.target):
            raise ValueError(f"target item {self.target} appears in its own history")


@dataclass
class ForwardCache:
    """Every intermediate of one forward pass, keyed by the model kind."""

    config: ModelConfig
    ctx: PredictionContext
    score: float = 0.0
    empty: bool = False
    X: np.ndarray | None = None
    Z: np.ndarray | None = None
    R: np.ndarray | None = None
    M: np.ndarray | None = None
    inner: np.ndarray | None = None
    item_logits: np.ndarray | None = None
    item: SmoothedSoftmax | None = None
    a_hat: np.ndarray | None = None
    row_s: np.ndarray | None = None
    cols: SmoothedSoftmax | None = None
    A: np.ndarray | None = None
    e: np.ndarray | None = None
    deep_z: list[np.ndarray] = field(default_factory=list)
    deep_u: list[np.ndarray] = field(default_factory=list)
    deep_m: list[np.ndarray] = field(default_factory=list)


def fla_score(p: np.ndarray, Q_hist: np.ndarray, feature_weights: np.ndarray) -> float:
    """sum_j p . (a_j * q_j), the feature-attentive inner-product score."""
    return float(np.sum(feature_weights * (p[None, :] * Q_hist)))


def deepicf_pool(p: np.ndarray, Q_hist: np.ndarray, item_weights: np.ndarray) -> np.ndarray:
    """e = sum_j w_j (p * q_j), the scalar-attention pooled interaction."""
    return (item_weights[:, None] * (p[None, :] * Q_hist)).sum(axis=0)


def fla_pool(p: np.ndarray, Q_hist: np.ndarray, feature_weights: np.ndarray) -> np.ndarray:
    """e = sum_j p * (a_j * q_j), the feature-attention pooled interaction."""
    return (feature_weights * (p[None, :] * Q_hist)).sum(axis=0)


def deep_tower(cache: ForwardCache, e: np.ndarray, params: ParameterSet) -> float:
    """ReLU tower over the pooled interaction, then the final regression."""
    u = e
    cache.deep_u = [e]
    for Wl, bl in zip(params.deep_W, params.deep_b):
        z = Wl @ u + bl
        m = z > 0.0
        u = np.where(m, z, 0.0)
        cache.deep_z.append(z)
        cache.deep_m.append(m)
        cache.deep_u.append(u)
    return float(params.V @ u)


def forward_cache(
    model_kind: ModelKind,
    ctx: PredictionContext,
    params: ParameterSet,
    config: ModelConfig,
) -> ForwardCache:
    """Run one forward pass, retaining intermediates for backward."""
    cache = ForwardCache(config=config, ctx=ctx)
    hist = ctx.history
    if hist.size == 0:
        cache.empty = True
        if model_kind in DEEP_KINDS:
            cache.score = float(params.b_user[ctx.user] + params.b_item[ctx.target])
        return cache

    p = params.P[ctx.target]
    Qh = params.Q[hist]

    if model_kind is ModelKind.FISM:
        cache.inner = Qh @ p
        cache.score = float(hist.size ** (-config.alpha) * cache.inner.sum())
        return cache

    if model_kind is ModelKind.NAIS and config.attention_mode is AttentionMode.CONCAT:
        cache.Z, cache.R, cache.M = hidden_concat(p, Qh, params.W, params.b)
    else:
        cache.X, cache.Z, cache.R, cache.M = hidden_prod(p, Qh, params.W, params.b)

    needs_item = model_kind in (ModelKind.NAIS, ModelKind.DEEPICF) or (
        model_kind in FLA_KINDS and config.design is Design.DESIGN1
    )
    if needs_item:
        cache.item_logits = cache.R @ params.h
        cache.item = _smoothed_parts(cache.item_logits, config.beta)

    if model_kind in FLA_KINDS:
        cache.a_hat = cache.R @ params.H
        if config.design is Design.DESIGN1:
            cache.row_s = _row_softmax(cache.a_hat)
            cache.A = cache.item.weights[:, None] * cache.row_s
        else:
            cache.cols = _col_smoothed_parts(cache.a_hat, config.beta)
            cache.A = cache.cols.weights

    if model_kind is ModelKind.NAIS:
        cache.inner = Qh @ p
        cache.score = float(cache.item.weights @ cache.inner)
    elif model_kind is ModelKind.FLA_NAIS:
        cache.score = float(np.sum(cache.A * cache.X))
    elif model_kind is ModelKind.DEEPICF:
        cache.e = (cache.item.weights[:, None] * cache.X).sum(axis=0)
        cache.score = deep_tower(cache, cache.e, params) + float(
            params.b_user[ctx.user] + params.b_item[ctx.target]
        )
    elif model_kind is ModelKind.FLA_DICF:
        cache.e = (cache.A * cache.X).sum(axis=0)
        cache.score = deep_tower(cache, cache.e, params) + float(
            params.b_user[ctx.user] + params.b_item[ctx.target]
        )
    else:
        raise ValueError(f"unknown model kind {model_kind!r}")
    return cache


def predict_fism(ctx: PredictionContext, params: ParameterSet, alpha: float) -> float:
    """History-length-normalized sum of target-history inner products."""
    if ctx.history.size == 0:
        return 0.0
    inner = params.Q[ctx.history] @ params.P[ctx.target]
    return float(ctx.history.size ** (-alpha) * inner.sum())


def predict_nais(ctx: PredictionContext, params: ParameterSet, config: ModelConfig) -> float:
    return forward_cache(ModelKind.NAIS, ctx, params, config).score


def predict_fla(ctx: PredictionContext, params: ParameterSet, config: ModelConfig) -> float:
    return forward_cache(ModelKind.FLA_NAIS, ctx, params, config).score


def deepicf_forward(ctx: PredictionContext, params: ParameterSet, config: ModelConfig) -> float:
    return forward_cache(ModelKind.DEEPICF, ctx, params, config).score


def fla_dicf_forward(ctx: PredictionContext, params: ParameterSet, config: ModelConfig) -> float:
    return forward_cache(ModelKind.FLA_DICF, ctx, params, config).score


def predict(
    model_kind: ModelKind,
    ctx: PredictionContext,
    params: ParameterSet,
    config: ModelConfig,
) -> float:
    """Dispatch to the model kind's forward pass."""
    kind = ModelKind(model_kind)
    if kind is ModelKind.FISM:
        return predict_fism(ctx, params, config.alpha)
    return forward_cache(kind, ctx, params, config).score


def attention_for(
    ctx: PredictionContext,
    params: ParameterSet,
    config: ModelConfig,
) -> AttentionOutput:
    """Attention weights a trained model assigns to one context's history."""
    kind = config.model_kind
    if kind is ModelKind.FISM:
        raise ValueError("FISM assigns no attention weights")
    cache = forward_cache(kind, ctx, params, config)
    if cache.empty:
        raise ValueError("attention is undefined for an empty history")
    return AttentionOutput(
        item_weights=None if cache.item is None else cache.item.weights,
        feature_weights=cache.A,
        item_logits=cache.item_logits,
        feature_logits=cache.a_hat,
    )
