"""Exact gradients of the per-instance objective, plus their numeric oracle.

The objective for one training instance is

    l(theta) = BCE(sigmoid(score), label) + l2 * sum(theta_a ** 2)

where the sum runs over exactly the parameters the instance touches: the
target row of P, the history rows of Q, the model's shared weight arrays,
and for the deep family the instance's two bias entries. Parameters the
instance does not touch have zero gradient and are omitted.

The smoothed softmax w_j = E_j / S**beta with E = exp(v), S = sum(E) has
Jacobian dw_j/dv_l = w_j * (delta_jl - beta * E_l / S), so its
vector-Jacobian product is

    dv = w * dw - beta * (E / S) * sum(w * dw)

masked to zero where the logit clamp is active. The finite difference
functions below differentiate the same objective numerically through the
forward pass only; they are the correctness oracle for backward.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .attention import LOGIT_CLAMP, SmoothedSoftmax
from .config import (
    AttentionMode,
    Design,
    DEEP_KINDS,
    FLA_KINDS,
    ModelConfig,
    ModelKind,
)
from .params import ParameterSet, array_shapes
from .predictors import ForwardCache, PredictionContext, forward_cache, predict

SIGMOID_CLAMP = 1e-12


def sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


def instance_data_loss(score: float, label: float) -> float:
    """Binary cross entropy of one instance, with the sigmoid clamped."""
    s = min(max(sigmoid(score), SIGMOID_CLAMP), 1.0 - SIGMOID_CLAMP)
    return -(label * math.log(s) + (1.0 - label) * math.log(1.0 - s))


def score_grad(score: float, label: float) -> float:
    """d BCE / d score = sigmoid(score) - label."""
    return sigmoid(score) - label


@dataclass
class GradientSet:
    """Gradients keyed by array name.

    dense holds full-shape gradients for shared arrays; rows holds
    (indices, row gradients) pairs for embedding tables and bias vectors
    where only a few rows are touched.
    """

    dense: dict[str, np.ndarray]
    rows: dict[str, tuple[np.ndarray, np.ndarray]]

    def items(self):
        yield from self.dense.items()
        yield from self.rows.items()


def _smoothed_vjp(parts: SmoothedSoftmax, dw: np.ndarray, beta: float) -> np.ndarray:
    w = parts.weights
    pull = beta * (parts.exp / parts.denom) * np.sum(w * dw)
    return (w * dw - pull) * parts.grad_mask


def _col_smoothed_vjp(parts: SmoothedSoftmax, dA: np.ndarray, beta: float) -> np.ndarray:
    w = parts.weights
    pull = beta * (parts.exp / parts.denom) * np.sum(w * dA, axis=0)
    return (w * dA - pull) * parts.grad_mask


def _row_softmax_vjp(s: np.ndarray, ds: np.ndarray) -> np.ndarray:
    return s * (ds - np.sum(s * ds, axis=1, keepdims=True))


def _deep_vjp(
    cache: ForwardCache,
    params: ParameterSet,
    g: float,
    dense: dict,
    rows: dict,
) -> np.ndarray:
    """Backward through the ReLU tower and final regression; returns de."""
    dense["V"] = g * cache.deep_u[-1]
    du = g * params.V
    for l in range(len(params.deep_W) - 1, -1, -1):
        dz = du * cache.deep_m[l]
        dense[f"deep_W.{l}"] = np.outer(dz, cache.deep_u[l])
        dense[f"deep_b.{l}"] = dz
        du = params.deep_W[l].T @ dz
    ctx = cache.ctx
    rows["b_user"] = (np.array([ctx.user]), np.array([g]))
    rows["b_item"] = (np.array([ctx.target]), np.array([g]))
    return du


def backward(
    cache: ForwardCache,
    label: float,
    params: ParameterSet,
    config: ModelConfig,
    l2: float = 0.0,
) -> GradientSet:
    """Exact gradient of the per-instance objective at the cached forward."""
    kind = config.model_kind
    ctx = cache.ctx
    g = score_grad(cache.score, label)
    dense: dict[str, np.ndarray] = {}
    rows: dict[str, tuple[np.ndarray, np.ndarray]] = {}

    if cache.empty:
        if kind in DEEP_KINDS:
            rows["b_user"] = (np.array([ctx.user]), np.array([g]))
            rows["b_item"] = (np.array([ctx.target]), np.array([g]))
        return _apply_l2(GradientSet(dense, rows), params, l2)

    hist = ctx.history
    p = params.P[ctx.target]
    Qh = params.Q[hist]

    if kind is ModelKind.FISM:
        c = hist.size ** (-config.alpha)
        dp = g * c * Qh.sum(axis=0)
        dQh = (g * c) * np.tile(p, (hist.size, 1))
        rows["P"] = (np.array([ctx.target]), dp[None, :])
        rows["Q"] = (hist, dQh)
        return _apply_l2(GradientSet(dense, rows), params, l2)

    concat = kind is ModelKind.NAIS and config.attention_mode is AttentionMode.CONCAT
    dR = np.zeros_like(cache.R)
    dX = None if concat else np.zeros_like(cache.X)
    dp = np.zeros_like(p)
    dQh = np.zeros_like(Qh)
    beta = config.beta

    # Head of the chain: push g down to the attention weights and the
    # direct (non-attention) use of the embeddings.
    if kind is ModelKind.NAIS:
        w = cache.item.weights
        dw = g * cache.inner
        dp += g * (w @ Qh)
        dQh += g * w[:, None] * p[None, :]
    elif kind is ModelKind.FLA_NAIS:
        dA = g * cache.X
        dX += g * cache.A
    elif kind is ModelKind.DEEPICF:
        de = _deep_vjp(cache, params, g, dense, rows)
        w = cache.item.weights
        dw = cache.X @ de
        dX += w[:, None] * de[None, :]
    elif kind is ModelKind.FLA_DICF:
        de = _deep_vjp(cache, params, g, dense, rows)
        dA = cache.X * de[None, :]
        dX += cache.A * de[None, :]
    else:
        raise ValueError(f"unknown model kind {kind!r}")

    # Attention-weight production backward.
    if kind in FLA_KINDS:
        if config.design is Design.DESIGN1:
            db_item = np.sum(cache.row_s * dA, axis=1)
            ds = cache.item.weights[:, None] * dA
            da_hat = _row_softmax_vjp(cache.row_s, ds)
            dv = _smoothed_vjp(cache.item, db_item, beta)
            dense["H"] = cache.R.T @ da_hat
            dense["h"] = cache.R.T @ dv
            dR += da_hat @ params.H.T + dv[:, None] * params.h[None, :]
        else:
            da_hat = _col_smoothed_vjp(cache.cols, dA, beta)
            dense["H"] = cache.R.T @ da_hat
            dR += da_hat @ params.H.T
    else:
        dv = _smoothed_vjp(cache.item, dw, beta)
        dense["h"] = cache.R.T @ dv
        dR += dv[:, None] * params.h[None, :]

    # Shared hidden layer backward.
    dZ = dR * cache.M
    dense["b"] = dZ.sum(axis=0)
    if concat:
        d = config.d
        dz_total = dZ.sum(axis=0)
        dense["W"] = np.concatenate([np.outer(dz_total, p), dZ.T @ Qh], axis=1)
        dp += dz_total @ params.W[:, :d]
        dQh += dZ @ params.W[:, d:]
    else:
        dense["W"] = dZ.T @ cache.X
        dX += dZ @ params.W
        dp += np.sum(dX * Qh, axis=0)
        dQh += dX * p[None, :]

    rows["P"] = (np.array([ctx.target]), dp[None, :])
    rows["Q"] = (hist, dQh)
    return _apply_l2(GradientSet(dense, rows), params, l2)


def _apply_l2(grads: GradientSet, params: ParameterSet, l2: float) -> GradientSet:
    if l2 == 0.0:
        return grads
    for name, arr in grads.dense.items():
        grads.dense[name] = arr + 2.0 * l2 * params.get(name)
    for name, (idx, rowg) in grads.rows.items():
        grads.rows[name] = (idx, rowg + 2.0 * l2 * params.get(name)[idx])
    return grads


def touched_parameters(ctx: PredictionContext, config: ModelConfig) -> list[tuple[str, np.ndarray | None]]:
    """Arrays (and rows) an instance's objective depends on, by contract."""
    kind = config.model_kind
    deep = kind in DEEP_KINDS
    if ctx.history.size == 0:
        if deep:
            return [
                ("b_user", np.array([ctx.user])),
                ("b_item", np.array([ctx.target])),
            ]
        return []
    touched: list[tuple[str, np.ndarray | None]] = [
        ("P", np.array([ctx.target])),
        ("Q", ctx.history),
    ]
    if kind is not ModelKind.FISM:
        touched.append(("W", None))
        touched.append(("b", None))
        if kind in FLA_KINDS:
            touched.append(("H", None))
            if config.design is Design.DESIGN1:
                touched.append(("h", None))
        else:
            touched.append(("h", None))
    if deep:
        for l in range(len(config.deep_layers)):
            touched.append((f"deep_W.{l}", None))
            touched.append((f"deep_b.{l}", None))
        touched.append(("V", None))
        touched.append(("b_user", np.array([ctx.user])))
        touched.append(("b_item", np.array([ctx.target])))
    return touched


def instance_objective(
    model_kind: ModelKind,
    ctx: PredictionContext,
    label: float,
    params: ParameterSet,
    config: ModelConfig,
    l2: float = 0.0,
) -> float:
    """Data loss plus l2 penalty over the touched parameters (forward only)."""
    loss = instance_data_loss(predict(model_kind, ctx, params, config), label)
    if l2 != 0.0:
        for name, idx in touched_parameters(ctx, config):
            arr = params.get(name)
            block = arr if idx is None else arr[idx]
            loss += l2 * float(np.sum(block * block))
    return loss


def finite_difference_grads(
    model_kind: ModelKind,
    ctx: PredictionContext,
    label: float,
    params: ParameterSet,
    config: ModelConfig,
    l2: float = 0.0,
    step: float = 1e-4,
) -> GradientSet:
    """Central finite differences of instance_objective, entry by entry."""
    work = params.copy()
    dense: dict[str, np.ndarray] = {}
    rows: dict[str, tuple[np.ndarray, np.ndarray]] = {}

    def diff_at(arr: np.ndarray, pos: tuple) -> float:
        orig = arr[pos]
        arr[pos] = orig + step
        hi = instance_objective(model_kind, ctx, label, work, config, l2)
        arr[pos] = orig - step
        lo = instance_objective(model_kind, ctx, label, work, config, l2)
        arr[pos] = orig
        return (hi - lo) / (2.0 * step)

    for name, idx in touched_parameters(ctx, config):
        arr = work.get(name)
        if idx is None:
            grad = np.zeros_like(arr)
            for pos in np.ndindex(arr.shape):
                grad[pos] = diff_at(arr, pos)
            dense[name] = grad
        else:
            if arr.ndim == 1:
                grad = np.array([diff_at(arr, (int(r),)) for r in idx])
            else:
                grad = np.zeros((len(idx), arr.shape[1]))
                for k, r in enumerate(idx):
                    for c in range(arr.shape[1]):
                        grad[k, c] = diff_at(arr, (int(r), c))
            rows[name] = (np.asarray(idx), grad)
    return GradientSet(dense, rows)


def relative_errors(
    analytic: GradientSet,
    numeric: GradientSet,
    floor: float = 1e-6,
) -> dict[str, float]:
    """Per-array max of |a - n| / max(|a|, |n|, floor)."""
    names = set(dict(analytic.items())) | set(dict(numeric.items()))
    out = {}
    for name in sorted(names):
        a = _flat(analytic, name)
        n = _flat(numeric, name)
        if a is None or n is None or a.shape != n.shape:
            out[name] = float("inf")
            continue
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        out[name] = float(np.max(np.abs(a - n) / denom)) if a.size else 0.0
    return out


def _flat(grads: GradientSet, name: str) -> np.ndarray | None:
    if name in grads.dense:
        return grads.dense[name]
    if name in grads.rows:
        return grads.rows[name][1]
    return None


@dataclass
class GradcheckReport:
    passed: bool
    tolerance: float
    max_error: float
    per_array: dict[str, float]
    instance_seed: int

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        worst = max(self.per_array, key=self.per_array.get) if self.per_array else "-"
        return (
            f"{status} max_rel_err={self.max_error:.3e} tolerance={self.tolerance:.1e} "
            f"worst_array={worst} seed={self.instance_seed}"
        )


def _random_check_params(config: ModelConfig, item_count: int, user_count: int, rng) -> ParameterSet:
    # O(1) parameter scale: at the production init scale (0.01) true
    # gradients sit near the finite difference noise floor and no correct
    # implementation could meet the tolerance.
    params = ParameterSet(n_users=user_count)
    from .params import _assign

    for name, shape in array_shapes(config, item_count, user_count).items():
        scale = 0.3 if name.startswith(("b", "deep_b")) else 0.5
        _assign(params, name, rng.normal(0.0, scale, size=shape))
    return params


def _margins_ok(cache: ForwardCache, step: float) -> bool:
    """Reject instances where finite differences would cross a kink or clamp."""
    kink = max(10.0 * step, 1e-3)
    if abs(cache.score) > 8.0:
        return False
    if cache.Z is not None and np.min(np.abs(cache.Z)) < kink:
        return False
    if cache.item_logits is not None and np.max(np.abs(cache.item_logits)) > LOGIT_CLAMP - 1.0:
        return False
    if cache.a_hat is not None and np.max(np.abs(cache.a_hat)) > LOGIT_CLAMP - 1.0:
        return False
    for z in cache.deep_z:
        if np.min(np.abs(z)) < kink:
            return False
    return True


def gradcheck(
    model_kind: ModelKind,
    model_config: ModelConfig,
    seed: int = 0,
    tolerance: float = 1e-4,
    history_size: int = 5,
    step: float = 1e-4,
    l2: float = 1e-3,
) -> GradcheckReport:
    """Compare backward with central finite differences on a random instance.

    Builds a small random instance (margin-checked so the objective is
    smooth within the difference step), runs backward for labels 1 and 0,
    and reports the per-array maximum relative error. A failed check is a
    report outcome, not an exception. The small l2 exercises the
    regularization path of the gradient.
    """
    kind = ModelKind(model_kind)
    for attempt in range(64):
        inst_seed = seed + 7919 * attempt
        rng = np.random.default_rng(inst_seed)
        item_count = history_size + 4
        user_count = 3
        params = _random_check_params(model_config, item_count, user_count, rng)
        target = int(rng.integers(item_count))
        rest = np.setdiff1d(np.arange(item_count), [target])
        hist = rng.choice(rest, size=history_size, replace=False)
        ctx = PredictionContext(user=1, target=target, history=np.sort(hist))
        cache = forward_cache(kind, ctx, params, model_config)
        if not _margins_ok(cache, step):
            continue
        per_array: dict[str, float] = {}
        for label in (1.0, 0.0):
            grads = backward(cache, label, params, model_config, l2)
            fd = finite_difference_grads(kind, ctx, label, params, model_config, l2, step)
            for name, err in relative_errors(grads, fd).items():
                per_array[name] = max(per_array.get(name, 0.0), err)
        max_error = max(per_array.values()) if per_array else 0.0
        return GradcheckReport(
            passed=max_error < tolerance,
            tolerance=tolerance,
            max_error=max_error,
            per_array=per_array,
            instance_seed=inst_seed,
        )
    raise RuntimeError("no margin-safe gradcheck instance found; widen the margins")
