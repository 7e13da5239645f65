"""Adagrad training loop with per-instance stochastic updates.

Each epoch regenerates negative samples (neg_ratio uniform draws from the
non-positive items per training positive), shuffles all instances, and
applies one Adagrad update per instance using the exact gradients from
the gradients module. Validation HR and NDCG are computed after every
epoch; training returns the parameters of the best validation-HR epoch.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .config import ModelConfig, ModelKind, TrainConfig
from .evaluation import MetricsRecord, evaluate_model
from .gradients import GradcheckReport, GradientSet, backward, gradcheck, instance_data_loss
from .params import ParameterSet, init_parameters
from .predictors import PredictionContext, forward_cache

__all__ = [
    "TrainingDivergedError",
    "TrainInstance",
    "OptimizerState",
    "log_loss",
    "adagrad_step",
    "sample_negatives",
    "epoch_instances",
    "history_for",
    "train",
    "pretrain_fism",
    "gradcheck",
    "GradcheckReport",
]


class TrainingDivergedError(RuntimeError):
    """A parameter became NaN or infinite during training."""


@dataclass(frozen=True)
class TrainInstance:
    """One supervised example: label 1 for an observed (user, item) pair."""

    user: int
    item: int
    label: float


@dataclass
class OptimizerState:
    """Adagrad squared-gradient accumulators, one per parameter array."""

    acc: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: ParameterSet) -> "OptimizerState":
        return cls(acc={name: np.zeros_like(arr) for name, arr in params.arrays()})


def log_loss(scores, labels, l2: float = 0.0, params: ParameterSet | None = None) -> float:
    """Mean binary cross entropy plus the full l2 penalty.

    An empty batch contributes a zero data term, so the loss reduces to
    the penalty alone.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if scores.shape != labels.shape:
        raise ValueError(f"scores shaped {scores.shape}, labels shaped {labels.shape}")
    data = 0.0
    if scores.size:
        data = sum(instance_data_loss(float(s), float(y)) for s, y in zip(scores, labels))
        data /= scores.size
    reg = l2 * params.sum_squares() if (l2 != 0.0 and params is not None) else 0.0
    return data + reg


def adagrad_step(
    params: ParameterSet,
    grads: GradientSet,
    state: OptimizerState,
    learning_rate: float,
    epsilon: float = 1e-8,
) -> None:
    """In-place update: acc += g^2; theta -= lr * g / (sqrt(acc) + eps)."""
    for name, grad in grads.dense.items():
        acc = state.acc[name]
        acc += grad * grad
        params.get(name)[...] -= learning_rate * grad / (np.sqrt(acc) + epsilon)
    for name, (idx, grad) in grads.rows.items():
        acc = state.acc[name]
        acc[idx] += grad * grad
        params.get(name)[idx] -= learning_rate * grad / (np.sqrt(acc[idx]) + epsilon)


def sample_negatives(
    user: int,
    positives: np.ndarray,
    neg_ratio: int,
    item_count: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """neg_ratio * len(positives) uniform draws from the non-positive items."""
    positives = np.asarray(positives)
    if positives.size >= item_count:
        raise ValueError(f"user {user} has no negative candidates")
    need = neg_ratio * positives.size
    out = np.empty(need, dtype=np.int64)
    filled = 0
    while filled < need:
        draws = rng.integers(0, item_count, size=(need - filled) * 2)
        good = draws[~np.isin(draws, positives)]
        take = min(good.size, need - filled)
        out[filled : filled + take] = good[:take]
        filled += take
    return out


def epoch_instances(
    pos_by_user: list[np.ndarray],
    neg_ratio: int,
    item_count: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """All positives plus freshly drawn negatives, as parallel arrays."""
    users, items, labels = [], [], []
    for u, pos in enumerate(pos_by_user):
        if pos.size == 0:
            continue
        negs = sample_negatives(u, pos, neg_ratio, item_count, rng)
        count = pos.size + negs.size
        users.append(np.full(count, u, dtype=np.int64))
        items.append(np.concatenate([pos, negs]))
        labels.append(np.concatenate([np.ones(pos.size), np.zeros(negs.size)]))
    if not users:
        raise ValueError("training split has no positives")
    return np.concatenate(users), np.concatenate(items), np.concatenate(labels)


def history_for(positives: np.ndarray, target: int, label: float) -> np.ndarray:
    """The user's training positives, minus the target when it is one."""
    if label == 1.0:
        pos = positives[positives != target]
        return pos
    return positives


def train(
    model_kind: ModelKind,
    split,
    model_config: ModelConfig,
    train_config: TrainConfig,
    pretrained: tuple[np.ndarray, np.ndarray] | None = None,
    log_fn: Callable[[MetricsRecord], None] | None = None,
) -> tuple[ParameterSet, list[MetricsRecord]]:
    """Train one model, returning best-validation parameters and the log.

    Determinism: a single generator seeded from train_config.seed drives
    initialization order, negative sampling and instance shuffling, so
    equal configs give bitwise-equal results.
    """
    kind = ModelKind(model_kind)
    n_items = split.train.item_count
    n_users = split.train.user_count
    params = init_parameters(model_config, n_items, n_users, train_config.seed, pretrained)
    state = OptimizerState.for_params(params)
    rng = np.random.default_rng(train_config.seed)
    pos_by_user = split.train.items_by_user

    records: list[MetricsRecord] = []
    best_params = params.copy()
    best_hr = -1.0
    best_epoch = 0

    for epoch in range(1, train_config.epochs + 1):
        users, items, labels = epoch_instances(
            pos_by_user, train_config.neg_ratio, n_items, rng
        )
        order = rng.permutation(users.size)
        loss_sum = 0.0
        for idx in order:
            u = int(users[idx])
            i = int(items[idx])
            y = float(labels[idx])
            ctx = PredictionContext(u, i, history_for(pos_by_user[u], i, y))
            cache = forward_cache(kind, ctx, params, model_config)
            loss_sum += instance_data_loss(cache.score, y)
            grads = backward(cache, y, params, model_config, train_config.l2)
            adagrad_step(
                params, grads, state, train_config.learning_rate, train_config.adagrad_epsilon
            )
        if not params.all_finite():
            raise TrainingDivergedError(f"non-finite parameter after epoch {epoch}")
        epoch_loss = loss_sum / users.size + train_config.l2 * params.sum_squares()
        val = evaluate_model(
            params,
            model_config,
            split,
            on="valid",
            n=train_config.eval_n,
            workers=train_config.eval_workers,
        )
        record = MetricsRecord(
            epoch=epoch,
            split="valid",
            loss=epoch_loss,
            hr=val.hr,
            ndcg=val.ndcg,
            n=train_config.eval_n,
        )
        records.append(record)
        if log_fn is not None:
            log_fn(record)
        if val.hr > best_hr:
            best_hr = val.hr
            best_epoch = epoch
            best_params = params.copy()
        elif epoch - best_epoch > train_config.early_stop_patience:
            break
    return best_params, records


def pretrain_fism(
    split,
    model_config: ModelConfig,
    train_config: TrainConfig,
) -> tuple[np.ndarray, np.ndarray]:
    """Train a FISM model of the same width and return its (P, Q)."""
    fism_config = ModelConfig(
        model_kind=ModelKind.FISM,
        d=model_config.d,
        alpha=model_config.alpha,
        beta=model_config.beta,
    )
    params, _ = train(ModelKind.FISM, split, fism_config, train_config)
    return params.P.copy(), params.Q.copy()
