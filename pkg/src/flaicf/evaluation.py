"""Full-ranking evaluation: HR@n, NDCG@n, baselines, batched model scoring.

Every candidate item (all items minus the user's excluded positives) is
scored and ranked; ties break toward the smaller item index so rankings
are deterministic. HR@n is the per-user any-hit indicator averaged over
users; NDCG@n uses binary relevance with DCG = sum 1/log2(pos + 1) over
hit positions and IDCG the best arrangement of min(n, |test|) hits.
Users whose evaluated split is empty are skipped.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .attention import LOGIT_CLAMP
from .config import AttentionMode, Design, DEEP_KINDS, ModelConfig, ModelKind
from .data import SplitDataset
from .params import ParameterSet

BASELINES = ("RANDOM", "POP", "ITEMKNN")


@dataclass
class MetricsRecord:
    """Aggregated metrics for one split, optionally tagged with an epoch."""

    split: str
    hr: float
    ndcg: float
    n: int
    epoch: int | None = None
    loss: float | None = None
    users_evaluated: int = 0

    def to_line(self) -> str:
        parts = []
        if self.epoch is not None:
            parts.append(f"epoch={self.epoch}")
        if self.loss is not None:
            parts.append(f"loss={self.loss:.6f}")
        parts.append(f"split={self.split}")
        parts.append(f"hr@{self.n}={self.hr:.6f}")
        parts.append(f"ndcg@{self.n}={self.ndcg:.6f}")
        return " ".join(parts)

    def to_dict(self) -> dict:
        out = {
            "split": self.split,
            "n": self.n,
            "hr": self.hr,
            "ndcg": self.ndcg,
            "users_evaluated": self.users_evaluated,
        }
        if self.epoch is not None:
            out["epoch"] = self.epoch
        if self.loss is not None:
            out["loss"] = self.loss
        return out


@dataclass
class RankingResult:
    """One user's top-n ranking against their held-out items."""

    user: int
    ranked: np.ndarray
    hit: bool
    ndcg: float


def rank_items(scorer, user: int, excluded: np.ndarray, n: int) -> np.ndarray:
    """Top-n item indices by score, excluded items removed, ties by index."""
    scores = np.asarray(scorer(user), dtype=float)
    candidates = np.arange(scores.size, dtype=np.int64)
    if len(excluded):
        mask = np.ones(scores.size, dtype=bool)
        mask[np.asarray(excluded, dtype=np.int64)] = False
        candidates = candidates[mask]
    order = np.argsort(-scores[candidates], kind="stable")
    return candidates[order[:n]]


def hr_at_n(ranked: np.ndarray, test_items) -> float:
    """1.0 when any held-out item appears in the ranked list."""
    test = set(int(x) for x in np.asarray(test_items).ravel())
    return 1.0 if any(int(x) in test for x in ranked) else 0.0


def ndcg_at_n(ranked: np.ndarray, test_items, n: int | None = None) -> float:
    """Binary-relevance NDCG of a ranked list against the held-out items."""
    if n is None:
        n = len(ranked)
    test = set(int(x) for x in np.asarray(test_items).ravel())
    if not test:
        raise ValueError("NDCG needs at least one held-out item")
    dcg = sum(
        1.0 / math.log2(pos + 1.0)
        for pos, item in enumerate(ranked[:n], start=1)
        if int(item) in test
    )
    ideal = sum(1.0 / math.log2(pos + 1.0) for pos in range(1, min(n, len(test)) + 1))
    return dcg / ideal


def _eval_users(split: SplitDataset, on: str) -> np.ndarray:
    view = getattr(split, on)
    return np.array(
        [u for u in range(view.user_count) if view.items_by_user[u].size > 0],
        dtype=np.int64,
    )


def _excluded_for(split: SplitDataset, on: str, user: int) -> np.ndarray:
    train_items = split.train.items_by_user[user]
    if on == "test":
        return np.concatenate([train_items, split.valid.items_by_user[user]])
    return train_items


def rank_users(scorer, split: SplitDataset, on: str = "test", n: int = 10):
    """Yield a RankingResult for every user with items in the split."""
    view = getattr(split, on)
    for user in _eval_users(split, on):
        held_out = view.items_by_user[user]
        ranked = rank_items(scorer, int(user), _excluded_for(split, on, int(user)), n)
        yield RankingResult(
            user=int(user),
            ranked=ranked,
            hit=bool(hr_at_n(ranked, held_out)),
            ndcg=ndcg_at_n(ranked, held_out, n),
        )


def evaluate(scorer, split: SplitDataset, on: str = "test", n: int = 10) -> MetricsRecord:
    """Average HR@n and NDCG@n of a scorer over one split.

    Per-user values are reduced with math.fsum, so the aggregate is
    independent of how the users were grouped (see evaluate_model).
    """
    hits, gains = [], []
    for result in rank_users(scorer, split, on, n):
        hits.append(float(result.hit))
        gains.append(result.ndcg)
    if not hits:
        return MetricsRecord(split=on, hr=0.0, ndcg=0.0, n=n, users_evaluated=0)
    count = len(hits)
    return MetricsRecord(
        split=on,
        hr=math.fsum(hits) / count,
        ndcg=math.fsum(gains) / count,
        n=n,
        users_evaluated=count,
    )


def model_scorer(params: ParameterSet, config: ModelConfig, split: SplitDataset, chunk: int = 1024):
    """Score every item for a user in one vectorized pass.

    The history is the user's training positives; eval candidates are never
    in it, so no per-candidate exclusion is needed. Matches the instance
    forward pass to floating point reordering.
    """
    kind = config.model_kind
    P, Q = params.P, params.Q
    n_items = P.shape[0]
    hist_by_user = split.train.items_by_user

    def score(user: int) -> np.ndarray:
        hist = hist_by_user[user]
        if hist.size == 0:
            if kind in DEEP_KINDS:
                return params.b_user[user] + params.b_item
            return np.zeros(n_items)
        Qh = Q[hist]
        if kind is ModelKind.FISM:
            return hist.size ** (-config.alpha) * (P @ Qh.sum(axis=0))
        out = np.empty(n_items)
        for lo in range(0, n_items, chunk):
            hi = min(lo + chunk, n_items)
            out[lo:hi] = _score_chunk(kind, config, params, P[lo:hi], Qh, user, lo, hi)
        return out

    return score


def _score_chunk(
    kind: ModelKind,
    config: ModelConfig,
    params: ParameterSet,
    Pc: np.ndarray,
    Qh: np.ndarray,
    user: int,
    lo: int,
    hi: int,
) -> np.ndarray:
    beta = config.beta
    c, d = Pc.shape
    m = Qh.shape[0]
    if kind is ModelKind.NAIS and config.attention_mode is AttentionMode.CONCAT:
        Z = Pc @ params.W[:, :d].T
        Z = Z[:, None, :] + (Qh @ params.W[:, d:].T)[None, :, :] + params.b
        X = None
    else:
        X = Pc[:, None, :] * Qh[None, :, :]
        Z = X.reshape(c * m, d) @ params.W.T
        Z = Z.reshape(c, m, -1) + params.b
    R = np.maximum(Z, 0.0)

    needs_item = kind in (ModelKind.NAIS, ModelKind.DEEPICF) or (
        config.design is Design.DESIGN1 and kind in (ModelKind.FLA_NAIS, ModelKind.FLA_DICF)
    )
    if needs_item:
        v = R @ params.h
        e = np.exp(np.clip(v, -LOGIT_CLAMP, LOGIT_CLAMP))
        w = e / e.sum(axis=1, keepdims=True) ** beta

    if kind in (ModelKind.FLA_NAIS, ModelKind.FLA_DICF):
        a_hat = R @ params.H
        if config.design is Design.DESIGN1:
            s = np.exp(a_hat - a_hat.max(axis=2, keepdims=True))
            s /= s.sum(axis=2, keepdims=True)
            A = w[:, :, None] * s
        else:
            e2 = np.exp(np.clip(a_hat, -LOGIT_CLAMP, LOGIT_CLAMP))
            A = e2 / e2.sum(axis=1, keepdims=True) ** beta

    if kind is ModelKind.NAIS:
        inner = Pc @ Qh.T
        return np.sum(w * inner, axis=1)
    if kind is ModelKind.FLA_NAIS:
        return np.sum(A * X, axis=(1, 2))
    if kind is ModelKind.DEEPICF:
        pooled = np.einsum("cm,cmd->cd", w, X)
    elif kind is ModelKind.FLA_DICF:
        pooled = np.sum(A * X, axis=1)
    else:
        raise ValueError(f"unknown model kind {kind!r}")
    u = pooled
    for Wl, bl in zip(params.deep_W, params.deep_b):
        u = np.maximum(u @ Wl.T + bl, 0.0)
    return u @ params.V + params.b_user[user] + params.b_item[lo:hi]


def baseline_scores(kind: str, split: SplitDataset, seed: int = 0, knn_k: int | None = None):
    """Scorer for one of the RANDOM, POP or ITEMKNN baselines."""
    kind = kind.upper()
    if kind not in BASELINES:
        raise ValueError(f"unknown baseline {kind!r}; expected one of {BASELINES}")
    train = split.train
    n_items = train.item_count

    if kind == "RANDOM":

        def score(user: int) -> np.ndarray:
            return np.random.default_rng((seed, user)).uniform(size=n_items)

        return score

    if kind == "POP":
        counts = np.zeros(n_items)
        for items in train.items_by_user:
            counts[items] += 1.0

        def score(user: int) -> np.ndarray:
            return counts

        return score

    # ITEMKNN: cosine similarity between binary user-vector columns.
    from scipy import sparse

    pairs = train.pairs()
    mat = sparse.csr_matrix(
        (np.ones(pairs.shape[0]), (pairs[:, 0], pairs[:, 1])),
        shape=(train.user_count, n_items),
    )
    deg = np.asarray(mat.sum(axis=0)).ravel()
    norm = np.divide(1.0, np.sqrt(deg), out=np.zeros_like(deg), where=deg > 0)
    normalized = mat.multiply(norm[None, :]).tocsc()

    if knn_k is None:

        def score(user: int) -> np.ndarray:
            hist = train.items_by_user[user]
            if hist.size == 0:
                return np.zeros(n_items)
            profile = np.asarray(normalized[:, hist].sum(axis=1)).ravel()
            return normalized.T @ profile

        return score

    # Truncated neighborhoods: keep each target's knn_k most similar items.
    sim = (normalized.T @ normalized).toarray()
    np.fill_diagonal(sim, 0.0)
    if knn_k < n_items:
        for i in range(n_items):
            row = sim[i]
            drop = np.argsort(-row, kind="stable")[knn_k:]
            row[drop] = 0.0

    def score(user: int) -> np.ndarray:
        hist = train.items_by_user[user]
        if hist.size == 0:
            return np.zeros(n_items)
        return sim[:, hist].sum(axis=1)

    return score


_WORKER_STATE: dict = {}


def _init_worker(params, config, split, on, n):
    _WORKER_STATE["scorer"] = model_scorer(params, config, split)
    _WORKER_STATE["split"] = split
    _WORKER_STATE["on"] = on
    _WORKER_STATE["n"] = n


def _eval_chunk(users: np.ndarray) -> tuple[list[float], list[float]]:
    scorer = _WORKER_STATE["scorer"]
    split = _WORKER_STATE["split"]
    on = _WORKER_STATE["on"]
    n = _WORKER_STATE["n"]
    view = getattr(split, on)
    hits, gains = [], []
    for user in users:
        held_out = view.items_by_user[user]
        ranked = rank_items(scorer, int(user), _excluded_for(split, on, int(user)), n)
        hits.append(hr_at_n(ranked, held_out))
        gains.append(ndcg_at_n(ranked, held_out, n))
    return hits, gains


def evaluate_model(
    params: ParameterSet,
    config: ModelConfig,
    split: SplitDataset,
    on: str = "test",
    n: int = 10,
    workers: int = 1,
) -> MetricsRecord:
    """Evaluate a model on a split, optionally fanning out across users.

    Per-user computations are independent and identical regardless of the
    worker count; chunks come back in user order and are reduced with
    math.fsum, so the result is bitwise equal to the serial path.
    """
    users = _eval_users(split, on)
    if workers <= 1 or users.size < 4 or os.name == "nt":
        return evaluate(model_scorer(params, config, split), split, on, n)
    chunks = np.array_split(users, workers * 4)
    chunks = [c for c in chunks if c.size]
    hits: list[float] = []
    gains: list[float] = []
    with ProcessPoolExecutor(
        max_workers=workers,
        initializer=_init_worker,
        initargs=(params, config, split, on, n),
    ) as pool:
        for h, g in pool.map(_eval_chunk, chunks):
            hits.extend(h)
            gains.extend(g)
    if not hits:
        return MetricsRecord(split=on, hr=0.0, ndcg=0.0, n=n, users_evaluated=0)
    count = len(hits)
    return MetricsRecord(
        split=on,
        hr=math.fsum(hits) / count,
        ndcg=math.fsum(gains) / count,
        n=n,
        users_evaluated=count,
    )
