"""Interaction data: parsing, k-core filtering, per-user splits, stats.

Raw files are line-delimited interactions. Three formats are recognized:

    MOVIELENS_DAT   user::item::rating::timestamp ("::" separated)
    CSV             user,item[,rating[,timestamp]]
    TSV             user<TAB>item[<TAB>...]

Only the user and item columns are used; ratings and timestamps are
ignored because all feedback is treated as implicit. Raw ids are opaque
strings mapped to dense indices in first-appearance order. Header rows
are not skipped; strip them before parsing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class DataFormatError(ValueError):
    """A raw interaction file line does not match the declared format."""


class EmptyDatasetError(ValueError):
    """Parsing or filtering left no interactions."""


FORMAT_DELIMITERS = {
    "MOVIELENS_DAT": "::",
    "CSV": ",",
    "TSV": "\t",
}


@dataclass
class InteractionDataset:
    """Dense-indexed implicit-feedback interactions.

    user_ids and item_ids map dense index to raw id; items_by_user holds
    each user's interacted items as a sorted index array.
    """

    user_ids: list[str]
    item_ids: list[str]
    items_by_user: list[np.ndarray]

    @property
    def user_count(self) -> int:
        return len(self.user_ids)

    @property
    def item_count(self) -> int:
        return len(self.item_ids)

    @property
    def interaction_count(self) -> int:
        return int(sum(arr.size for arr in self.items_by_user))

    def pairs(self) -> np.ndarray:
        """All (user, item) index pairs, user-major, items ascending."""
        out = np.empty((self.interaction_count, 2), dtype=np.int64)
        pos = 0
        for u, items in enumerate(self.items_by_user):
            out[pos : pos + items.size, 0] = u
            out[pos : pos + items.size, 1] = items
            pos += items.size
        return out


def _dataset_from_pairs(raw_pairs: list[tuple[str, str]]) -> InteractionDataset:
    user_index: dict[str, int] = {}
    item_index: dict[str, int] = {}
    seen: set[tuple[int, int]] = set()
    by_user: list[list[int]] = []
    for raw_u, raw_i in raw_pairs:
        u = user_index.setdefault(raw_u, len(user_index))
        if u == len(by_user):
            by_user.append([])
        i = item_index.setdefault(raw_i, len(item_index))
        if (u, i) not in seen:
            seen.add((u, i))
            by_user[u].append(i)
    if not raw_pairs:
        raise EmptyDatasetError("no interactions")
    return InteractionDataset(
        user_ids=list(user_index),
        item_ids=list(item_index),
        items_by_user=[np.array(sorted(items), dtype=np.int64) for items in by_user],
    )


def parse_interactions(
    path,
    fmt: str = "MOVIELENS_DAT",
    delimiter: str | None = None,
    user_col: int = 0,
    item_col: int = 1,
) -> InteractionDataset:
    """Parse a raw interaction file into a dense-indexed dataset.

    Duplicate (user, item) pairs are collapsed to the first occurrence.
    A line with too few fields raises DataFormatError naming the line.
    """
    fmt = fmt.upper()
    if delimiter is None:
        try:
            delimiter = FORMAT_DELIMITERS[fmt]
        except KeyError:
            raise DataFormatError(f"unknown format {fmt!r}; expected one of {sorted(FORMAT_DELIMITERS)}")
    need = max(user_col, item_col) + 1
    raw_pairs: list[tuple[str, str]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line:
                continue
            fields = line.split(delimiter)
            if len(fields) < need:
                raise DataFormatError(
                    f"{path}:{lineno}: expected at least {need} fields separated by "
                    f"{delimiter!r}, got {len(fields)}"
                )
            raw_pairs.append((fields[user_col], fields[item_col]))
    if not raw_pairs:
        raise EmptyDatasetError(f"{path} holds no interactions")
    return _dataset_from_pairs(raw_pairs)


def k_core_filter(dataset: InteractionDataset, k_user: int, k_item: int) -> InteractionDataset:
    """Iteratively drop users with < k_user and items with < k_item
    interactions until both constraints hold, then re-index densely
    preserving the original id order."""
    if k_user < 1 or k_item < 1:
        raise ValueError(f"core sizes must be >= 1, got k_user={k_user}, k_item={k_item}")
    pairs = dataset.pairs()
    keep = np.ones(pairs.shape[0], dtype=bool)
    while True:
        u_deg = np.bincount(pairs[keep, 0], minlength=dataset.user_count)
        i_deg = np.bincount(pairs[keep, 1], minlength=dataset.item_count)
        bad = keep & (
            (u_deg[pairs[:, 0]] < k_user) | (i_deg[pairs[:, 1]] < k_item)
        )
        if not bad.any():
            break
        keep &= ~bad
    if not keep.any():
        raise EmptyDatasetError(
            f"k-core filtering with k_user={k_user}, k_item={k_item} removed everything"
        )
    kept = pairs[keep]
    user_kept = np.zeros(dataset.user_count, dtype=bool)
    item_kept = np.zeros(dataset.item_count, dtype=bool)
    user_kept[kept[:, 0]] = True
    item_kept[kept[:, 1]] = True
    new_user = np.cumsum(user_kept) - 1
    new_item = np.cumsum(item_kept) - 1
    by_user: list[list[int]] = [[] for _ in range(int(user_kept.sum()))]
    for u, i in kept:
        by_user[new_user[u]].append(int(new_item[i]))
    return InteractionDataset(
        user_ids=[raw for raw, ok in zip(dataset.user_ids, user_kept) if ok],
        item_ids=[raw for raw, ok in zip(dataset.item_ids, item_kept) if ok],
        items_by_user=[np.array(sorted(xs), dtype=np.int64) for xs in by_user],
    )


@dataclass
class SplitDataset:
    """Train, validation and test views sharing one vocabulary."""

    train: InteractionDataset
    valid: InteractionDataset
    test: InteractionDataset
    ratios: tuple[float, float, float]
    seed: int


def _view(base: InteractionDataset, items_by_user: list[np.ndarray]) -> InteractionDataset:
    return InteractionDataset(
        user_ids=base.user_ids,
        item_ids=base.item_ids,
        items_by_user=items_by_user,
    )


def split_per_user(
    dataset: InteractionDataset,
    ratios: tuple[float, float, float] = (0.7, 0.1, 0.2),
    seed: int = 0,
) -> SplitDataset:
    """Shuffle each user's items and cut at round(r1*n) / round((r1+r2)*n).

    Users with fewer than three interactions keep one item in train and
    put the rest in test; validation may be empty. Every user retains at
    least one training item.
    """
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must be three nonnegative values summing to 1, got {ratios}")
    rng = np.random.default_rng(seed)
    tr, va, te = [], [], []
    for items in dataset.items_by_user:
        n = items.size
        shuffled = items[rng.permutation(n)]
        if n < 3:
            c1, c2 = 1, 1
        else:
            c1 = max(1, int(math.floor(ratios[0] * n + 0.5)))
            c2 = max(c1, int(math.floor((ratios[0] + ratios[1]) * n + 0.5)))
            c2 = min(c2, n)
        tr.append(np.sort(shuffled[:c1]))
        va.append(np.sort(shuffled[c1:c2]))
        te.append(np.sort(shuffled[c2:]))
    return SplitDataset(
        train=_view(dataset, tr),
        valid=_view(dataset, va),
        test=_view(dataset, te),
        ratios=tuple(ratios),
        seed=seed,
    )


@dataclass
class DatasetStats:
    users: int
    items: int
    interactions: int
    sparsity: float


def dataset_stats(dataset: InteractionDataset) -> DatasetStats:
    """Exact counts plus sparsity rounded to four decimal places."""
    n = dataset.interaction_count
    density = n / (dataset.user_count * dataset.item_count)
    return DatasetStats(
        users=dataset.user_count,
        items=dataset.item_count,
        interactions=n,
        sparsity=round(1.0 - density, 4),
    )


def save_split(split: SplitDataset, out_dir) -> None:
    """Write train/valid/test pair files plus the two vocab files."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, view in (("train", split.train), ("valid", split.valid), ("test", split.test)):
        with open(out / f"{name}.txt", "w", encoding="utf-8") as fh:
            for u, i in view.pairs():
                fh.write(f"{u}\t{i}\n")
    with open(out / "user_vocab.txt", "w", encoding="utf-8") as fh:
        fh.writelines(f"{raw}\n" for raw in split.train.user_ids)
    with open(out / "item_vocab.txt", "w", encoding="utf-8") as fh:
        fh.writelines(f"{raw}\n" for raw in split.train.item_ids)
    with open(out / "split_meta.txt", "w", encoding="utf-8") as fh:
        r = ",".join(repr(x) for x in split.ratios)
        fh.write(f"ratios={r}\nseed={split.seed}\n")


def load_split(data_dir) -> SplitDataset:
    """Read back a directory written by save_split."""
    root = Path(data_dir)
    user_ids = _read_vocab(root / "user_vocab.txt")
    item_ids = _read_vocab(root / "item_vocab.txt")
    views = {}
    for name in ("train", "valid", "test"):
        by_user: list[list[int]] = [[] for _ in user_ids]
        with open(root / f"{name}.txt", "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    u_s, i_s = line.split("\t")
                    u, i = int(u_s), int(i_s)
                except ValueError as exc:
                    raise DataFormatError(f"{name}.txt:{lineno}: bad pair {line!r}") from exc
                by_user[u].append(i)
        views[name] = InteractionDataset(
            user_ids=user_ids,
            item_ids=item_ids,
            items_by_user=[np.array(sorted(xs), dtype=np.int64) for xs in by_user],
        )
    meta = {}
    with open(root / "split_meta.txt", "r", encoding="utf-8") as fh:
        for line in fh:
            if "=" in line:
                key, value = line.strip().split("=", 1)
                meta[key] = value
    ratios = tuple(float(x) for x in meta.get("ratios", "0.7,0.1,0.2").split(","))
    return SplitDataset(
        train=views["train"],
        valid=views["valid"],
        test=views["test"],
        ratios=ratios,
        seed=int(meta.get("seed", "0")),
    )


def _read_vocab(path) -> list[str]:
    with open(path, "r", encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh]
