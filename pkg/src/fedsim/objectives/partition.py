"""Label-sorted / iid mixing split of a dataset across clients."""

from __future__ import annotations

import numpy as np

from ..errors import ParameterError
from .logistic import Dataset, LogisticClient


def _even_counts(total: int, parts: int) -> np.ndarray:
    counts = np.full(parts, total // parts)
    counts[: total % parts] += 1
    return counts


def similarity_indices(labels: np.ndarray, s: float, N: int, seed: int) -> list[np.ndarray]:
    """Per-client example indices for an ``s`` percent similar split.

    ``s`` percent of the examples are dealt out uniformly at random; the rest
    are sorted by label and handed out in contiguous chunks, so at ``s = 0``
    each client sees only one or two labels.
    """
    n = len(labels)
    if n == 0:
        raise ParameterError("dataset is empty")
    if not 0 <= s <= 100:
        raise ParameterError(f"similarity must be in [0, 100], got {s}")
    if N < 1:
        raise ParameterError("need at least one client")
    if n < N:
        raise ParameterError(f"{n} examples cannot cover {N} clients")

    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    n_iid = int(round(n * s / 100.0))
    iid_pool = order[:n_iid]
    rest = order[n_iid:]
    sorted_pool = rest[np.argsort(labels[rest], kind="stable")]

    iid_counts = _even_counts(n_iid, N)
    sorted_counts = _even_counts(n - n_iid, N)[::-1]  # keep client sizes balanced
    iid_parts = np.split(iid_pool, np.cumsum(iid_counts)[:-1])
    sorted_parts = np.split(sorted_pool, np.cumsum(sorted_counts)[:-1])
    return [np.concatenate([a, b]) for a, b in zip(iid_parts, sorted_parts)]


def split_by_similarity(
    data: Dataset,
    s: float,
    N: int,
    seed: int,
    *,
    l2: float = 0.0,
    batch_fraction: float = 0.2,
) -> list[LogisticClient]:
    parts = similarity_indices(data.labels, s, N, seed)
    return [LogisticClient(data.subset(idx), l2=l2, batch_fraction=batch_fraction) for idx in parts]


def label_entropy(labels: np.ndarray, num_classes: int) -> float:
    counts = np.bincount(labels, minlength=num_classes).astype(np.float64)
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log(p)).sum())
