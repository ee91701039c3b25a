"""Multinomial logistic regression clients and the datasets they are cut from."""

from __future__ import annotations

import csv
import dataclasses

import numpy as np

from ..errors import DimensionError, ParameterError
from ..numeric import ClientObjective


@dataclasses.dataclass(frozen=True)
class Dataset:
    features: np.ndarray  # (n, d)
    labels: np.ndarray  # (n,) ints in [0, num_classes)
    num_classes: int

    def __post_init__(self):
        if self.features.ndim != 2 or self.labels.shape != (self.features.shape[0],):
            raise DimensionError("features must be (n, d) with one label per row")

    def __len__(self):
        return self.labels.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def param_dim(self) -> int:
        return (self.dim + 1) * self.num_classes

    def subset(self, idx) -> "Dataset":
        return Dataset(self.features[idx], self.labels[idx], self.num_classes)


def _unpack(x, d, C):
    W = x[: d * C].reshape(d, C)
    b = x[d * C :]
    return W, b


def augment(features: np.ndarray) -> np.ndarray:
    """Append a constant column so ``[X 1] @ x.reshape(d + 1, C)`` adds the bias."""
    return np.hstack([features, np.ones((features.shape[0], 1))])


def predict(x, features: np.ndarray, num_classes: int) -> np.ndarray:
    W, b = _unpack(np.asarray(x, dtype=np.float64), features.shape[1], num_classes)
    return np.argmax(features @ W + b, axis=1)


def accuracy(x, data: Dataset) -> float:
    return float(np.mean(predict(x, data.features, data.num_classes) == data.labels))


def _shifted_logits(x, Xa, C):
    logits = Xa @ x.reshape(-1, C)
    logits -= logits.max(axis=1, keepdims=True)
    return logits


def softmax_loss(x, Xa, y, C, l2=0.0) -> float:
    """Mean cross-entropy of a linear softmax model plus ``l2/2 ||x||^2``.

    ``Xa`` is the bias-augmented feature matrix (see :func:`augment`).
    """
    logits = _shifted_logits(x, Xa, C)
    lse = np.log(np.exp(logits).sum(axis=1))
    return float(np.mean(lse - logits[np.arange(len(y)), y])) + 0.5 * l2 * float(x @ x)


def softmax_grad(x, Xa, y, C, l2=0.0) -> np.ndarray:
    P = np.exp(_shifted_logits(x, Xa, C))
    P /= P.sum(axis=1, keepdims=True)
    P[np.arange(len(y)), y] -= 1.0
    grad = (Xa.T @ P).ravel()
    grad /= len(y)
    if l2:
        grad += l2 * x
    return grad


class LogisticClient(ClientObjective):
    """Softmax regression on one client's examples.

    ``sample_gradient`` draws ``batch_fraction`` of the local examples
    without replacement; a fraction of 1 gives the exact gradient. The
    minibatch variance depends on ``x``, so ``sigma2`` is reported as NaN.
    """

    def __init__(self, data: Dataset, l2: float = 0.0, batch_fraction: float = 0.2):
        if len(data) == 0:
            raise ParameterError("client has no examples")
        if not 0 < batch_fraction <= 1:
            raise ParameterError("batch_fraction must be in (0, 1]")
        if l2 < 0:
            raise ParameterError("l2 must be >= 0")
        self.data = data
        self.l2 = float(l2)
        self.batch_fraction = float(batch_fraction)
        self.batch_size = max(1, int(round(batch_fraction * len(data))))
        self.sigma2 = 0.0 if self.batch_size == len(data) else float("nan")
        self._Xa = augment(data.features)

    @property
    def dim(self):
        return self.data.param_dim

    def loss(self, x):
        return softmax_loss(x, self._Xa, self.data.labels, self.data.num_classes, self.l2)

    def gradient(self, x):
        return softmax_grad(x, self._Xa, self.data.labels, self.data.num_classes, self.l2)

    def sample_gradient(self, x, stream):
        n = len(self.data)
        if self.batch_size == n:
            return self.gradient(x)
        idx = stream.generator().choice(n, self.batch_size, replace=False)
        return softmax_grad(x, self._Xa[idx], self.data.labels[idx], self.data.num_classes, self.l2)

    def full_batch_gradient(self, x, streams):
        return self.gradient(x)


def make_synthetic_classification(
    n: int,
    d: int,
    C: int,
    seed: int,
    *,
    separation: float = 1.0,
    noise: float = 1.0,
    condition: float = 1.0,
) -> Dataset:
    """Gaussian class clusters with balanced labels.

    Class means are drawn with scale ``separation`` and examples get
    isotropic noise of scale ``noise``, so smaller ratios overlap more.
    Feature ``j`` is then multiplied by ``condition ** (-j / (d - 1))``,
    which makes the least-squares geometry (and so gradient descent)
    ill-conditioned without changing which examples are separable.
    """
    if n < C:
        raise ParameterError("need at least one example per class")
    if d < 2:
        raise ParameterError("d must be >= 2")
    if condition < 1:
        raise ParameterError("condition must be >= 1")
    rng = np.random.default_rng(seed)
    means = rng.standard_normal((C, d)) * separation
    labels = rng.permutation(np.arange(n) % C)
    features = means[labels] + noise * rng.standard_normal((n, d))
    if condition != 1.0:
        features *= condition ** (-np.arange(d) / (d - 1))
    return Dataset(features, labels.astype(np.int64), C)


def load_csv_dataset(path, num_classes: int | None = None) -> Dataset:
    """Read header-free ``f1,...,fd,label`` rows."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [row for row in csv.reader(fh) if row]
    if not rows:
        raise ParameterError(f"{path}: no rows")
    widths = {len(r) for r in rows}
    if len(widths) != 1 or widths.pop() < 2:
        raise ParameterError(f"{path}: rows need equal width with at least one feature")
    table = np.array(rows, dtype=object)
    features = table[:, :-1].astype(np.float64)
    labels = np.array([int(v) for v in table[:, -1]], dtype=np.int64)
    if labels.min() < 0:
        raise ParameterError(f"{path}: labels must be non-negative")
    C = int(labels.max()) + 1 if num_classes is None else num_classes
    return Dataset(features, labels, C)


def save_csv_dataset(data: Dataset, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        for row, label in zip(data.features, data.labels):
            writer.writerow([repr(float(v)) for v in row] + [int(label)])
