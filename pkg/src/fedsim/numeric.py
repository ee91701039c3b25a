"""Vector helpers, keyed random streams and the stochastic gradient oracle.

Model vectors are plain 1-D ``float64`` numpy arrays. Every random draw in
the simulator comes from an :class:`RngStream`, a counter-based generator
keyed on ``(seed, round, client, step)`` so that replaying a coordinate
reproduces the draw no matter which thread or in which order it runs.
"""

from __future__ import annotations

import abc
import dataclasses
import enum
import functools

import numpy as np

from .errors import DimensionError, NumericError, UnsupportedError

DTYPE = np.float64


def as_vector(values, *, copy: bool = True) -> np.ndarray:
    """Coerce ``values`` to a finite 1-D float64 vector."""
    vec = np.array(values, dtype=DTYPE, copy=copy, ndmin=1)
    if vec.ndim != 1 or vec.size == 0:
        raise DimensionError(f"model vectors must be 1-D and non-empty, got shape {vec.shape}")
    check_finite(vec)
    return vec


def check_finite(vec: np.ndarray, what: str = "vector") -> np.ndarray:
    if not np.all(np.isfinite(vec)):
        raise NumericError(f"{what} has non-finite entries")
    return vec


def check_same_dim(x: np.ndarray, y: np.ndarray) -> None:
    if x.shape != y.shape:
        raise DimensionError(f"dimension mismatch: {x.shape} vs {y.shape}")


def axpy(a: float, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Return ``a * x + y`` as a new vector."""
    check_same_dim(x, y)
    return check_finite(a * x + y, "axpy result")


def sq_norm(x: np.ndarray) -> float:
    return float(np.dot(x, x))


class Purpose(enum.IntEnum):
    """Independent sub-streams hanging off one ``(seed, r, i, k)`` coordinate."""

    GRADIENT = 0
    SAMPLING = 1
    INIT = 2
    DATA = 3


_PURPOSES = 8


@functools.lru_cache(maxsize=64)
def _philox_key(seed: int) -> np.ndarray:
    return np.random.SeedSequence(seed).generate_state(2, dtype=np.uint64)


@dataclasses.dataclass(frozen=True)
class RngStream:
    """Coordinates of one random draw.

    Backed by Philox keyed on a hash of ``seed``; the coordinates go in the
    upper counter words, so each stream owns a disjoint block of 2**64
    counter values and nothing depends on how many draws happened elsewhere.
    """

    seed: int
    round: int = 0
    client: int = 0
    step: int = 0

    def at(self, *, round: int | None = None, client: int | None = None, step: int | None = None) -> "RngStream":
        return RngStream(
            self.seed,
            self.round if round is None else round,
            self.client if client is None else client,
            self.step if step is None else step,
        )

    def generator(self, purpose: Purpose = Purpose.GRADIENT) -> np.random.Generator:
        if min(self.seed, self.round, self.client, self.step) < 0:
            raise ValueError(f"stream coordinates must be non-negative: {self}")
        counter = [0, self.round, self.client, self.step * _PURPOSES + int(purpose)]
        return np.random.Generator(np.random.Philox(key=_philox_key(self.seed), counter=counter))


@dataclasses.dataclass(frozen=True)
class GradientSample:
    gradient: np.ndarray
    noise_variance_bound: float


class ClientObjective(abc.ABC):
    """A client loss with exact and stochastic first-order oracles."""

    #: Bound on E||g(x) - grad f(x)||^2 for the stochastic oracle.
    sigma2: float = 0.0

    @property
    @abc.abstractmethod
    def dim(self) -> int: ...

    @abc.abstractmethod
    def loss(self, x: np.ndarray) -> float: ...

    @abc.abstractmethod
    def gradient(self, x: np.ndarray) -> np.ndarray: ...

    @abc.abstractmethod
    def sample_gradient(self, x: np.ndarray, stream: "RngStream") -> np.ndarray:
        """Unbiased gradient estimate using the draws keyed by ``stream``.

        Implementations call ``stream.generator()`` only when they actually
        need randomness.
        """

    def hessian(self) -> np.ndarray:
        raise UnsupportedError(f"{type(self).__name__} has no constant Hessian")

    def full_batch_gradient(self, x: np.ndarray, streams) -> np.ndarray:
        """Large-batch gradient at ``x``: the mean of one sample per stream.

        Objectives that own a finite dataset override this with the exact
        gradient over all local data.
        """
        streams = list(streams)
        if len(streams) == 1:
            return noisy_gradient(self, x, streams[0]).gradient
        total = np.zeros(self.dim)
        for stream in streams:
            total += noisy_gradient(self, x, stream).gradient
        return total / len(streams)


def noisy_gradient(obj: ClientObjective, x: np.ndarray, stream: RngStream) -> GradientSample:
    """Draw ``g_i(x)`` at the given stream coordinate.

    With ``sigma2 == 0`` on a full-batch objective the exact gradient is
    returned unchanged.
    """
    if obj.sigma2 < 0:
        raise ValueError("sigma2 must be non-negative")
    grad = obj.sample_gradient(x, stream)
    check_finite(grad, "stochastic gradient")
    return GradientSample(grad, float(obj.sigma2))
