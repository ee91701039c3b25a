"""A client population plus whatever is known about its global optimum."""

from __future__ import annotations

import dataclasses
from typing import Sequence

import numpy as np

from ..errors import DimensionError, ParameterError
from ..numeric import ClientObjective
from .logistic import Dataset, accuracy


@dataclasses.dataclass
class Federation:
    """Clients of the global objective ``f = mean_i f_i``.

    ``x_star``/``f_star`` are filled in when the optimum is known in closed
    form (quadratics); ``eval_data`` enables accuracy tracking.
    """

    clients: Sequence[ClientObjective]
    x_star: np.ndarray | None = None
    f_star: float | None = None
    eval_data: Dataset | None = None
    #: Mean Hessian of a quadratic federation; gives cancellation-free suboptimality.
    mean_hessian: np.ndarray | None = None

    def __post_init__(self):
        if not self.clients:
            raise ParameterError("federation has no clients")
        dims = {c.dim for c in self.clients}
        if len(dims) != 1:
            raise DimensionError(f"clients disagree on dimension: {sorted(dims)}")

    @property
    def N(self) -> int:
        return len(self.clients)

    @property
    def dim(self) -> int:
        return self.clients[0].dim

    def loss(self, x) -> float:
        return float(np.mean([c.loss(x) for c in self.clients]))

    def gradient(self, x) -> np.ndarray:
        return np.mean([c.gradient(x) for c in self.clients], axis=0)

    def suboptimality(self, x) -> float:
        if self.mean_hessian is not None and self.x_star is not None:
            e = np.asarray(x, dtype=np.float64) - self.x_star
            return 0.5 * float(e @ self.mean_hessian @ e)
        return float("nan") if self.f_star is None else self.loss(x) - self.f_star

    def accuracy(self, x) -> float:
        return float("nan") if self.eval_data is None else accuracy(x, self.eval_data)


def quadratic_federation(clients) -> Federation:
    """Wrap quadratic clients, solving for the optimum of their mean."""
    A = np.mean([c.hessian() for c in clients], axis=0)
    b = np.mean([c.gradient(np.zeros(c.dim)) for c in clients], axis=0)
    x_star = np.linalg.solve(A, -b)
    fed = Federation(clients, x_star=x_star, mean_hessian=A)
    fed.f_star = fed.loss(x_star)
    return fed
