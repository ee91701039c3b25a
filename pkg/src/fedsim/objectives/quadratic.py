"""Quadratic client losses: the two-client lower-bound pair and tunable ensembles."""

from __future__ import annotations

import dataclasses

import numpy as np
from scipy.stats import ortho_group

from ..errors import DimensionError, ParameterError
from ..numeric import ClientObjective, as_vector


class QuadraticClient(ClientObjective):
    """``f(x) = 1/2 x'Ax + b'x + offset`` with Gaussian gradient noise.

    Built with :meth:`from_center` the loss is evaluated in the centred form
    ``1/2 (x - x*)'A(x - x*) + offset`` instead, which is exact at the centre.
    Clients need not be convex, and a client whose Hessian is singular may
    have no centre at all (e.g. a purely linear loss).
    """

    def __init__(self, hessian, linear=None, offset: float = 0.0, sigma2: float = 0.0):
        A = np.atleast_2d(np.asarray(hessian, dtype=np.float64))
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise DimensionError(f"Hessian must be square, got {A.shape}")
        if not np.array_equal(A, A.T):
            A = 0.5 * (A + A.T)
        if sigma2 < 0:
            raise ParameterError("sigma2 must be >= 0")
        self.A = A
        self.b = np.zeros(A.shape[0]) if linear is None else as_vector(linear)
        if self.b.shape != (A.shape[0],):
            raise DimensionError("linear term does not match Hessian")
        self.offset = float(offset)
        self.sigma2 = float(sigma2)
        self._center = None

    @classmethod
    def from_center(cls, hessian, center, offset: float = 0.0, sigma2: float = 0.0) -> "QuadraticClient":
        A = np.atleast_2d(np.asarray(hessian, dtype=np.float64))
        c = as_vector(center)
        obj = cls(A, -(A @ c), offset + 0.5 * float(c @ A @ c), sigma2)
        obj._center = c
        obj._center_offset = float(offset)
        return obj

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    @property
    def center(self) -> np.ndarray | None:
        """A stationary point, or None when ``Ax = -b`` has no solution."""
        if self._center is not None:
            return self._center.copy()
        sol, *_ = np.linalg.lstsq(self.A, -self.b, rcond=None)
        if np.allclose(self.A @ sol, -self.b, atol=1e-12 * (1.0 + np.abs(self.b).max())):
            return sol
        return None

    def loss(self, x):
        x = np.asarray(x, dtype=np.float64)
        if self._center is not None:
            e = x - self._center
            return 0.5 * float(e @ self.A @ e) + self._center_offset
        return 0.5 * float(x @ self.A @ x) + float(self.b @ x) + self.offset

    def gradient(self, x):
        x = np.asarray(x, dtype=np.float64)
        if self._center is not None:
            return self.A @ (x - self._center)
        return self.A @ x + self.b

    def sample_gradient(self, x, stream):
        grad = self.gradient(x)
        if self.sigma2 == 0.0:
            return grad
        return grad + stream.generator().standard_normal(self.dim) * np.sqrt(self.sigma2 / self.dim)

    def hessian(self):
        return self.A.copy()


@dataclasses.dataclass(frozen=True)
class LowerBoundPair:
    """The 1-D pair ``f1 = mu x^2 + G x`` and ``f2 = -G x``.

    Their average ``mu/2 x^2`` is minimised at 0, yet FedAvg with more than
    one local step stalls at a point that grows with ``G``.
    """

    mu: float
    G: float

    def __post_init__(self):
        if not self.mu > 0:
            raise ParameterError(f"mu must be positive, got {self.mu}")
        if not self.G > 0:
            raise ParameterError(f"G must be positive, got {self.G}")

    def clients(self, sigma2: float = 0.0) -> list[QuadraticClient]:
        return [
            QuadraticClient([[2.0 * self.mu]], [self.G], sigma2=sigma2),
            QuadraticClient([[0.0]], [-self.G], sigma2=sigma2),
        ]

    def loss(self, x: float) -> float:
        return 0.5 * self.mu * x * x

    def fedavg_round(self, x: float, eta: float, K: int, alpha: float = 0.5) -> float:
        """Closed-form server iterate after one full-participation FedAvg round.

        ``alpha`` is the aggregation weight on the linear client.
        """
        q = 1.0 - 2.0 * self.mu * eta
        drift = sum(alpha - (1.0 - alpha) * q**tau for tau in range(K))
        return x * ((1.0 - alpha) * q**K + alpha) + eta * self.G * drift


def make_lower_bound_clients(mu: float, G: float, sigma2: float = 0.0) -> list[QuadraticClient]:
    return LowerBoundPair(mu, G).clients(sigma2)


def _balanced_signs(N: int, rng: np.random.Generator) -> np.ndarray:
    # +1 for half the clients, -1 for the other half, 0 for the odd one out
    signs = np.zeros(N)
    half = N // 2
    signs[:half] = 1.0
    signs[half : 2 * half] = -1.0
    return rng.permutation(signs)


def make_quadratic_ensemble(
    N: int,
    d: int,
    delta: float,
    G: float,
    seed: int,
    *,
    mu: float = 0.1,
    beta: float = 1.0,
    hetero_dims: int = 1,
    sigma2: float = 0.0,
) -> list[QuadraticClient]:
    """Quadratic clients with Hessian dissimilarity ``delta`` and gradient
    dissimilarity ``G`` at the shared optimum ``x* = 0``.

    The mean Hessian has eigenvalue ``beta`` on ``hetero_dims`` random
    orthogonal directions and a geometric ladder from ``beta`` down to ``mu``
    on the rest (when ``d == hetero_dims`` the spectrum is just ``beta``).
    Each client's Hessian is the mean plus ``+-delta`` on every heterogeneous
    direction, and its gradient at ``x*`` points along the same directions
    with the same sign, so high-curvature clients pull one way and
    low-curvature clients the other.
    """
    if N < 2:
        raise ParameterError("need at least two clients")
    if d < 1:
        raise ParameterError("d must be >= 1")
    if delta < 0 or G < 0:
        raise ParameterError("delta and G must be non-negative")
    if delta > 2 * beta:
        raise ParameterError(f"delta={delta} exceeds 2*beta={2 * beta}")
    if not 1 <= hetero_dims <= d:
        raise ParameterError("hetero_dims must be in [1, d]")
    if not 0 < mu <= beta:
        raise ParameterError("need 0 < mu <= beta")

    rng = np.random.default_rng(seed)
    Q = ortho_group.rvs(d, random_state=rng) if d > 1 else np.ones((1, 1))
    m = hetero_dims
    eigs = np.full(d, float(beta))
    if d > m:
        eigs[m:] = np.geomspace(beta, mu, d - m + 1)[1:]
    A = (Q * eigs) @ Q.T
    A = 0.5 * (A + A.T)

    H = Q[:, :m]
    signs = np.stack([_balanced_signs(N, rng) for _ in range(m)], axis=1)  # (N, m)
    weights = rng.uniform(0.5, 1.5, size=m)
    raw = (signs * weights) @ H.T  # (N, d), columns sum to zero
    norm = np.sqrt(np.mean(np.sum(raw**2, axis=1)))
    grads = raw * (G / norm) if G > 0 else np.zeros_like(raw)

    clients = []
    for i in range(N):
        D = (H * (delta * signs[i])) @ H.T
        Ai = A + 0.5 * (D + D.T)
        clients.append(QuadraticClient(Ai, grads[i], sigma2=sigma2))
    return clients


def make_identical_hessian_ensemble(
    N: int, d: int, G: float, seed: int, *, mu: float = 0.1, beta: float = 1.0, sigma2: float = 0.0
) -> list[QuadraticClient]:
    """Clients sharing one Hessian but with distinct optima (``delta = 0``)."""
    rng = np.random.default_rng(seed)
    Q = ortho_group.rvs(d, random_state=rng) if d > 1 else np.ones((1, 1))
    eigs = np.geomspace(beta, mu, d) if d > 1 else np.array([beta])
    A = (Q * eigs) @ Q.T
    A = 0.5 * (A + A.T)
    raw = rng.standard_normal((N, d))
    raw -= raw.mean(axis=0)
    norm = np.sqrt(np.mean(np.sum(raw**2, axis=1)))
    grads = raw * (G / norm) if G > 0 else np.zeros_like(raw)
    return [QuadraticClient(A, g, sigma2=sigma2) for g in grads]
