"""Empirical gradient and Hessian dissimilarity of a client population."""

from __future__ import annotations

import numpy as np

from ..errors import DimensionError, UnsupportedError


def _check_dims(clients):
    dims = {c.dim for c in clients}
    if len(dims) != 1:
        raise DimensionError(f"clients disagree on dimension: {sorted(dims)}")
    return dims.pop()


def measure_bgd(clients, x) -> tuple[float, float]:
    """Return ``(mean_i ||grad f_i(x)||^2, ||grad f(x)||^2)``.

    Fitting ``G^2 + B^2 * full_sq >= local_sq_mean`` over a set of points
    gives the bounded-gradient-dissimilarity constants.
    """
    d = _check_dims(clients)
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (d,):
        raise DimensionError(f"point has shape {x.shape}, clients have dim {d}")
    grads = np.stack([c.gradient(x) for c in clients])
    local_sq_mean = float(np.mean(np.sum(grads**2, axis=1)))
    full = grads.mean(axis=0)
    return local_sq_mean, float(full @ full)


def fit_g2(clients, points, B2: float = 1.0) -> float:
    """Smallest ``G^2`` such that ``local <= G^2 + B2 * full`` at every point."""
    pairs = [measure_bgd(clients, p) for p in points]
    return max(0.0, max(local - B2 * full for local, full in pairs))


def measure_bhd(clients) -> float:
    """``max_i ||A_i - A||_2`` with ``A`` the mean Hessian."""
    _check_dims(clients)
    try:
        hessians = np.stack([c.hessian() for c in clients])
    except UnsupportedError as exc:
        raise UnsupportedError("Hessian dissimilarity needs quadratic clients") from exc
    # Centre on the first Hessian so identical clients give exactly zero.
    mean = hessians[0] + (hessians - hessians[0]).mean(axis=0)
    return max(float(np.linalg.norm(H - mean, ord=2)) for H in hessians)
