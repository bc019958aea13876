"""Stein's unbiased estimate of the measurement-domain error.

For ``y ~ N(A x, sigma^2 I_m)`` and ``h(y) = A x_hat(y)``::

    SURE(y) = ||y - h(y)||^2 / m - sigma^2 + 2 sigma^2 div h(y) / m

is an unbiased estimate of ``||A x - h(y)||^2 / m``. The divergence is
taken either from the estimator's closed form or from a Hutchinson trace
estimate whose Jacobian-vector products are forward finite differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .estimators import Estimator
from .operators import NoiseModel
from .rng import Rng

__all__ = [
    "DivergenceEstimate",
    "SureValue",
    "SureError",
    "divergence_exact",
    "divergence_hutchinson",
    "sure",
    "DEFAULT_FD_STEP",
    "BACKENDS",
    "PROBES",
]

DEFAULT_FD_STEP = 1e-4
BACKENDS = ("exact", "hutchinson", "auto")
PROBES = ("normal", "rademacher")


class SureError(RuntimeError):
    pass


@dataclass(frozen=True)
class DivergenceEstimate:
    value: float
    backend: str
    probes_used: int = 0
    fd_step: Optional[float] = None


@dataclass(frozen=True)
class SureValue:
    """SURE(y) together with the three addends it was assembled from."""

    value: float
    residual_term: float
    sigma_term: float
    divergence_term: float
    divergence: DivergenceEstimate


def divergence_exact(est: Estimator, y) -> DivergenceEstimate:
    if not est.has_exact_divergence:
        raise SureError(f"estimator {est.name!r} has no closed-form divergence")
    return DivergenceEstimate(value=est.divergence(y), backend="exact")


def divergence_hutchinson(est: Estimator, y, K: int = 1, fd_step: float = DEFAULT_FD_STEP,
                          seed: int = 0, stream: int = 0, probe: str = "normal",
                          h0: Optional[np.ndarray] = None) -> DivergenceEstimate:
    """Hutchinson estimate of ``trace(dh/dy)`` with finite-difference JVPs.

    Averages ``n^T (h(y + eps n) - h(y)) / eps`` over ``K`` probes ``n``
    with ``eps = fd_step * (1 + max|y|)``. Probes come from
    ``Rng(seed, stream)`` in order, so the result is deterministic.
    ``h0`` may pass a precomputed ``h(y)``.
    """
    if K < 1:
        raise ValueError("K must be at least 1")
    if not fd_step > 0:
        raise ValueError("fd_step must be positive")
    if probe not in PROBES:
        raise ValueError(f"probe must be one of {PROBES}")
    y = np.asarray(y, dtype=np.float64)
    eps = fd_step * (1.0 + float(np.max(np.abs(y))))
    if h0 is None:
        h0 = est.predict_measurement(y)
    rng = Rng(seed, stream)
    draw = rng.normal if probe == "normal" else rng.rademacher
    total = 0.0
    for _ in range(int(K)):
        n = draw(y.shape)
        h1 = est.predict_measurement(y + eps * n)
        total += float(np.sum(n * (h1 - h0))) / eps
    value = total / K
    if not math.isfinite(value):
        raise SureError(f"non-finite divergence estimate at fd_step={fd_step}")
    return DivergenceEstimate(value=value, backend="hutchinson", probes_used=int(K), fd_step=float(fd_step))


def sure(est: Estimator, noise: NoiseModel, y, backend: str = "hutchinson", K: int = 1,
         fd_step: float = DEFAULT_FD_STEP, seed: int = 0, stream: int = 0,
         probe: str = "normal") -> SureValue:
    """SURE(y) for the estimator, noise model and divergence backend given.

    ``backend="auto"`` uses the closed form when the estimator has one and
    falls back to Hutchinson otherwise.
    """
    if backend not in BACKENDS:
        raise ValueError(f"backend must be one of {BACKENDS}")
    y = np.asarray(y, dtype=np.float64)
    h0 = est.predict_measurement(y)
    m = y.size
    if backend == "exact" or (backend == "auto" and est.has_exact_divergence):
        div = divergence_exact(est, y)
    else:
        div = divergence_hutchinson(est, y, K=K, fd_step=fd_step, seed=seed, stream=stream,
                                    probe=probe, h0=h0)
    residual_term = float(np.sum((y - h0) ** 2)) / m
    sigma_term = noise.variance
    divergence_term = 2.0 * noise.variance * div.value / m
    value = residual_term - sigma_term + divergence_term
    if not math.isfinite(value):
        raise SureError("non-finite SURE value")
    return SureValue(value=value, residual_term=residual_term, sigma_term=sigma_term,
                     divergence_term=divergence_term, divergence=div)
