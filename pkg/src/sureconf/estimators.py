"""Reconstruction rules ``x_hat(y)``.

Each :class:`Estimator` can be used as a black box through
:meth:`Estimator.reconstruct`. Where a closed form exists, it also
carries ``exact_divergence(y)``, the divergence of ``y -> A x_hat(y)``,
which the SURE module uses directly or as an oracle for the stochastic
estimate.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .operators import CirculantOperator, NoiseModel, fourier_filter

__all__ = [
    "Estimator",
    "EstimatorConfigError",
    "wiener_estimator",
    "polynomial_deblur_estimator",
    "soft_threshold_denoiser",
    "reconstruct",
    "estimator_from_spec",
    "estimator_to_spec",
]


class EstimatorConfigError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Estimator:
    """A named reconstruction rule bound to its forward operator.

    ``measurement_symbol`` is set for linear estimators: the DFT symbol of
    the measurement-domain filter ``y -> A x_hat(y)``.
    """

    name: str
    operator: CirculantOperator
    rule: Callable[[np.ndarray], np.ndarray]
    exact_divergence: Optional[Callable[[np.ndarray], float]] = None
    measurement_symbol: Optional[np.ndarray] = None
    params: dict = field(default_factory=dict)

    @property
    def is_linear(self) -> bool:
        return self.measurement_symbol is not None

    @property
    def has_exact_divergence(self) -> bool:
        return self.exact_divergence is not None

    def _check(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64)
        if y.shape != self.operator.shape:
            raise ValueError(f"measurement shape {y.shape} does not match operator shape "
                             f"{self.operator.shape}")
        return y

    def reconstruct(self, y) -> np.ndarray:
        return self.rule(self._check(y))

    def predict_measurement(self, y) -> np.ndarray:
        """``h(y) = A x_hat(y)``."""
        return self.operator.apply(self.reconstruct(y))

    def divergence(self, y) -> float:
        if self.exact_divergence is None:
            raise EstimatorConfigError(f"estimator {self.name!r} has no closed-form divergence")
        return float(self.exact_divergence(self._check(y)))

    def __repr__(self):
        return f"Estimator(name={self.name!r}, params={self.params})"


def reconstruct(est: Estimator, y) -> np.ndarray:
    return est.reconstruct(y)


def _linear_estimator(name, op, recon_symbol, params):
    recon_symbol = np.asarray(recon_symbol, dtype=np.complex128)
    measurement_symbol = op.symbol * recon_symbol
    trace = float(np.sum(measurement_symbol.real))
    if op.is_identity and np.all(recon_symbol == 1.0):
        def rule(y):
            return y.copy()
    else:
        def rule(y):
            return fourier_filter(y, recon_symbol)
    return Estimator(name=name, operator=op, rule=rule,
                     exact_divergence=lambda y: trace,
                     measurement_symbol=measurement_symbol, params=params)


def wiener_estimator(op: CirculantOperator, sigma: float, prior_power=1.0) -> Estimator:
    """Linear Wiener filter ``X_hat = conj(lam) Y / (|lam|^2 + sigma^2 / p)``.

    ``prior_power`` is the prior power spectral density in per-pixel
    variance units: a scalar for a flat spectrum or an array shaped like the
    image (indexed like ``fft2`` output, and even under frequency negation).
    """
    if not sigma > 0:
        raise EstimatorConfigError("sigma must be positive")
    power = np.broadcast_to(np.asarray(prior_power, dtype=np.float64), op.shape)
    if np.any(power <= 0) or not np.all(np.isfinite(power)):
        raise EstimatorConfigError("prior_power must be positive and finite")
    lam = op.symbol
    recon = np.conj(lam) / (np.abs(lam) ** 2 + sigma**2 / power)
    params = {"sigma": float(sigma)}
    if np.ndim(prior_power) == 0:
        params["prior_power"] = float(prior_power)
    return _linear_estimator("wiener", op, recon, params)


def polynomial_deblur_estimator(op: CirculantOperator, degree: int = 3) -> Estimator:
    """Truncated Neumann series ``sum_{j<=degree} (I - A)^j`` applied to ``y``.

    ``degree=0`` returns ``y`` unchanged.
    """
    if int(degree) != degree or not 0 <= degree <= 5:
        raise EstimatorConfigError(f"degree must be an integer in [0, 5], got {degree}")
    degree = int(degree)
    residual = 1.0 - op.symbol
    recon = np.zeros_like(op.symbol)
    term = np.ones_like(op.symbol)
    for _ in range(degree + 1):
        recon = recon + term
        term = term * residual
    return _linear_estimator("polynomial_deblur", op, recon, {"degree": degree})


def soft_threshold_denoiser(op: CirculantOperator, threshold: float) -> Estimator:
    """Pixelwise shrinkage of deviations from mid-gray toward 0.5.

    Weakly differentiable (1-Lipschitz, kinks at ``|y - 0.5| = threshold``);
    only defined for the identity operator.
    """
    if not op.is_identity:
        raise EstimatorConfigError("soft_threshold_denoiser requires the identity operator")
    if not threshold >= 0:
        raise EstimatorConfigError("threshold must be non-negative")
    threshold = float(threshold)

    def rule(y):
        dev = y - 0.5
        return np.sign(dev) * np.maximum(np.abs(dev) - threshold, 0.0) + 0.5

    def divergence(y):
        return float(np.count_nonzero(np.abs(y - 0.5) > threshold))

    return Estimator(name="soft_threshold", operator=op, rule=rule,
                     exact_divergence=divergence, params={"threshold": threshold})


def estimator_from_spec(spec: dict, op: CirculantOperator, noise: NoiseModel | None = None) -> Estimator:
    """Build an estimator from ``{"name": ..., <parameters>}``."""
    spec = dict(spec)
    name = spec.pop("name", None)
    allowed = {
        "wiener": {"sigma", "prior_power"},
        "polynomial_deblur": {"degree"},
        "soft_threshold": {"threshold"},
    }
    if name not in allowed:
        raise EstimatorConfigError(f"unknown estimator {name!r}; expected one of {sorted(allowed)}")
    unknown = set(spec) - allowed[name]
    if unknown:
        raise EstimatorConfigError(f"unknown parameters for {name}: {sorted(unknown)}")
    if name == "wiener":
        sigma = spec.get("sigma", noise.sigma if noise is not None else None)
        if sigma is None:
            raise EstimatorConfigError("wiener needs sigma (explicitly or from the noise model)")
        return wiener_estimator(op, float(sigma), spec.get("prior_power", 1.0))
    if name == "polynomial_deblur":
        return polynomial_deblur_estimator(op, spec.get("degree", 3))
    if "threshold" not in spec:
        raise EstimatorConfigError("soft_threshold needs a threshold")
    return soft_threshold_denoiser(op, float(spec["threshold"]))


def estimator_to_spec(est: Estimator) -> dict:
    return {"name": est.name, **est.params}
