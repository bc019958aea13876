"""Split-conformal calibration with the measurement-domain score.

The non-conformity score is ``s(x, y) = ||A x - A x_hat(y)||^2 / m`` and
the prediction set for a measurement is the ellipsoid
``{x : s(x, y) <= q_hat}``. Thresholds are order statistics of a
calibration sample with the finite-sample correction
``k = ceil((M + 1)(1 - alpha))``; no interpolation is ever performed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .operators import CirculantOperator

__all__ = [
    "ScoreSample",
    "CalibrationResult",
    "PredictionSet",
    "score",
    "quadratic_score",
    "order_index",
    "calibrate",
    "calibrate_loo",
    "contains",
    "set_size_proxy",
    "PROVENANCES",
]

PROVENANCES = ("supervised", "sure")


@dataclass(frozen=True)
class ScoreSample:
    """One calibration unit: ``s(x_i, y_i)`` (supervised) or ``SURE(y_i)``."""

    value: float
    provenance: str
    sample_id: int

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ValueError(f"provenance must be one of {PROVENANCES}")
        if not math.isfinite(self.value):
            raise ValueError(f"score {self.sample_id} is not finite")
        # SURE values may legitimately be negative
        if self.provenance == "supervised" and self.value < 0:
            raise ValueError(f"supervised score {self.sample_id} is negative")


@dataclass(frozen=True)
class CalibrationResult:
    alpha: float
    q_hat: float
    M: int
    k: int
    corrected_level: float
    provenance: Optional[str] = None
    holdout_index: Optional[int] = None

    @property
    def is_degenerate(self) -> bool:
        return math.isinf(self.q_hat)


def score(op: CirculantOperator, x, x_hat) -> float:
    """``||A (x - x_hat)||^2 / m``."""
    x = np.asarray(x, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if x.shape != x_hat.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {x_hat.shape}")
    residual = op.apply(x - x_hat)
    return float(np.sum(residual * residual)) / residual.size


def quadratic_score(x, x_hat, weight_matvec) -> float:
    """General normalized score ``(x - x_hat)^T W (x - x_hat)``.

    ``weight_matvec`` applies a positive definite ``W``; :func:`score`
    is the case ``W = A^T A / m``.
    """
    diff = np.asarray(x, dtype=np.float64) - np.asarray(x_hat, dtype=np.float64)
    return float(np.sum(diff * weight_matvec(diff)))


def order_index(n_plus_one: int, alpha: float) -> int:
    """``ceil(n_plus_one * (1 - alpha))`` evaluated exactly.

    ``alpha`` is read through its shortest decimal repr, so ``alpha=0.7``
    means exactly 7/10 rather than the nearest binary double.
    """
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    level = 1 - Fraction(repr(alpha))
    return math.ceil(n_plus_one * level)


def _values(scores) -> tuple[np.ndarray, Optional[str]]:
    scores = list(scores)
    if not scores:
        raise ValueError("cannot calibrate on an empty score list")
    if isinstance(scores[0], ScoreSample):
        provs = {s.provenance for s in scores}
        values = np.array([s.value for s in scores], dtype=np.float64)
        return values, provs.pop() if len(provs) == 1 else None
    values = np.asarray(scores, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise ValueError("scores must be finite")
    return values, None


def _kth(values: np.ndarray, k: int) -> float:
    if k > values.size:
        return math.inf
    return float(np.sort(values, kind="stable")[k - 1])


def calibrate(scores: Sequence, alpha: float, provenance: Optional[str] = None) -> CalibrationResult:
    """Pooled split-conformal threshold: the k-th smallest score.

    ``k = ceil((M + 1)(1 - alpha))``; ``q_hat`` is infinite when ``k > M``.

    Examples
    --------
    >>> calibrate(list(range(1, 101)), 0.1).q_hat
    91.0
    """
    values, inferred = _values(scores)
    M = values.size
    k = order_index(M + 1, alpha)
    return CalibrationResult(alpha=float(alpha), q_hat=_kth(values, k), M=M, k=k,
                             corrected_level=k / M, provenance=provenance or inferred)


def calibrate_loo(scores: Sequence, alpha: float, holdout_index: int,
                  provenance: Optional[str] = None) -> CalibrationResult:
    """Leave-one-out threshold for sample ``holdout_index``.

    Drops that sample and takes the k-th smallest of the remaining
    ``M - 1`` values with ``k = ceil(M (1 - alpha))``.
    """
    values, inferred = _values(scores)
    M = values.size
    if M < 2:
        raise ValueError("leave-one-out calibration needs at least two scores")
    if not 0 <= holdout_index < M:
        raise IndexError(f"holdout_index {holdout_index} out of range for {M} scores")
    rest = np.delete(values, holdout_index)
    k = order_index(M, alpha)
    return CalibrationResult(alpha=float(alpha), q_hat=_kth(rest, k), M=M, k=k,
                             corrected_level=k / (M - 1), provenance=provenance or inferred,
                             holdout_index=int(holdout_index))


@dataclass(frozen=True, eq=False)
class PredictionSet:
    """``{x : ||A x - A center||^2 / m <= q_hat}``."""

    center: np.ndarray
    operator: CirculantOperator
    q_hat: float

    def __post_init__(self):
        center = np.array(self.center, dtype=np.float64, copy=True)
        if center.shape != self.operator.shape:
            raise ValueError("center shape does not match the operator")
        center.setflags(write=False)
        object.__setattr__(self, "center", center)

    @property
    def m(self) -> int:
        return self.center.size

    def score(self, x) -> float:
        return score(self.operator, x, self.center)

    def contains(self, x) -> bool:
        # boundary counts as covered; no tolerance
        return self.score(x) <= self.q_hat

    def size_proxy(self) -> float:
        """``q_hat``: for a fixed operator the ellipsoid volume grows monotonically with it."""
        return float(self.q_hat)


def contains(pset: PredictionSet, x) -> bool:
    return pset.contains(x)


def set_size_proxy(pset: PredictionSet) -> float:
    return pset.size_proxy()
