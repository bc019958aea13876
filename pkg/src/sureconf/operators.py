"""Circulant forward operators and the additive Gaussian noise model.

Operators act on 2-D arrays of shape ``(height, width)`` with periodic
boundaries, so each one is diagonalized by the 2-D DFT and is fully
described by its symbol (the DFT of the convolution kernel).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .rng import Rng

__all__ = [
    "CirculantOperator",
    "NoiseModel",
    "OperatorError",
    "identity_operator",
    "gaussian_blur_kernel",
    "gaussian_blur_operator",
    "apply",
    "apply_adjoint",
    "fourier_filter",
    "condition_number",
    "add_noise",
    "operator_to_spec",
    "operator_from_spec",
    "DEFAULT_RANK_FLOOR",
]

DEFAULT_RANK_FLOOR = 1e-3
# imaginary residue allowed after the inverse FFT, relative to the result norm
_IMAG_TOL = 1e-9


class OperatorError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class CirculantOperator:
    """Periodic convolution ``x -> k * x`` stored as its DFT symbol."""

    symbol: np.ndarray
    kind: str = "circulant"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        sym = np.array(self.symbol, dtype=np.complex128, copy=True)
        if sym.ndim != 2:
            raise OperatorError("symbol must be a 2-D array")
        if not np.all(np.isfinite(sym)):
            raise OperatorError("symbol must be finite")
        if np.min(np.abs(sym)) <= 0.0:
            raise OperatorError("operator is not full rank: symbol vanishes on the DFT grid")
        sym.setflags(write=False)
        object.__setattr__(self, "symbol", sym)

    @property
    def height(self) -> int:
        return self.symbol.shape[0]

    @property
    def width(self) -> int:
        return self.symbol.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.symbol.shape

    @property
    def size(self) -> int:
        return self.symbol.size

    @property
    def is_identity(self) -> bool:
        return self.kind == "identity"

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != self.shape:
            raise OperatorError(f"image shape {x.shape} does not match operator shape {self.shape}")
        return x

    def apply(self, x) -> np.ndarray:
        x = self._check(x)
        if self.is_identity:
            return x.copy()
        return fourier_filter(x, self.symbol)

    def apply_adjoint(self, x) -> np.ndarray:
        x = self._check(x)
        if self.is_identity:
            return x.copy()
        return fourier_filter(x, np.conj(self.symbol))

    def condition_number(self) -> float:
        mag = np.abs(self.symbol)
        return float(mag.max() / mag.min())

    def adjoint(self) -> "CirculantOperator":
        return CirculantOperator(np.conj(self.symbol), kind=self.kind, params=dict(self.params))

    def __repr__(self):
        return f"CirculantOperator(kind={self.kind!r}, width={self.width}, height={self.height})"


def fourier_filter(x, symbol) -> np.ndarray:
    """Real part of ``ifft2(fft2(x) * symbol)``, refusing a large imaginary residue."""
    out = np.fft.ifft2(np.fft.fft2(x) * symbol)
    real = out.real
    residue = np.linalg.norm(out.imag)
    if residue > _IMAG_TOL * np.linalg.norm(real):
        raise OperatorError(
            f"imaginary residue {residue:.3e} after filtering; symbol is not conjugate-symmetric")
    return real


def apply(op: CirculantOperator, x) -> np.ndarray:
    return op.apply(x)


def apply_adjoint(op: CirculantOperator, x) -> np.ndarray:
    return op.apply_adjoint(x)


def condition_number(op: CirculantOperator) -> float:
    """Ratio of the largest to the smallest symbol magnitude."""
    return op.condition_number()


def _check_dims(width, height):
    if int(width) != width or int(height) != height or width < 1 or height < 1:
        raise OperatorError(f"dimensions must be positive integers, got {width}x{height}")


def identity_operator(width: int, height: int) -> CirculantOperator:
    _check_dims(width, height)
    return CirculantOperator(np.ones((height, width), dtype=np.complex128), kind="identity",
                             params={"width": int(width), "height": int(height)})


def gaussian_blur_kernel(width: int, height: int, bandwidth_major: float,
                         bandwidth_minor: float, angle: float) -> np.ndarray:
    """Periodized, unit-sum, rotated anisotropic Gaussian with its origin at ``[0, 0]``.

    ``bandwidth_major`` / ``bandwidth_minor`` are standard deviations in
    pixels along the principal axes; ``angle`` rotates the major axis
    counter-clockwise from the x (column) axis. The kernel is evaluated on
    the full grid and summed over periodic images, then symmetrized about
    the origin so its DFT is real.
    """
    _check_dims(width, height)
    if not (bandwidth_major > 0 and bandwidth_minor > 0):
        raise OperatorError("blur bandwidths must be positive")
    reach = 6.0 * max(bandwidth_major, bandwidth_minor)
    wraps_x = int(math.ceil(reach / width)) + 1
    wraps_y = int(math.ceil(reach / height)) + 1
    dy0 = np.arange(height, dtype=np.float64)[:, None]
    dx0 = np.arange(width, dtype=np.float64)[None, :]
    c, s = math.cos(angle), math.sin(angle)
    kernel = np.zeros((height, width))
    for sy in range(-wraps_y, wraps_y + 1):
        dy = dy0 + sy * height
        for sx in range(-wraps_x, wraps_x + 1):
            dx = dx0 + sx * width
            u = c * dx + s * dy
            v = -s * dx + c * dy
            kernel += np.exp(-0.5 * (u / bandwidth_major) ** 2 - 0.5 * (v / bandwidth_minor) ** 2)
    # point symmetry k[-d] = k[d], exact in floating point
    mirrored = np.roll(kernel[::-1, ::-1], shift=(1, 1), axis=(0, 1))
    kernel = 0.5 * (kernel + mirrored)
    return kernel / kernel.sum()


def _floor_symbol(symbol: np.ndarray, rank_floor: float) -> np.ndarray:
    mag = np.abs(symbol)
    low = mag < rank_floor
    if np.any(low):
        symbol = symbol.copy()
        sub, sub_mag = symbol[low], mag[low]
        phase = np.ones_like(sub)
        nonzero = sub_mag > 0
        phase[nonzero] = sub[nonzero] / sub_mag[nonzero]
        symbol[low] = phase * rank_floor
    return symbol


def gaussian_blur_operator(width: int, height: int, bandwidth_major: float,
                           bandwidth_minor: float, angle: float,
                           rank_floor: float = DEFAULT_RANK_FLOOR) -> CirculantOperator:
    """Anisotropic Gaussian blur with DC gain 1 and ``min |symbol| >= rank_floor``."""
    if not 0.0 <= rank_floor < 1.0:
        raise OperatorError("rank_floor must lie in [0, 1)")
    kernel = gaussian_blur_kernel(width, height, bandwidth_major, bandwidth_minor, angle)
    # the kernel is even, so its DFT is real; dropping the rounding residue
    # keeps the floored coefficients free of spurious phase
    symbol = np.fft.fft2(kernel).real
    symbol = 0.5 * (symbol + np.roll(symbol[::-1, ::-1], shift=(1, 1), axis=(0, 1)))
    symbol = symbol.astype(np.complex128)
    symbol = _floor_symbol(symbol, rank_floor)
    params = {
        "width": int(width),
        "height": int(height),
        "bandwidth_major": float(bandwidth_major),
        "bandwidth_minor": float(bandwidth_minor),
        "angle": float(angle),
        "rank_floor": float(rank_floor),
    }
    return CirculantOperator(symbol, kind="gaussian_blur", params=params)


@dataclass(frozen=True)
class NoiseModel:
    """Additive white Gaussian noise with standard deviation ``sigma``."""

    sigma: float

    def __post_init__(self):
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise ValueError(f"sigma must be positive and finite, got {self.sigma}")

    @property
    def variance(self) -> float:
        return self.sigma * self.sigma

    def sample(self, clean, rng: Rng) -> np.ndarray:
        clean = np.asarray(clean, dtype=np.float64)
        return clean + self.sigma * rng.normal(clean.shape)


def add_noise(noise: NoiseModel, clean_measurement, seed: int, stream: int = 0) -> np.ndarray:
    """``clean_measurement`` plus i.i.d. N(0, sigma^2) noise, deterministic in (seed, stream)."""
    return noise.sample(clean_measurement, Rng(seed, stream))


_SPEC_KEYS = {"type", "width", "height", "bandwidth_major", "bandwidth_minor", "angle",
              "rank_floor", "sigma"}


def operator_to_spec(op: CirculantOperator, noise: NoiseModel | None = None) -> dict:
    """JSON-ready description ``{type, width, height, ..., sigma}``."""
    if op.kind not in ("identity", "gaussian_blur"):
        raise OperatorError(f"operator kind {op.kind!r} has no serial form")
    spec = {"type": op.kind, **op.params}
    if noise is not None:
        spec["sigma"] = noise.sigma
    return spec


def operator_from_spec(spec: dict) -> tuple[CirculantOperator, NoiseModel | None]:
    """Inverse of :func:`operator_to_spec`; unknown keys are rejected."""
    unknown = set(spec) - _SPEC_KEYS
    if unknown:
        raise OperatorError(f"unknown operator keys: {sorted(unknown)}")
    kind = spec.get("type")
    try:
        width, height = int(spec["width"]), int(spec["height"])
    except KeyError as exc:
        raise OperatorError(f"operator spec missing {exc.args[0]!r}") from None
    if kind == "identity":
        op = identity_operator(width, height)
    elif kind == "gaussian_blur":
        try:
            op = gaussian_blur_operator(
                width, height,
                float(spec["bandwidth_major"]), float(spec["bandwidth_minor"]),
                float(spec.get("angle", 0.0)),
                float(spec.get("rank_floor", DEFAULT_RANK_FLOOR)),
            )
        except KeyError as exc:
            raise OperatorError(f"gaussian_blur spec missing {exc.args[0]!r}") from None
    else:
        raise OperatorError(f"unknown operator type {kind!r}")
    noise = NoiseModel(float(spec["sigma"])) if spec.get("sigma") is not None else None
    return op, noise
