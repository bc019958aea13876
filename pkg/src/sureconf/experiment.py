"""End-to-end coverage experiments: simulate, calibrate, evaluate.

The run is split in two stages so the self-supervised path can be audited:

* :func:`simulate` draws truth images and their noisy measurements;
* :func:`evaluate` reconstructs, scores and calibrates. Its SURE branch
  (:func:`sure_scores`) only ever receives measurements.

Every random draw is keyed by the master seed and a per-sample stream, so
results are bit-identical whether samples are processed sequentially or
by a thread pool.
"""

from __future__ import annotations

import copy
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import report
from .conformal import PredictionSet, calibrate, calibrate_loo, score
from .estimators import Estimator, estimator_from_spec
from .imaging import Image, center_crop, generate_smooth_image, read_image, write_image
from .operators import CirculantOperator, NoiseModel, operator_from_spec
from .rng import MASK64, Rng, derive_stream
from .sure import BACKENDS, DEFAULT_FD_STEP, PROBES, SureValue, sure

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "Dataset",
    "CoverageCurve",
    "ExperimentResult",
    "default_alpha_grid",
    "load_config",
    "simulate",
    "sure_scores",
    "supervised_scores",
    "evaluate",
    "run_experiment",
    "generate_data",
    "COVERAGE_COLUMNS",
]

log = logging.getLogger(__name__)

COVERAGE_COLUMNS = (
    "alpha",
    "nominal",
    "corrected_level",
    "empirical_coverage_supervised",
    "empirical_coverage_sure",
    "q_hat_supervised",
    "q_hat_sure",
)


class ConfigError(ValueError):
    pass


def default_alpha_grid() -> list[float]:
    """0.05, 0.10, ..., 0.95 (19 points)."""
    return [round(0.05 * i, 2) for i in range(1, 20)]


def _reject_unknown(section: str, data: dict, allowed) -> None:
    unknown = set(data) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys in {section}: {sorted(unknown)}")


_SOURCE_KEYS = {
    "synthetic": {"kind", "correlation_length", "correlation_length_range"},
    "pgm_dir": {"kind", "path"},
}
_SURE_KEYS = {"backend", "K", "fd_step", "probe"}


@dataclass
class ExperimentConfig:
    """Everything that determines an experiment; a run is a pure function of it."""

    problem: str = "denoise"
    image_source: dict = field(default_factory=lambda: {"kind": "synthetic", "correlation_length": 8.0})
    image_size: tuple = (64, 64)
    operator: dict = field(default_factory=lambda: {"type": "identity"})
    noise_sigma: float = 0.1
    estimator: dict = field(default_factory=lambda: {"name": "soft_threshold", "threshold": 0.1})
    M_calibration: int = 500
    N_test: int = 200
    alpha_grid: list = field(default_factory=default_alpha_grid)
    sure: dict = field(default_factory=lambda: {"backend": "hutchinson", "K": 1,
                                                "fd_step": DEFAULT_FD_STEP, "probe": "normal"})
    seed: int = 0
    output_dir: str = "out"
    loo: bool = False

    def __post_init__(self):
        self.validate()

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        _reject_unknown("config", data, cls.__dataclass_fields__)
        data = copy.deepcopy(data)
        if "image_size" in data:
            data["image_size"] = tuple(data["image_size"])
        return cls(**data)

    def to_dict(self) -> dict:
        return {
            "problem": self.problem,
            "image_source": copy.deepcopy(self.image_source),
            "image_size": list(self.image_size),
            "operator": copy.deepcopy(self.operator),
            "noise_sigma": self.noise_sigma,
            "estimator": copy.deepcopy(self.estimator),
            "M_calibration": self.M_calibration,
            "N_test": self.N_test,
            "alpha_grid": list(self.alpha_grid),
            "sure": copy.deepcopy(self.sure),
            "seed": self.seed,
            "output_dir": self.output_dir,
            "loo": self.loo,
        }

    @property
    def width(self) -> int:
        return int(self.image_size[0])

    @property
    def height(self) -> int:
        return int(self.image_size[1])

    def sure_settings(self) -> dict:
        settings = {"backend": "hutchinson", "K": 1, "fd_step": DEFAULT_FD_STEP, "probe": "normal"}
        settings.update(self.sure)
        return settings

    def validate(self) -> None:
        if self.problem not in ("denoise", "deblur"):
            raise ConfigError(f"problem must be 'denoise' or 'deblur', got {self.problem!r}")
        if len(self.image_size) != 2 or min(self.image_size) < 8:
            raise ConfigError("image_size must be [width, height] with both >= 8")
        kind = self.image_source.get("kind")
        if kind not in _SOURCE_KEYS:
            raise ConfigError(f"image_source.kind must be one of {sorted(_SOURCE_KEYS)}")
        _reject_unknown("image_source", self.image_source, _SOURCE_KEYS[kind])
        if kind == "synthetic":
            has_len = "correlation_length" in self.image_source
            has_range = "correlation_length_range" in self.image_source
            if has_len == has_range:
                raise ConfigError("synthetic source needs exactly one of correlation_length "
                                  "or correlation_length_range")
            if has_range:
                lo, hi = self.image_source["correlation_length_range"]
                if not 0 < lo <= hi:
                    raise ConfigError("correlation_length_range must satisfy 0 < low <= high")
            elif not self.image_source["correlation_length"] > 0:
                raise ConfigError("correlation_length must be positive")
        elif "path" not in self.image_source:
            raise ConfigError("pgm_dir source needs a path")
        op_type = self.operator.get("type")
        expected = "identity" if self.problem == "denoise" else "gaussian_blur"
        if op_type != expected:
            raise ConfigError(f"problem {self.problem!r} requires operator type {expected!r}")
        for key, size in (("width", self.width), ("height", self.height)):
            if key in self.operator and int(self.operator[key]) != size:
                raise ConfigError(f"operator {key} does not match image_size")
        if not (isinstance(self.noise_sigma, (int, float)) and math.isfinite(self.noise_sigma)
                and self.noise_sigma > 0):
            raise ConfigError("noise_sigma must be positive")
        if self.operator.get("sigma") is not None and float(self.operator["sigma"]) != float(self.noise_sigma):
            raise ConfigError("operator.sigma disagrees with noise_sigma")
        if int(self.M_calibration) != self.M_calibration or self.M_calibration < 2:
            raise ConfigError("M_calibration must be an integer >= 2")
        if int(self.N_test) != self.N_test or self.N_test < 1:
            raise ConfigError("N_test must be an integer >= 1")
        grid = list(self.alpha_grid)
        if not grid or any(not 0 < a < 1 for a in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigError("alpha_grid must be non-empty, strictly increasing, within (0, 1)")
        _reject_unknown("sure", self.sure, _SURE_KEYS)
        settings = self.sure_settings()
        if settings["backend"] not in BACKENDS:
            raise ConfigError(f"sure.backend must be one of {BACKENDS}")
        if settings["probe"] not in PROBES:
            raise ConfigError(f"sure.probe must be one of {PROBES}")
        if int(settings["K"]) != settings["K"] or settings["K"] < 1:
            raise ConfigError("sure.K must be a positive integer")
        if not settings["fd_step"] > 0:
            raise ConfigError("sure.fd_step must be positive")
        if int(self.seed) != self.seed or not 0 <= self.seed <= MASK64:
            raise ConfigError("seed must be an unsigned 64-bit integer")

    def build(self) -> tuple[CirculantOperator, NoiseModel, Estimator]:
        spec = {**self.operator, "width": self.width, "height": self.height}
        spec.pop("sigma", None)
        op, _ = operator_from_spec(spec)
        noise = NoiseModel(float(self.noise_sigma))
        try:
            est = estimator_from_spec(self.estimator, op, noise)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return op, noise, est


def load_config(path, seed: Optional[int] = None, loo: Optional[bool] = None) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    if seed is not None:
        data["seed"] = seed
    if loo:
        data["loo"] = True
    return ExperimentConfig.from_dict(data)


# -- simulation ------------------------------------------------------------------

@dataclass
class Dataset:
    """Truth images and measurements; the first ``M`` form the calibration pool."""

    truths: list
    measurements: list
    M: int

    @property
    def calibration_measurements(self) -> list:
        return self.measurements[:self.M]

    @property
    def test_indices(self) -> range:
        return range(self.M, len(self.measurements))


def _pool_map(fn, items, workers: int):
    if workers <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _truth_factory(config: ExperimentConfig):
    source = config.image_source
    w, h = config.width, config.height
    if source["kind"] == "synthetic":
        def make(i):
            if "correlation_length_range" in source:
                lo, hi = source["correlation_length_range"]
                u = float(Rng(config.seed, derive_stream("correlation", i)).uniform((1,))[0])
                length = lo + (hi - lo) * u
            else:
                length = source["correlation_length"]
            return generate_smooth_image(w, h, length, config.seed, derive_stream("truth", i)).data
        return make

    directory = source["path"]
    names = sorted(n for n in os.listdir(directory) if n.lower().endswith(".pgm"))
    if not names:
        raise ConfigError(f"no .pgm files in {directory}")
    images = [center_crop(read_image(os.path.join(directory, n)), w, h).data for n in names]

    def pick(i):
        # truths are drawn i.i.d. from the files so calibration and test pairs stay exchangeable
        j = int(Rng(config.seed, derive_stream("pick", i)).integers(len(images), 1)[0])
        return images[j]
    return pick


def simulate(config: ExperimentConfig, workers: int = 1) -> Dataset:
    op, noise, _ = config.build()
    count = config.M_calibration + (0 if config.loo else config.N_test)
    make_truth = _truth_factory(config)

    def one(i):
        x = make_truth(i)
        y = noise.sample(op.apply(x), Rng(config.seed, derive_stream("noise", i)))
        return x, y

    pairs = _pool_map(one, range(count), workers)
    return Dataset(truths=[p[0] for p in pairs], measurements=[p[1] for p in pairs],
                   M=config.M_calibration)


# -- scoring ---------------------------------------------------------------------

def sure_scores(measurements, est: Estimator, noise: NoiseModel, settings: dict, seed: int,
                workers: int = 1) -> list[SureValue]:
    """SURE for each measurement. Takes measurements only, never truths."""

    def one(i):
        return sure(est, noise, measurements[i], backend=settings["backend"], K=int(settings["K"]),
                    fd_step=float(settings["fd_step"]), seed=seed,
                    stream=derive_stream("probe", i), probe=settings["probe"])

    values = []
    for i, v in enumerate(_pool_map(one, range(len(measurements)), workers)):
        if not math.isfinite(v.value):
            raise ValueError(f"non-finite SURE for calibration sample {i}")
        values.append(v)
    return values


def supervised_scores(truths, estimates, op: CirculantOperator) -> list[float]:
    return [score(op, x, xh) for x, xh in zip(truths, estimates)]


@dataclass
class CoverageCurve:
    rows: list

    columns = COVERAGE_COLUMNS

    def column(self, name: str) -> np.ndarray:
        idx = self.columns.index(name)
        return np.array([r[idx] for r in self.rows], dtype=np.float64)

    def __len__(self):
        return len(self.rows)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    curve: CoverageCurve
    supervised: np.ndarray
    sure: list
    test_scores: np.ndarray

    @property
    def sure_values(self) -> np.ndarray:
        return np.array([v.value for v in self.sure])


def _pooled_coverage(config, dataset, op, estimates, sup, sure_vals):
    rows = []
    test = list(dataset.test_indices)
    for alpha in config.alpha_grid:
        cal_sup = calibrate(sup, alpha, provenance="supervised")
        cal_sure = calibrate(sure_vals, alpha, provenance="sure")
        hits_sup = hits_sure = 0
        for j in test:
            x = dataset.truths[j]
            hits_sup += PredictionSet(estimates[j], op, cal_sup.q_hat).contains(x)
            hits_sure += PredictionSet(estimates[j], op, cal_sure.q_hat).contains(x)
        rows.append((float(alpha), 1.0 - float(alpha), cal_sup.corrected_level,
                     hits_sup / len(test), hits_sure / len(test), cal_sup.q_hat, cal_sure.q_hat))
    return rows


def _loo_coverage(config, dataset, op, estimates, sup, sure_vals):
    rows = []
    M = dataset.M
    for alpha in config.alpha_grid:
        hits_sup = hits_sure = 0
        q_sup, q_sure = [], []
        level = None
        for i in range(M):
            a = calibrate_loo(sup, alpha, i, provenance="supervised")
            b = calibrate_loo(sure_vals, alpha, i, provenance="sure")
            level = a.corrected_level
            q_sup.append(a.q_hat)
            q_sure.append(b.q_hat)
            x = dataset.truths[i]
            hits_sup += PredictionSet(estimates[i], op, a.q_hat).contains(x)
            hits_sure += PredictionSet(estimates[i], op, b.q_hat).contains(x)
        rows.append((float(alpha), 1.0 - float(alpha), level, hits_sup / M, hits_sure / M,
                     float(np.median(q_sup)), float(np.median(q_sure))))
    return rows


def evaluate(config: ExperimentConfig, dataset: Dataset, workers: int = 1) -> ExperimentResult:
    """Calibrate both ways and measure coverage over the alpha grid.

    The pooled threshold is calibrated on the first ``M`` samples and
    evaluated on the rest; with ``config.loo`` each calibration sample is
    instead covered by a threshold computed from the other ``M - 1``.
    """
    op, noise, est = config.build()
    sure_vals_full = sure_scores(dataset.calibration_measurements, est, noise,
                                 config.sure_settings(), config.seed, workers)
    estimates = _pool_map(lambda i: est.reconstruct(dataset.measurements[i]),
                          range(len(dataset.measurements)), workers)
    M = dataset.M
    sup = np.array(supervised_scores(dataset.truths[:M], estimates[:M], op))
    sure_vals = np.array([v.value for v in sure_vals_full])
    if config.loo:
        rows = _loo_coverage(config, dataset, op, estimates, sup, sure_vals)
        test_scores = sup
    else:
        rows = _pooled_coverage(config, dataset, op, estimates, sup, sure_vals)
        test = list(dataset.test_indices)
        test_scores = np.array(supervised_scores([dataset.truths[j] for j in test],
                                                 [estimates[j] for j in test], op))
    return ExperimentResult(config=config, curve=CoverageCurve(rows), supervised=sup,
                            sure=sure_vals_full, test_scores=test_scores)


def run_experiment(config: ExperimentConfig, workers: int = 1, write: bool = True) -> ExperimentResult:
    """Simulate, evaluate and (optionally) write every artifact to ``config.output_dir``."""
    log.info("simulating %d samples", config.M_calibration + (0 if config.loo else config.N_test))
    dataset = simulate(config, workers)
    result = evaluate(config, dataset, workers)
    if write:
        report.write_outputs(result, config.output_dir)
    return result


def generate_data(config: ExperimentConfig, out_dir: Optional[str] = None, workers: int = 1) -> list[str]:
    """Write truth and measurement images (IMGF64) for every sample of the run."""
    out_dir = out_dir or config.output_dir
    os.makedirs(out_dir, exist_ok=True)
    dataset = simulate(config, workers)
    written = []
    for i, (x, y) in enumerate(zip(dataset.truths, dataset.measurements)):
        role = "cal" if i < dataset.M else "test"
        for kind, arr in (("truth", x), ("meas", y)):
            path = os.path.join(out_dir, f"{role}_{i:05d}_{kind}.imgf64")
            write_image(path, Image(arr))
            written.append(path)
    with open(os.path.join(out_dir, "config_echo.json"), "w", encoding="utf-8") as fh:
        json.dump(config.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return written
