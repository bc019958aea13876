"""CSV tables and SVG figures for experiment results."""

from __future__ import annotations

import json
import math
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .imaging import read_table, write_table  # noqa: E402

__all__ = [
    "histogram_edges",
    "histogram_counts",
    "plot_coverage",
    "plot_histogram",
    "read_coverage_curve",
    "write_outputs",
    "MIN_BINS",
]

MIN_BINS = 10
_MAX_BINS = 200

# fixed ids and no timestamp so identical data give identical SVG bytes
_SVG_RC = {"svg.hashsalt": "sureconf", "svg.fonttype": "path", "font.size": 9}
_SVG_METADATA = {"Date": None, "Creator": None}


def histogram_edges(a, b) -> np.ndarray:
    """Shared bin edges: Freedman-Diaconis on the pooled sample, at least 10 bins."""
    pooled = np.concatenate([np.asarray(a, dtype=np.float64).ravel(),
                             np.asarray(b, dtype=np.float64).ravel()])
    if pooled.size == 0:
        raise ValueError("cannot bin empty samples")
    lo, hi = float(pooled.min()), float(pooled.max())
    if hi <= lo:
        lo, hi = lo - 0.5, hi + 0.5
    q75, q25 = np.percentile(pooled, [75, 25])
    width = 2.0 * (q75 - q25) * pooled.size ** (-1.0 / 3.0)
    bins = MIN_BINS if width <= 0 else int(math.ceil((hi - lo) / width))
    bins = min(max(bins, MIN_BINS), _MAX_BINS)
    return np.linspace(lo, hi, bins + 1)


def histogram_counts(a, b, edges=None):
    if edges is None:
        edges = histogram_edges(a, b)
    ca, _ = np.histogram(np.asarray(a, dtype=np.float64), bins=edges)
    cb, _ = np.histogram(np.asarray(b, dtype=np.float64), bins=edges)
    return edges, ca, cb


def _save(fig, path):
    fig.savefig(path, format="svg", metadata=_SVG_METADATA)
    plt.close(fig)


def plot_coverage(curve, path) -> None:
    """Nominal level against empirical coverage for both calibrations."""
    if len(curve) == 0:
        raise ValueError("coverage curve is empty")
    nominal = curve.column("nominal")
    with plt.rc_context(_SVG_RC):
        fig, ax = plt.subplots(figsize=(4.5, 4.5))
        ax.plot([0, 1], [0, 1], color="0.6", ls="--", lw=1, label="ideal")
        ax.plot(nominal, curve.column("empirical_coverage_supervised"), marker="o", ms=3,
                label="supervised")
        ax.plot(nominal, curve.column("empirical_coverage_sure"), marker="s", ms=3,
                label="SURE (self-supervised)")
        ax.set_xlim(0, 1)
        ax.set_ylim(0, 1)
        ax.set_xlabel(r"desired confidence level $1-\alpha$")
        ax.set_ylabel("empirical coverage")
        ax.set_aspect("equal")
        ax.legend(loc="upper left", frameon=False)
        fig.tight_layout()
        _save(fig, path)


def plot_histogram(scores_supervised, scores_sure, path) -> None:
    """Overlaid calibration-score histograms on shared bins."""
    scores_supervised = np.asarray(scores_supervised, dtype=np.float64)
    scores_sure = np.asarray(scores_sure, dtype=np.float64)
    if scores_supervised.size == 0 or scores_sure.size == 0:
        raise ValueError("both score samples must be non-empty")
    edges = histogram_edges(scores_supervised, scores_sure)
    with plt.rc_context(_SVG_RC):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.hist(scores_supervised, bins=edges, alpha=0.5, label="supervised (MSE)")
        ax.hist(scores_sure, bins=edges, alpha=0.5, label="SURE")
        ax.set_xlabel(r"score $\|Ax - A\hat{x}(y)\|^2 / m$")
        ax.set_ylabel("count")
        ax.legend(frameon=False)
        fig.tight_layout()
        _save(fig, path)


def read_coverage_curve(path):
    from .experiment import COVERAGE_COLUMNS, CoverageCurve

    header, rows = read_table(path)
    if tuple(header) != COVERAGE_COLUMNS:
        raise ValueError(f"{path}: unexpected columns {header}")
    return CoverageCurve([tuple(float(v) for v in row) for row in rows])


def write_outputs(result, out_dir) -> dict:
    """Write coverage/score tables, the config echo and both figures."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {name: os.path.join(out_dir, name) for name in (
        "coverage.csv", "scores.csv", "calibration_scores.csv", "config_echo.json",
        "coverage.svg", "histogram.svg")}
    curve = result.curve
    write_table(paths["coverage.csv"], curve.columns, curve.rows)

    sure_vals = result.sure_values
    edges, c_sup, c_sure = histogram_counts(result.supervised, sure_vals)
    write_table(paths["scores.csv"], ["bin_left", "bin_right", "count_supervised", "count_sure"],
                [(edges[i], edges[i + 1], int(c_sup[i]), int(c_sure[i])) for i in range(len(c_sup))])

    write_table(paths["calibration_scores.csv"],
                ["sample_id", "supervised", "sure", "residual_term", "divergence_term", "divergence"],
                [(i, float(result.supervised[i]), v.value, v.residual_term, v.divergence_term,
                  v.divergence.value) for i, v in enumerate(result.sure)])

    with open(paths["config_echo.json"], "w", encoding="utf-8") as fh:
        json.dump(result.config.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    plot_coverage(curve, paths["coverage.svg"])
    plot_histogram(result.supervised, sure_vals, paths["histogram.svg"])
    return paths
