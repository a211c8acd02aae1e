"""Interval quality metrics and binned coverage diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ShapeError

MIN_RELIABLE = 20
SMOOTH_WINDOW = 9


@dataclass(frozen=True)
class IntervalMetrics:
    ave_coverage: float
    ave_length: float
    iqr_length: float
    mad: float
    infinite: bool = False

    def as_dict(self):
        return {
            "ave_coverage": self.ave_coverage,
            "ave_length": self.ave_length,
            "iqr_length": self.iqr_length,
            "mad": self.mad,
            "infinite": self.infinite,
        }


def covered(intervals, y):
    iv = np.asarray(intervals, dtype=float)
    y = np.asarray(y, dtype=float)
    return (iv[:, 0] <= y) & (y <= iv[:, 1])


def interval_metrics(intervals, median, y) -> IntervalMetrics:
    """Coverage, mean and IQR of lengths, and mean ``|m(x) - y|``.

    IQR uses linear interpolation between order statistics (numpy's default
    ``"linear"`` rule).
    """
    iv = np.asarray(intervals, dtype=float)
    median = np.asarray(median, dtype=float)
    y = np.asarray(y, dtype=float)
    if iv.ndim != 2 or iv.shape[1] != 2:
        raise ShapeError(f"intervals must be (n, 2), got {iv.shape}")
    if not (len(iv) == len(median) == len(y)):
        raise ShapeError(f"length mismatch: {len(iv)}, {len(median)}, {len(y)}")
    if len(y) == 0:
        raise DomainError("no observations")
    lengths = iv[:, 1] - iv[:, 0]
    infinite = bool(np.any(np.isinf(lengths)))
    with np.errstate(invalid="ignore"):
        q25, q75 = np.percentile(lengths, [25, 75], method="linear")
    iqr = q75 - q25
    if math.isnan(iqr):  # inf - inf
        iqr = math.inf
    return IntervalMetrics(
        ave_coverage=float(np.mean(covered(iv, y))),
        ave_length=math.inf if infinite else float(np.mean(lengths)),
        iqr_length=float(iqr),
        mad=float(np.mean(np.abs(median - y))),
        infinite=infinite,
    )


def quantile_mad_vs_oracle(predictor, spec, X, alpha):
    """Sum over ``l, m, u`` of the mean absolute error against the oracle
    quantiles ``q_{alpha/2}``, ``q_{1/2}``, ``q_{1-alpha/2}``."""
    from .data import OraclePredictor

    return quantile_mad(predictor.predict(X), OraclePredictor(spec, alpha).predict(X))


def quantile_mad(triples, reference):
    """Sum of the column-wise mean absolute differences of two ``(n, 3)`` arrays."""
    est = np.asarray(triples, dtype=float)
    ref = np.asarray(reference, dtype=float)
    if est.shape != ref.shape:
        raise ShapeError(f"shape mismatch {est.shape} vs {ref.shape}")
    if not np.all(np.isfinite(est)):
        return math.inf
    return float(np.abs(est - ref).mean(axis=0).sum())


@dataclass(frozen=True)
class BinnedCurve:
    centers: np.ndarray
    coverage: np.ndarray
    mass: np.ndarray
    counts: np.ndarray
    edges: np.ndarray
    window: int = 1

    @property
    def reliable(self):
        return self.counts >= MIN_RELIABLE

    @property
    def density(self):
        """Mass divided by bin width (a histogram density)."""
        return self.mass / np.diff(self.edges)

    def rows(self):
        for i in range(len(self.centers)):
            yield {
                "center": float(self.centers[i]),
                "coverage": float(self.coverage[i]),
                "mass": float(self.mass[i]),
                "count": int(self.counts[i]),
                "reliable": bool(self.reliable[i]),
            }


def _bin(values, lo, hi, bins):
    edges = np.linspace(lo, hi, bins + 1)
    idx = np.clip(np.searchsorted(edges, values, side="right") - 1, 0, bins - 1)
    return edges, idx


def _per_bin_coverage(idx, hit, bins):
    counts = np.bincount(idx, minlength=bins)
    hits = np.bincount(idx, weights=hit.astype(float), minlength=bins)
    with np.errstate(invalid="ignore", divide="ignore"):
        cov = np.where(counts > 0, hits / np.maximum(counts, 1), np.nan)
    return counts, cov


def conditional_coverage(intervals, y, index, bins=10) -> BinnedCurve:
    """Coverage within equal-width bins of ``index`` (e.g. ``beta'x``).

    Bins with fewer than 20 observations are flagged unreliable; empty bins
    have coverage ``nan``.
    """
    if bins < 2:
        raise DomainError("need at least 2 bins")
    index = np.asarray(index, dtype=float)
    hit = covered(intervals, y)
    if len(index) != len(hit):
        raise ShapeError("one index value per observation required")
    lo, hi = float(index.min()), float(index.max())
    if not hi > lo:
        raise DomainError("index range is degenerate")
    edges, idx = _bin(index, lo, hi, bins)
    counts, cov = _per_bin_coverage(idx, hit, bins)
    centers = 0.5 * (edges[:-1] + edges[1:])
    return BinnedCurve(centers, cov, counts / counts.sum(), counts, edges)


def moving_average(values, window=SMOOTH_WINDOW):
    """Centred moving average ignoring ``nan``; the window shrinks at the edges."""
    v = np.asarray(values, dtype=float)
    half = window // 2
    out = np.full_like(v, np.nan)
    for i in range(len(v)):
        seg = v[max(0, i - half): i + half + 1]
        seg = seg[~np.isnan(seg)]
        if seg.size:
            out[i] = seg.mean()
    return out


def trim_count(n, trim=0.01):
    # 1e-9 stops 0.01 * 700 = 7.000000000000001 rounding up to 8
    return math.ceil(trim * n - 1e-9)


def coverage_by_length(ref_lengths, hits, bins=100, trim=0.01, window=SMOOTH_WINDOW):
    """Per-method coverage as a function of a reference interval length.

    ``hits`` maps method name to a boolean "covered" array aligned with
    ``ref_lengths``. The ``ceil(trim * n)`` shortest and longest reference
    lengths are dropped, the rest cut into ``bins`` equal-width bins, and each
    method's per-bin coverage is smoothed with a centred moving average.
    """
    ref = np.asarray(ref_lengths, dtype=float)
    n = ref.size
    if n < 200:
        raise DomainError(f"need at least 200 observations, got {n}")
    k = trim_count(n, trim)
    order = np.argsort(ref, kind="stable")
    keep = order[k: n - k]
    kept = ref[keep]
    lo, hi = float(kept.min()), float(kept.max())
    if not hi > lo:
        raise DomainError("reference lengths are all equal after trimming")
    edges, idx = _bin(kept, lo, hi, bins)
    centers = 0.5 * (edges[:-1] + edges[1:])
    curves = {}
    for name, hit in hits.items():
        hit = np.asarray(hit, dtype=bool)
        if hit.shape != ref.shape:
            raise ShapeError(f"{name}: covered flags do not align with reference lengths")
        counts, cov = _per_bin_coverage(idx, hit[keep], bins)
        curves[name] = BinnedCurve(
            centers, moving_average(cov, window), counts / counts.sum(), counts, edges, window
        )
    return curves
