"""Finite-sample calibration of PI-networks on a held-out set.

* :func:`split_conformal` -- ratio conformity scores, expansion constant ``c_hat``.
* :func:`fixed_width_conformal` -- absolute-residual scores, half-width ``h_hat``.
* :func:`pav_select` / :func:`conservative_pav` -- choose the largest grid ``tau``
  whose network covers at least ``1 - alpha`` of the held-out points.

Every predictor argument only needs ``predict(X) -> (n, 3)`` array of
``(l, m, u)`` rows. Networks must have been fit without the calibration rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DomainError, ShapeError
from .intervals import PiInterval
from .net import TrivialNetwork

DEFAULT_GRID = (0.1, 0.09, 0.08, 0.07, 0.06, 0.05, 0.04, 0.03, 0.02, 0.01, 0.0)


def _check_alpha(alpha):
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must be in (0, 1), got {alpha}")
    return alpha


def _xy(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(y) == 0:
        raise DomainError("calibration set is empty")
    if len(X) != len(y):
        raise ShapeError(f"{len(X)} inputs but {len(y)} responses")
    return X, y


def conformal_rank(n2, alpha):
    """``k = ceil((1 - alpha)(n2 + 1))``."""
    # 1e-9 absorbs float noise such as (1 - 0.1) * 100 = 90.00000000000001
    return math.ceil((1.0 - alpha) * (n2 + 1) - 1e-9)


def order_statistic(scores, alpha):
    """``(k-th smallest score, k)``; the value is ``+inf`` when ``k > n``."""
    alpha = _check_alpha(alpha)
    scores = np.asarray(scores, dtype=float)
    if scores.size == 0:
        raise DomainError("no scores")
    k = conformal_rank(scores.size, alpha)
    if k > scores.size:
        return math.inf, k
    return float(np.sort(scores, kind="stable")[k - 1]), k


def conformity_score(triple, y):
    """How far the triple must be stretched about its median to reach ``y``.

    ``max((m - y)/(m - l), (y - m)/(u - m))`` with 0/0 read as 0 and
    ``positive/0`` as ``+inf``. Works on a single triple or ``(n, 3)`` rows.
    """
    t = np.asarray(triple, dtype=float)
    y = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(y)):
        raise DomainError("responses must be finite")
    l, m, u = t[..., 0], t[..., 1], t[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        left = _ratio(m - y, m - l)
        right = _ratio(y - m, u - m)
    out = np.maximum(left, right)
    return float(out) if out.ndim == 0 else out


def _ratio(num, den):
    r = num / den
    r = np.where(den == 0, np.where(num > 0, np.inf, np.where(num < 0, -np.inf, 0.0)), r)
    # infinite width (trivial network) gives 0 for any finite distance
    return np.where(np.isinf(den), 0.0, r)


def expand_interval(triple, c_hat):
    """``[m - c(m - l), m + c(u - m)]``; ``c_hat = inf`` gives the whole line.

    Returns a :class:`PiInterval` for a single triple, else an ``(n, 2)`` array.
    """
    t = np.asarray(triple, dtype=float)
    c_hat = float(c_hat)
    if not c_hat >= 0:
        raise DomainError(f"expansion constant must be non-negative, got {c_hat}")
    l, m, u = t[..., 0], t[..., 1], t[..., 2]
    if math.isinf(c_hat):
        lo = np.full_like(m, -np.inf)
        hi = np.full_like(m, np.inf)
    elif c_hat == 1.0:
        # m - (m - l) need not round back to l
        lo, hi = l, u
    else:
        wl, wu = m - l, u - m
        with np.errstate(invalid="ignore"):
            lo = np.where(np.isinf(wl), -np.inf, m - c_hat * wl)
            hi = np.where(np.isinf(wu), np.inf, m + c_hat * wu)
    if t.ndim == 1:
        return PiInterval(float(lo), float(hi))
    return np.stack([lo, hi], axis=-1)


@dataclass(frozen=True)
class ConformalCalibration:
    c_hat: float
    alpha: float
    n2: int
    k: int

    def interval(self, triples):
        return expand_interval(triples, self.c_hat)

    def triples(self, predictor, X):
        """Scaled triples ``(l^c, m, u^c)``."""
        t = predictor.predict(X)
        lohi = expand_interval(t, self.c_hat)
        return np.stack([lohi[:, 0], t[:, 1], lohi[:, 1]], axis=1)


def split_conformal(predictor, X, y, alpha) -> ConformalCalibration:
    alpha = _check_alpha(alpha)
    X, y = _xy(X, y)
    scores = conformity_score(predictor.predict(X), y)
    c_hat, k = order_statistic(scores, alpha)
    return ConformalCalibration(c_hat, alpha, len(y), k)


@dataclass(frozen=True)
class FixedWidthCalibration:
    half_width: float
    alpha: float
    n2: int
    k: int

    def interval(self, median):
        m = np.asarray(median, dtype=float)
        return np.stack([m - self.half_width, m + self.half_width], axis=-1)


def _median_of(predictor, X):
    if hasattr(predictor, "predict"):
        return predictor.predict(X)[:, 1]
    return np.asarray(predictor(X), dtype=float)


def fixed_width_conformal(predictor, X, y, alpha) -> FixedWidthCalibration:
    """Split conformal on ``|y - m(x)|``; ``predictor`` is a network or a callable ``m``."""
    alpha = _check_alpha(alpha)
    X, y = _xy(X, y)
    resid = np.abs(y - _median_of(predictor, X))
    h, k = order_statistic(resid, alpha)
    return FixedWidthCalibration(h, alpha, len(y), k)


def coverage_of(triples, y):
    """Fraction of ``y`` inside the closed ``[l, u]`` of each row."""
    t = np.asarray(triples, dtype=float)
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        raise DomainError("coverage of an empty set")
    return float(np.mean((t[:, 0] <= y) & (y <= t[:, -1])))


def empirical_coverage(predictor, X, y):
    X, y = _xy(X, y)
    return coverage_of(predictor.predict(X), y)


@dataclass(frozen=True)
class PavSelection:
    tau_hat: float
    alpha: float
    n2: int
    grid: tuple
    coverage: dict = field(default_factory=dict)
    guarantee: bool | None = None
    required_n2: int | None = None

    def network(self, nets, d=None, median_from=None):
        """The selected network, or the trivial one when ``tau_hat = 0``."""
        if self.tau_hat == 0.0:
            if d is None:
                d = next(iter(nets.values())).d
            return TrivialNetwork(d, median_from=median_from)
        return nets[self.tau_hat]


def _check_grid(grid, nets):
    g = tuple(sorted({float(t) for t in grid}, reverse=True))
    if 0.0 not in g:
        raise ConfigError("grid must contain 0")
    if any(not 0.0 <= t <= 1.0 for t in g):
        raise ConfigError("grid values must lie in [0, 1]")
    missing = [t for t in g if t != 0.0 and t not in nets]
    if missing:
        raise ConfigError(f"no network for grid value(s) {missing}")
    return g


def pav_select(nets, X, y, alpha, grid=DEFAULT_GRID) -> PavSelection:
    """Largest ``tau`` in ``grid`` whose network covers ``>= 1 - alpha`` of ``(X, y)``.

    ``nets`` maps each nonzero grid value to its network. The ``tau = 0``
    network covers everything, so a value is always selected.
    """
    alpha = _check_alpha(alpha)
    X, y = _xy(X, y)
    g = _check_grid(grid, nets)
    cov = {0.0: 1.0}
    tau_hat = 0.0
    for t in g:
        if t == 0.0:
            continue
        cov[t] = empirical_coverage(nets[t], X, y)
    for t in g:
        # tolerance keeps e.g. 7/10 >= 1 - 0.3 true despite rounding
        if cov[t] >= 1.0 - alpha - 1e-12:
            tau_hat = t
            break
    return PavSelection(tau_hat, alpha, len(y), g, cov)


def pav_sample_bound(eps, delta, K):
    """Smallest ``n2`` with ``K exp(-2 eps^2 n2) <= delta``."""
    if not eps > 0 or not delta > 0:
        raise DomainError("eps and delta must be positive")
    if K < 1:
        raise DomainError("K must be >= 1")
    return math.ceil(-math.log(delta / K) / (2.0 * eps**2))


def conservative_sample_bound(alpha, eps, K):
    """Smallest ``n2`` for which the level ``alpha - eps`` selection has
    average coverage ``>= 1 - alpha``:
    ``n2 >= -2 log(eps / (2K(1 - alpha + eps/2))) / eps^2``.
    """
    alpha = _check_alpha(alpha)
    if not eps > 0 or alpha - eps <= 0:
        raise DomainError(f"need 0 < eps < alpha, got eps={eps}, alpha={alpha}")
    if K < 1:
        raise DomainError("K must be >= 1")
    return math.ceil(-2.0 * math.log(eps / (2.0 * K * (1.0 - alpha + eps / 2.0))) / eps**2)


def conservative_pav(nets, X, y, alpha, eps, grid=DEFAULT_GRID) -> PavSelection:
    """PAV selection at miscoverage ``alpha - eps``, flagged with whether the
    calibration set is large enough for the average-coverage guarantee."""
    alpha = _check_alpha(alpha)
    if not eps > 0 or alpha - eps <= 0:
        raise DomainError(f"need 0 < eps < alpha, got eps={eps}, alpha={alpha}")
    sel = pav_select(nets, X, y, alpha - eps, grid)
    K = len(sel.grid) - 1
    need = conservative_sample_bound(alpha, eps, K)
    return PavSelection(
        sel.tau_hat, sel.alpha, sel.n2, sel.grid, sel.coverage,
        guarantee=sel.n2 >= need, required_n2=need,
    )

