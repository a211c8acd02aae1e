"""Synthetic heteroskedastic benchmark, CSV ingestion, splitting, standardization.

Random streams
--------------
All randomness goes through ``numpy.random.Generator`` (PCG64) seeded from
``numpy.random.SeedSequence``. Normal draws use the inverse CDF
(``scipy.special.ndtri`` applied to ``Generator.random``), so a given seed
produces the same dataset as long as the uniform stream is unchanged.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.special import ndtri

from .errors import DataError, DomainError, ShapeError

ROLES = ("D1", "D2", "D3")


def link(t):
    """``f(t) = 2 sin(pi t) + pi t``."""
    return 2.0 * np.sin(np.pi * t) + np.pi * t


def normal_draws(rng, size):
    """Standard normal sample by inverse CDF."""
    u = rng.random(size)
    # random() is in [0, 1); 0 maps to -inf
    while np.any(u == 0.0):
        u[u == 0.0] = rng.random(int(np.sum(u == 0.0)))
    return ndtri(u)


@dataclass(frozen=True)
class SyntheticSpec:
    """``X ~ U[0,1]^d``, ``Y = f(b'X) + e``, ``e ~ N(0, 1 + (b'X)^2)``.

    ``beta`` has ``signal`` leading ones and zeros elsewhere.
    """

    d: int = 100
    signal: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.d < 1:
            raise DomainError("d must be >= 1")
        if not 0 <= self.signal <= self.d:
            raise DomainError(f"signal count must lie in [0, d], got {self.signal}")

    @property
    def beta(self):
        b = np.zeros(self.d)
        b[: self.signal] = 1.0
        return b

    def index(self, X):
        """Single index ``beta'x`` for each row."""
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.d:
            raise ShapeError(f"expected {self.d} features, got shape {X.shape}")
        return X[..., : self.signal].sum(axis=-1)


@dataclass(frozen=True)
class Standardization:
    mean: np.ndarray
    sd: np.ndarray

    def apply(self, X):
        return (np.asarray(X, dtype=float) - self.mean) / self.sd


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    roles: np.ndarray | None = None
    feature_names: tuple = ()
    target_name: str = "y"
    stats: Standardization | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.X.ndim != 2 or self.y.shape != (self.X.shape[0],):
            raise ShapeError(f"X must be (n, d) and y (n,), got {self.X.shape} and {self.y.shape}")
        if not self.feature_names:
            object.__setattr__(
                self, "feature_names", tuple(f"x{j + 1}" for j in range(self.X.shape[1]))
            )
        if self.roles is not None and self.roles.shape != self.y.shape:
            raise ShapeError("one role label per row required")

    @property
    def n(self):
        return len(self.y)

    @property
    def d(self):
        return self.X.shape[1]

    def indices(self, role):
        if self.roles is None:
            raise DomainError("dataset has no role labels; call split() first")
        if role not in ROLES:
            raise DomainError(f"unknown role {role!r}")
        return np.flatnonzero(self.roles == role)

    def subset(self, role):
        """``(X, y)`` rows carrying ``role``."""
        idx = self.indices(role)
        return self.X[idx], self.y[idx]


def gen_synthetic(spec: SyntheticSpec, n: int) -> Dataset:
    if n < 1:
        raise DomainError("n must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed))
    X = rng.random((n, spec.d))
    t = spec.index(X)
    y = link(t) + np.sqrt(1.0 + t**2) * normal_draws(rng, n)
    return Dataset(X, y, meta={"synthetic": {"d": spec.d, "signal": spec.signal, "seed": spec.seed}})


@dataclass(frozen=True)
class OracleTriple:
    q_lo: float
    q_med: float
    q_hi: float


def oracle_quantiles(x, spec: SyntheticSpec, alpha: float) -> OracleTriple:
    """Exact conditional quantiles at levels ``alpha/2``, ``1/2``, ``1 - alpha/2``."""
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must be in (0, 1), got {alpha}")
    lo, med, hi = OraclePredictor(spec, alpha).predict(np.asarray(x, dtype=float)[None, :])[0]
    return OracleTriple(float(lo), float(med), float(hi))


class OraclePredictor:
    """Predictor interface (``predict(X) -> (n, 3)``) returning oracle triples."""

    def __init__(self, spec: SyntheticSpec, alpha: float):
        if not 0.0 < alpha < 1.0:
            raise DomainError(f"alpha must be in (0, 1), got {alpha}")
        self.spec = spec
        self.alpha = alpha
        self.z = float(ndtri(1.0 - alpha / 2.0))

    @property
    def d(self):
        return self.spec.d

    def predict(self, X):
        t = self.spec.index(np.atleast_2d(X))
        med = link(t)
        half = self.z * np.sqrt(1.0 + t**2)
        return np.stack([med - half, med, med + half], axis=1)


def load_csv(path, target, features=None) -> Dataset:
    """Read a headed, comma-separated UTF-8 file into a Dataset.

    ``features=None`` takes every column except the target (and a ``role``
    column, which is honoured when present). Rows with an empty or
    non-numeric field raise :class:`DataError` naming the 1-based data row.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = list(reader)
    header = [h.strip() for h in header]
    if features is None:
        features = [h for h in header if h not in (target, "role")]
    missing = [c for c in [target, *features] if c not in header]
    if missing:
        raise DataError(f"{path}: missing column(s) {missing}")
    if not rows:
        raise DataError(f"{path}: no data rows")
    cols = [header.index(c) for c in features]
    tcol = header.index(target)
    rcol = header.index("role") if "role" in header else None

    X = np.empty((len(rows), len(cols)))
    y = np.empty(len(rows))
    roles = [] if rcol is not None else None
    bad = []
    for i, row in enumerate(rows, start=1):
        try:
            if len(row) != len(header):
                raise ValueError("wrong field count")
            X[i - 1] = [float(row[c]) for c in cols]
            y[i - 1] = float(row[tcol])
            if not (np.all(np.isfinite(X[i - 1])) and math.isfinite(y[i - 1])):
                raise ValueError("non-finite value")
        except ValueError as exc:
            bad.append(f"row {i}: {exc}")
            continue
        if roles is not None:
            role = row[rcol].strip()
            if role not in ROLES and role != "":
                bad.append(f"row {i}: unknown role {role!r}")
            roles.append(role)
    if bad:
        raise DataError(f"{path}: " + "; ".join(bad))
    if roles is not None and any(r == "" for r in roles):
        if not all(r == "" for r in roles):
            raise DataError(f"{path}: role column is partially empty")
        roles = None
    return Dataset(
        X, y,
        roles=None if roles is None else np.array(roles),
        feature_names=tuple(features),
        target_name=target,
    )


def save_csv(data: Dataset, path) -> None:
    """Write features, target and (if assigned) roles; floats use ``repr``."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        header = [*data.feature_names, data.target_name]
        if data.roles is not None:
            header.append("role")
        w.writerow(header)
        for i in range(data.n):
            row = [repr(float(v)) for v in data.X[i]] + [repr(float(data.y[i]))]
            if data.roles is not None:
                row.append(str(data.roles[i]))
            w.writerow(row)


def assign_roles(data: Dataset, sizes, seed) -> Dataset:
    """Randomly assign exactly ``sizes = (n1, n2, n3)`` rows to D1, D2, D3."""
    sizes = tuple(int(s) for s in sizes)
    if len(sizes) != 3 or any(s < 0 for s in sizes) or sum(sizes) != data.n:
        raise DomainError(f"role sizes {sizes} do not partition {data.n} rows")
    perm = np.random.default_rng(np.random.SeedSequence(seed)).permutation(data.n)
    roles = np.empty(data.n, dtype="<U2")
    start = 0
    for role, size in zip(ROLES, sizes):
        roles[perm[start:start + size]] = role
        start += size
    return replace(data, roles=roles, stats=None)


def split(data: Dataset, fractions=(0.5, 0.25, 0.25), seed=0) -> Dataset:
    """Uniform random partition with sizes ``floor(n f1)``, ``floor(n f2)``, rest."""
    if data.n < 3:
        raise DomainError("need at least 3 rows to split")
    f = tuple(float(v) for v in fractions)
    if len(f) != 3 or any(v <= 0 for v in f) or abs(sum(f) - 1.0) > 1e-9:
        raise DomainError(f"fractions must be 3 positive numbers summing to 1, got {fractions}")
    n1 = math.floor(data.n * f[0])
    n2 = math.floor(data.n * f[1])
    return assign_roles(data, (n1, n2, data.n - n1 - n2), seed)


def standardize(data: Dataset) -> Dataset:
    """Centre and scale every feature with mean/sd computed on D1 rows only."""
    X1, _ = data.subset("D1")
    if len(X1) == 0:
        raise DomainError("D1 is empty")
    mean = X1.mean(axis=0)
    sd = X1.std(axis=0)
    zero = [data.feature_names[j] for j in np.flatnonzero(sd == 0)]
    if zero:
        raise DomainError(f"zero variance on D1 for feature(s) {zero}")
    stats = Standardization(mean, sd)
    return replace(data, X=stats.apply(data.X), stats=stats)
