"""Experiment pipeline: data -> split -> standardize -> fit -> calibrate -> evaluate.

The stages are separate functions so the CLI can run them one at a time from
serialized artifacts; :func:`run_experiment` simply chains them.

Seeds
-----
Every random stream is derived from the master seed with :func:`derive_seed`,
``SeedSequence([master, key]).generate_state(1)[0]`` where string keys are
reduced with CRC-32. Replicate ``r`` of a study uses ``derive_seed(master, r)``
as its own master seed.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from . import serialize
from .calibrate import (
    DEFAULT_GRID,
    ConformalCalibration,
    FixedWidthCalibration,
    PavSelection,
    fixed_width_conformal,
    pav_select,
    split_conformal,
)
from .data import (
    OraclePredictor,
    SyntheticSpec,
    assign_roles,
    gen_synthetic,
    load_csv,
    split,
    standardize,
)
from .errors import ConfigError, DomainError, PinetError, StageError
from .metrics import (
    BinnedCurve,
    conditional_coverage,
    coverage_by_length,
    covered,
    interval_metrics,
    quantile_mad,
)
from .net import TrainConfig, fit, fit_gaussian

METHODS = ("pav", "conf-nn", "conf-fw", "neg-ll", "oracle")
INDEX_BINS = 10
LENGTH_BINS = 100


def derive_seed(master, key):
    if isinstance(key, str):
        key = zlib.crc32(key.encode("utf-8"))
    return int(np.random.SeedSequence([int(master), int(key)]).generate_state(1)[0])


# ---------------------------------------------------------------- config


@dataclass(frozen=True)
class DataConfig:
    source: str = "synthetic"  # "synthetic" | "csv"
    # synthetic
    d: int = 10
    signal: int = 5
    n: int = 5000
    n_test: int = 5000
    train_fraction: float = 0.75
    # csv
    path: str | None = None
    target: str | None = None
    features: tuple | None = None
    fractions: tuple = (0.6, 0.2, 0.2)
    standardize: bool | None = None

    @property
    def do_standardize(self):
        if self.standardize is None:
            return self.source == "csv"
        return self.standardize


@dataclass(frozen=True)
class ExperimentConfig:
    data: DataConfig = DataConfig()
    hidden: tuple = (64,)
    train: TrainConfig = TrainConfig(batch_size=32)
    methods: tuple = ("pav", "conf-nn", "conf-fw")
    alpha: float = 0.1
    grid: tuple = DEFAULT_GRID
    warm_start: bool = False
    replications: int = 1
    out: str = "results"
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must be in (0, 1), got {self.alpha}")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ConfigError(f"unknown method(s) {sorted(unknown)}; choose from {METHODS}")
        if not self.methods:
            raise ConfigError("no methods selected")
        if "oracle" in self.methods and self.data.source != "synthetic":
            raise ConfigError("the oracle method needs the synthetic data source")
        if "pav" in self.methods:
            if 0.0 not in self.grid:
                raise ConfigError("grid must contain 0 when pav is selected")
            if any(not 0.0 <= t <= 1.0 for t in self.grid):
                raise ConfigError("grid values must lie in [0, 1]")
        if self.data.source not in ("synthetic", "csv"):
            raise ConfigError(f"unknown data source {self.data.source!r}")
        if self.data.source == "csv" and (not self.data.path or not self.data.target):
            raise ConfigError("csv source needs 'path' and 'target'")
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")

    def to_dict(self):
        d = asdict(self)
        d["grid"] = sorted(d["grid"], reverse=True)
        return _listify(d)

    @classmethod
    def from_dict(cls, doc):
        doc = dict(doc or {})
        known = {f for f in cls.__dataclass_fields__}
        extra = set(doc) - known
        if extra:
            raise ConfigError(f"unknown config key(s) {sorted(extra)}")
        try:
            data = DataConfig(**_tuplify(doc.pop("data", {})))
            train = TrainConfig(**{"batch_size": 32, **doc.pop("train", {})})
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        except DomainError as exc:
            raise ConfigError(str(exc)) from exc
        for key in ("hidden", "methods", "grid"):
            if key in doc:
                doc[key] = tuple(doc[key])
        if "grid" in doc:
            doc["grid"] = tuple(float(t) for t in doc["grid"])
        return cls(data=data, train=train, **doc)

    @property
    def hash(self):
        return hashlib.sha256(canonical(self).encode()).hexdigest()[:12]


def _listify(obj):
    if isinstance(obj, dict):
        return {k: _listify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_listify(v) for v in obj]
    return obj


def _tuplify(doc):
    return {k: tuple(v) if isinstance(v, list) else v for k, v in dict(doc).items()}


def canonical(cfg):
    return json.dumps(cfg.to_dict(), sort_keys=True, separators=(",", ":"))


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    return ExperimentConfig.from_dict(doc)


def with_overrides(cfg, seed=None, out=None, replications=None, methods=None):
    changes = {}
    if seed is not None:
        changes["seed"] = seed
    if out is not None:
        changes["out"] = str(out)
    if replications is not None:
        changes["replications"] = replications
    if methods is not None:
        changes["methods"] = tuple(methods)
    return replace(cfg, **changes) if changes else cfg


# ---------------------------------------------------------------- data hygiene


class AccessLog:
    """Records which rows each stage read: ``(stage, role, row indices)``."""

    def __init__(self):
        self.entries = []

    def rows(self, stage):
        out = [idx for s, _, idx in self.entries if s == stage]
        return np.concatenate(out) if out else np.array([], dtype=int)


def _rows(data, role, stage, log):
    idx = data.indices(role)
    if log is not None:
        log.entries.append((stage, role, idx))
    return data.X[idx], data.y[idx]


# ---------------------------------------------------------------- models


@dataclass
class MethodModel:
    """Fitted artifacts for one method: its networks and calibration."""

    method: str
    networks: dict = field(default_factory=dict)
    calibration: object = None
    oracle: dict | None = None

    def to_dict(self):
        return {
            "format_version": serialize.FORMAT_VERSION,
            "kind": "model",
            "method": self.method,
            "networks": [
                [None if t is None else t, serialize.network_to_dict(net)]
                for t, net in self.networks.items()
            ],
            "oracle": self.oracle,
            "calibration": serialize.calibration_to_dict(self.calibration),
        }

    @classmethod
    def from_dict(cls, doc):
        serialize.check_version(doc, "model")
        nets = {t: serialize.network_from_dict(n) for t, n in doc["networks"]}
        return cls(doc["method"], nets, serialize.calibration_from_dict(doc["calibration"]),
                   doc.get("oracle"))


def synthetic_spec(cfg, seed):
    return SyntheticSpec(cfg.data.d, cfg.data.signal, seed=derive_seed(seed, "data"))


def prepare_data(cfg, seed):
    """Generate or load the data and assign D1/D2/D3 roles (no standardization)."""
    dc = cfg.data
    if dc.source == "synthetic":
        spec = synthetic_spec(cfg, seed)
        data = gen_synthetic(spec, dc.n + dc.n_test)
        n1 = math.floor(dc.n * dc.train_fraction)
        return assign_roles(data, (n1, dc.n - n1, dc.n_test), derive_seed(seed, "split"))
    data = load_csv(dc.path, dc.target, list(dc.features) if dc.features else None)
    if data.roles is None:
        data = split(data, dc.fractions, derive_seed(seed, "split"))
    return data


def model_view(cfg, data):
    """The dataset as the models see it: standardized on D1 when configured."""
    return standardize(data) if cfg.data.do_standardize else data


def _pi_taus(cfg):
    taus = set()
    if {"conf-nn", "conf-fw"} & set(cfg.methods):
        taus.add(float(cfg.alpha))
    if "pav" in cfg.methods:
        taus.update(float(t) for t in cfg.grid if t != 0.0)
    return sorted(taus, reverse=True)


def train_stage(cfg, data, seed, log=None):
    """Fit every network the selected methods need, on D1 rows only."""
    data = model_view(cfg, data)
    X1, y1 = _rows(data, "D1", "train", log)
    nets = {}
    prev = None
    for tau in _pi_taus(cfg):
        tc = replace(cfg.train, seed=derive_seed(seed, f"pi-net:{tau!r}"))
        init = prev if cfg.warm_start else None
        nets[tau] = fit(X1, y1, tau, tc, hidden=cfg.hidden, init=init)
        prev = nets[tau]
    models = {}
    a = float(cfg.alpha)
    for method in cfg.methods:
        if method in ("conf-nn", "conf-fw"):
            models[method] = MethodModel(method, {a: nets[a]})
        elif method == "pav":
            models[method] = MethodModel(method, {t: nets[t] for t in cfg.grid if t != 0.0})
        elif method == "neg-ll":
            tc = replace(cfg.train, seed=derive_seed(seed, "neg-ll"))
            models[method] = MethodModel(
                method, {None: fit_gaussian(X1, y1, tc, hidden=cfg.hidden, alpha=a)}
            )
        elif method == "oracle":
            spec = synthetic_spec(cfg, seed)
            models[method] = MethodModel(
                method, oracle={"d": spec.d, "signal": spec.signal, "alpha": a}
            )
    return models


def calibrate_stage(cfg, data, models, log=None):
    """Calibrate conf-nn, conf-fw and pav on D2 rows only (in place)."""
    data = model_view(cfg, data)
    X2, y2 = _rows(data, "D2", "calibrate", log)
    for method, model in models.items():
        if method == "conf-nn":
            (net,) = model.networks.values()
            model.calibration = split_conformal(net, X2, y2, cfg.alpha)
        elif method == "conf-fw":
            (net,) = model.networks.values()
            model.calibration = fixed_width_conformal(net, X2, y2, cfg.alpha)
        elif method == "pav":
            model.calibration = pav_select(model.networks, X2, y2, cfg.alpha, cfg.grid)
    return models


def method_triples(model, X, X_raw=None):
    """Final ``(l, m, u)`` rows of a calibrated method on inputs ``X``.

    The oracle reads the unstandardized covariates ``X_raw`` when given.
    """
    cal = model.calibration
    if model.method == "oracle":
        o = model.oracle
        spec = SyntheticSpec(o["d"], o["signal"])
        return OraclePredictor(spec, o["alpha"]).predict(X if X_raw is None else X_raw)
    if model.method == "neg-ll":
        (net,) = model.networks.values()
        return net.predict(X)
    if cal is None:
        raise ConfigError(f"method {model.method!r} has not been calibrated")
    if isinstance(cal, ConformalCalibration):
        (net,) = model.networks.values()
        return cal.triples(net, X)
    if isinstance(cal, FixedWidthCalibration):
        (net,) = model.networks.values()
        m = net.predict(X)[:, 1]
        return np.stack([m - cal.half_width, m, m + cal.half_width], axis=1)
    if isinstance(cal, PavSelection):
        top = model.networks[max(model.networks)]
        return cal.network(model.networks, d=top.d, median_from=top).predict(X)
    raise ConfigError(f"unknown calibration for {model.method!r}")


# ---------------------------------------------------------------- report


@dataclass
class RunReport:
    config: dict
    config_hash: str
    seed: int
    metrics: dict
    oracle_mad: dict
    calibration: dict
    curves: dict
    wall_clock: float = 0.0
    # Test-set arrays, kept in memory only
    y_test: np.ndarray | None = None
    index_test: np.ndarray | None = None
    triples: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "format_version": serialize.FORMAT_VERSION,
            "kind": "report",
            "config": self.config,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "wall_clock": self.wall_clock,
            "metrics": {
                m: {k: (serialize.ext(v) if not isinstance(v, bool) else v)
                    for k, v in mt.as_dict().items()}
                for m, mt in self.metrics.items()
            },
            "oracle_mad": {m: serialize.ext(v) for m, v in self.oracle_mad.items()},
            "calibration": self.calibration,
            "curves": {
                kind: {m: _curve_to_dict(c) for m, c in per.items()}
                for kind, per in self.curves.items()
            },
        }


def _curve_to_dict(c: BinnedCurve):
    return {
        "edges": [serialize.ext(v) for v in c.edges],
        "centers": [serialize.ext(v) for v in c.centers],
        "coverage": [serialize.ext(v) for v in c.coverage],
        "mass": [serialize.ext(v) for v in c.mass],
        "counts": [int(v) for v in c.counts],
        "window": c.window,
    }


def evaluate_stage(cfg, data, models, seed, log=None):
    """Score each calibrated method on the unseen D3 rows."""
    data_v = model_view(cfg, data)
    X3, y3 = _rows(data_v, "D3", "evaluate", log)
    X3_raw = data.X[data.indices("D3")]
    synthetic = cfg.data.source == "synthetic"
    spec = synthetic_spec(cfg, seed) if synthetic else None
    index = spec.index(X3_raw) if synthetic else None
    ref = OraclePredictor(spec, cfg.alpha).predict(X3_raw) if synthetic else None

    triples, metrics, oracle_mad, calibration = {}, {}, {}, {}
    for method in cfg.methods:
        model = models[method]
        t = method_triples(model, X3, X3_raw)
        triples[method] = t
        metrics[method] = interval_metrics(t[:, [0, 2]], t[:, 1], y3)
        calibration[method] = serialize.calibration_to_dict(model.calibration)
        if synthetic:
            oracle_mad[method] = quantile_mad(t, ref)

    curves = {}
    if synthetic:
        curves["index"] = {
            m: conditional_coverage(t[:, [0, 2]], y3, index, INDEX_BINS)
            for m, t in triples.items()
        }
    if "conf-nn" in triples and len(y3) >= 200:
        ref_len = triples["conf-nn"][:, 2] - triples["conf-nn"][:, 0]
        if np.all(np.isfinite(ref_len)) and np.ptp(ref_len) > 0:
            hits = {m: covered(t[:, [0, 2]], y3) for m, t in triples.items()}
            curves["length"] = coverage_by_length(ref_len, hits, bins=LENGTH_BINS)

    return RunReport(
        config=cfg.to_dict(), config_hash=cfg.hash, seed=seed, metrics=metrics,
        oracle_mad=oracle_mad, calibration=calibration, curves=curves,
        y_test=y3, index_test=index, triples=triples,
    )


def _stage(name, cfg, fn, *args, replicate=None, **kwargs):
    try:
        return fn(*args, **kwargs)
    except PinetError as exc:
        raise StageError(name, cfg.hash, exc, replicate) from exc


def run_experiment(cfg, seed=None, log=None, write=True, replicate=None):
    """Run the full pipeline for every configured method and write the outputs."""
    seed = cfg.seed if seed is None else seed
    start = time.perf_counter()
    data = _stage("data", cfg, prepare_data, cfg, seed, replicate=replicate)
    models = _stage("train", cfg, train_stage, cfg, data, seed, log, replicate=replicate)
    _stage("calibrate", cfg, calibrate_stage, cfg, data, models, log, replicate=replicate)
    report = _stage("evaluate", cfg, evaluate_stage, cfg, data, models, seed, log,
                    replicate=replicate)
    report.wall_clock = time.perf_counter() - start
    if write:
        write_outputs(report, models, cfg.out)
    return report


# ---------------------------------------------------------------- outputs

METRIC_FIELDS = ("ave_coverage", "ave_length", "iqr_length", "mad", "quantile_mad", "infinite")


def metrics_csv(doc):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("method", *METRIC_FIELDS))
    for method in doc["config"]["methods"]:
        mt = doc["metrics"][method]
        qm = doc["oracle_mad"].get(method, "")
        w.writerow((method, *[_cell(mt[k]) for k in METRIC_FIELDS[:4]], _cell(qm),
                    str(mt["infinite"]).lower()))
    return buf.getvalue()


def curve_csv(doc, method):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("kind", "bin", "lo", "hi", "center", "coverage", "mass", "count", "window"))
    for kind in sorted(doc["curves"]):
        c = doc["curves"][kind].get(method)
        if c is None:
            continue
        for i in range(len(c["centers"])):
            w.writerow((kind, i, _cell(c["edges"][i]), _cell(c["edges"][i + 1]),
                        _cell(c["centers"][i]), _cell(c["coverage"][i]), _cell(c["mass"][i]),
                        c["counts"][i], c["window"]))
    return buf.getvalue()


def _cell(v):
    if v == "" or isinstance(v, str):
        return v
    return repr(float(v))


def write_csvs(doc, out):
    """Write ``metrics.csv`` and ``curves/<method>.csv`` from a report document."""
    out = Path(out)
    (out / "curves").mkdir(parents=True, exist_ok=True)
    (out / "metrics.csv").write_text(metrics_csv(doc), encoding="utf-8")
    for method in doc["config"]["methods"]:
        (out / "curves" / f"{method}.csv").write_text(curve_csv(doc, method), encoding="utf-8")


def write_models(models, out):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    for method, model in models.items():
        serialize.write_json(model.to_dict(), out / f"model_{method}.json")


def read_models(directory, methods):
    models = {}
    for method in methods:
        doc = serialize.read_json(Path(directory) / f"model_{method}.json", kind="model")
        models[method] = MethodModel.from_dict(doc)
    return models


def write_outputs(report, models, out):
    doc = report.to_dict()
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    write_csvs(doc, out)
    serialize.write_json(doc, out / "report.json")
    write_models(models, out)


# ---------------------------------------------------------------- replications


def _one_replicate(args):
    cfg, r = args
    seed = derive_seed(cfg.seed, r)
    out = Path(cfg.out) / f"rep{r:03d}"
    rep = run_experiment(replace(cfg, out=str(out)), seed=seed, replicate=r)
    return r, seed, {m: mt.as_dict() for m, mt in rep.metrics.items()}, dict(rep.oracle_mad)


def run_replications(cfg, R=None, workers=1):
    """``R`` independent runs with seeds ``derive_seed(cfg.seed, r)``.

    Returns per-replicate metrics plus the mean and standard deviation of each
    metric per method, and writes ``replications.csv`` / ``aggregate.json``.
    """
    R = cfg.replications if R is None else R
    if R < 1:
        raise DomainError("need at least one replication")
    jobs = [(cfg, r) for r in range(R)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_one_replicate, jobs))
    else:
        results = [_one_replicate(j) for j in jobs]
    results.sort(key=lambda t: t[0])

    keys = ("ave_coverage", "ave_length", "iqr_length", "mad")

    def summary(vals):
        # sd of a column containing inf is nan
        with np.errstate(invalid="ignore"):
            return {"mean": float(vals.mean()), "sd": float(vals.std(ddof=1)) if R > 1 else 0.0}

    aggregate = {}
    for method in cfg.methods:
        agg = {}
        for k in keys:
            vals = np.array([res[2][method][k] for res in results], dtype=float)
            agg[k] = summary(vals)
        if results[0][3]:
            vals = np.array([res[3][method] for res in results], dtype=float)
            agg["quantile_mad"] = summary(vals)
        aggregate[method] = agg

    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("replicate", "seed", "method", *keys))
    for r, seed, mets, _ in results:
        for method in cfg.methods:
            w.writerow((r, seed, method, *[_cell(serialize.ext(mets[method][k])) for k in keys]))
    (out / "replications.csv").write_text(buf.getvalue(), encoding="utf-8")
    doc = {
        "format_version": serialize.FORMAT_VERSION,
        "kind": "aggregate",
        "config": cfg.to_dict(),
        "config_hash": cfg.hash,
        "replications": R,
        "seeds": [seed for _, seed, _, _ in results],
        "aggregate": {m: {k: {s: serialize.ext(v) for s, v in d.items()} for k, d in a.items()}
                      for m, a in aggregate.items()},
    }
    serialize.write_json(doc, out / "aggregate.json")
    return {"replicates": results, "aggregate": aggregate}
