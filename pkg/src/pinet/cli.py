"""Command-line driver.

Stages read and write the same artifacts, so they can run one at a time::

    pinet simulate  --config exp.yaml --out run/            # dataset.csv
    pinet train     --config exp.yaml --data run/dataset.csv --out run/
    pinet calibrate --config exp.yaml --data run/dataset.csv --models run/ --out run/
    pinet evaluate  --config exp.yaml --data run/dataset.csv --models run/ --out run/
    pinet report    --report run/report.json --out run/

or all at once with ``pinet run --config exp.yaml [--replications R]``.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import serialize
from .data import load_csv, save_csv
from .errors import PinetError, StageError
from .experiment import (
    ExperimentConfig,
    calibrate_stage,
    evaluate_stage,
    load_config,
    prepare_data,
    read_models,
    run_experiment,
    run_replications,
    train_stage,
    with_overrides,
    write_csvs,
    write_models,
)


def _methods(text):
    return tuple(m.strip() for m in text.split(",") if m.strip())


def _config(args):
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    return with_overrides(
        cfg,
        seed=getattr(args, "seed", None),
        out=getattr(args, "out", None),
        replications=getattr(args, "replications", None),
        methods=getattr(args, "methods", None),
    )


def _load_dataset(cfg, path):
    if cfg.data.source == "synthetic":
        return load_csv(path, "y")
    feats = list(cfg.data.features) if cfg.data.features else None
    return load_csv(path, cfg.data.target, feats)


def _staged(name, cfg, fn, *a):
    try:
        return fn(*a)
    except PinetError as exc:
        if isinstance(exc, StageError):
            raise
        raise StageError(name, cfg.hash, exc) from exc


def cmd_simulate(args):
    cfg = _config(args)
    data = _staged("data", cfg, prepare_data, cfg, cfg.seed)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    save_csv(data, out / "dataset.csv")
    print(f"wrote {out / 'dataset.csv'} ({data.n} rows)")


def cmd_train(args):
    cfg = _config(args)
    data = _load_dataset(cfg, args.data)
    models = _staged("train", cfg, train_stage, cfg, data, cfg.seed)
    write_models(models, cfg.out)
    print(f"trained {', '.join(models)} -> {cfg.out}")


def cmd_calibrate(args):
    cfg = _config(args)
    data = _load_dataset(cfg, args.data)
    models = read_models(args.models or cfg.out, cfg.methods)
    _staged("calibrate", cfg, calibrate_stage, cfg, data, models)
    write_models(models, cfg.out)
    for method, model in models.items():
        cal = serialize.calibration_to_dict(model.calibration)
        if cal:
            shown = {k: v for k, v in cal.items() if k in ("c_hat", "half_width", "tau_hat")}
            print(f"{method}: {shown}")


def cmd_evaluate(args):
    cfg = _config(args)
    data = _load_dataset(cfg, args.data)
    models = read_models(args.models or cfg.out, cfg.methods)
    report = _staged("evaluate", cfg, evaluate_stage, cfg, data, models, cfg.seed)
    doc = report.to_dict()
    write_csvs(doc, cfg.out)
    serialize.write_json(doc, Path(cfg.out) / "report.json")
    _print_metrics(report)


def cmd_report(args):
    doc = serialize.read_json(args.report, kind="report")
    out = args.out or Path(args.report).parent
    write_csvs(doc, out)
    print(f"regenerated CSVs in {out}")


def cmd_run(args):
    cfg = _config(args)
    if cfg.replications > 1:
        res = run_replications(cfg, workers=args.workers)
        for method, agg in res["aggregate"].items():
            cov = agg["ave_coverage"]
            print(f"{method:8s} coverage {cov['mean']:.4f} +/- {cov['sd']:.4f}")
        return
    report = run_experiment(cfg)
    _print_metrics(report)


def _print_metrics(report):
    for method, mt in report.metrics.items():
        print(f"{method:8s} coverage {mt.ave_coverage:.4f}  length {mt.ave_length:.4f}  "
              f"iqr {mt.iqr_length:.4f}  mad {mt.mad:.4f}")


def build_parser():
    p = argparse.ArgumentParser(prog="pinet", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out=True):
        sp.add_argument("--config", help="YAML experiment config")
        sp.add_argument("--seed", type=int, help="master seed (overrides config)")
        sp.add_argument("--methods", type=_methods,
                        help="comma-separated subset of pav,conf-nn,conf-fw,neg-ll,oracle")
        if out:
            sp.add_argument("--out", help="output directory (overrides config)")

    sp = sub.add_parser("simulate", help="generate/load data and assign D1/D2/D3 roles")
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("train", help="fit networks on D1")
    common(sp)
    sp.add_argument("--data", required=True, help="dataset CSV with a role column")
    sp.set_defaults(func=cmd_train)

    for name, func, text in (("calibrate", cmd_calibrate, "calibrate on D2"),
                             ("evaluate", cmd_evaluate, "score calibrated methods on D3")):
        sp = sub.add_parser(name, help=text)
        common(sp)
        sp.add_argument("--data", required=True, help="dataset CSV with a role column")
        sp.add_argument("--models", help="directory holding model_<method>.json")
        sp.set_defaults(func=func)

    sp = sub.add_parser("report", help="rebuild CSV outputs from report.json")
    sp.add_argument("--report", required=True)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_report)

    sp = sub.add_parser("run", help="full pipeline, optionally replicated")
    common(sp)
    sp.add_argument("--replications", type=int)
    sp.add_argument("--workers", type=int, default=1)
    sp.set_defaults(func=cmd_run)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except PinetError as exc:
        print(f"pinet {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
