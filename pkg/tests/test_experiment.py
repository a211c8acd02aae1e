import math
from dataclasses import replace

import numpy as np
import pytest
import yaml

from pinet import cli, serialize
from pinet.data import Dataset, save_csv
from pinet.errors import ConfigError, DomainError, StageError
from pinet.experiment import (
    AccessLog,
    DataConfig,
    ExperimentConfig,
    derive_seed,
    load_config,
    prepare_data,
    run_experiment,
    run_replications,
)
from pinet.net import TrainConfig


def small_config(out, **kw):
    base = ExperimentConfig(
        data=DataConfig(d=3, signal=2, n=400, n_test=300),
        hidden=(8,),
        train=TrainConfig(epochs=15, batch_size=32),
        methods=("pav", "conf-nn", "conf-fw", "neg-ll", "oracle"),
        grid=(0.1, 0.05, 0.0),
        out=str(out),
        seed=11,
    )
    return replace(base, **kw)


def write_yaml(cfg, path):
    path.write_text(yaml.safe_dump(cfg.to_dict()), encoding="utf-8")
    return str(path)


def test_derive_seed():
    assert derive_seed(1, "data") == derive_seed(1, "data")
    assert len({derive_seed(1, "data"), derive_seed(1, "split"), derive_seed(2, "data"),
                derive_seed(1, 0), derive_seed(1, 1)}) == 5


def test_same_seed_byte_identical_outputs(tmp_path):
    a = small_config(tmp_path / "a")
    run_experiment(a)
    run_experiment(replace(a, out=str(tmp_path / "b")))
    for name in ("metrics.csv", "curves/conf-nn.csv", "model_pav.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    c = replace(a, seed=12, out=str(tmp_path / "c"))
    run_experiment(c)
    assert (tmp_path / "a/metrics.csv").read_bytes() != (tmp_path / "c/metrics.csv").read_bytes()


def test_stages_touch_only_their_rows(tmp_path):
    cfg = small_config(tmp_path)
    log = AccessLog()
    run_experiment(cfg, log=log, write=False)
    data = prepare_data(cfg, cfg.seed)
    for stage, role in (("train", "D1"), ("calibrate", "D2"), ("evaluate", "D3")):
        assert set(log.rows(stage)) == set(data.indices(role))
    assert {r for _, r, _ in log.entries} == {"D1", "D2", "D3"}


def test_report_contents(tmp_path):
    rep = run_experiment(small_config(tmp_path), write=False)
    assert set(rep.metrics) == {"pav", "conf-nn", "conf-fw", "neg-ll", "oracle"}
    assert rep.calibration["conf-nn"]["c_hat"] != "inf"
    assert rep.calibration["pav"]["tau_hat"] in (0.1, 0.05, 0.0)
    assert rep.oracle_mad["oracle"] == 0.0
    fw = rep.triples["conf-fw"]
    assert np.ptp(fw[:, 2] - fw[:, 0]) < 1e-9
    assert set(rep.curves) == {"index", "length"}
    assert len(rep.curves["length"]["conf-nn"].centers) == 100


def test_staged_cli_matches_single_run(tmp_path, capsys):
    cfg = small_config(tmp_path / "staged")
    conf = write_yaml(cfg, tmp_path / "exp.yaml")
    out = str(tmp_path / "staged")
    data = f"{out}/dataset.csv"
    assert cli.main(["simulate", "--config", conf]) == 0
    assert cli.main(["train", "--config", conf, "--data", data]) == 0
    assert cli.main(["calibrate", "--config", conf, "--data", data]) == 0
    assert cli.main(["evaluate", "--config", conf, "--data", data]) == 0
    assert cli.main(["run", "--config", conf, "--out", str(tmp_path / "one")]) == 0
    for name in ("metrics.csv", "curves/pav.csv", "curves/oracle.csv"):
        assert (tmp_path / "staged" / name).read_bytes() == (tmp_path / "one" / name).read_bytes()
    assert "conf-nn" in capsys.readouterr().out


def test_report_regenerates_csvs(tmp_path):
    run_experiment(small_config(tmp_path))
    before = (tmp_path / "metrics.csv").read_bytes()
    curve = (tmp_path / "curves/conf-fw.csv").read_bytes()
    (tmp_path / "metrics.csv").unlink()
    assert cli.main(["report", "--report", str(tmp_path / "report.json")]) == 0
    assert (tmp_path / "metrics.csv").read_bytes() == before
    assert (tmp_path / "curves/conf-fw.csv").read_bytes() == curve


def test_evaluate_with_wrong_dimension_fails_cleanly(tmp_path, capsys):
    cfg4 = small_config(tmp_path / "m", data=DataConfig(d=4, signal=2, n=400, n_test=300),
                        methods=("conf-nn",))
    run_experiment(cfg4)
    cfg3 = small_config(tmp_path / "d", methods=("conf-nn",))
    conf = write_yaml(cfg3, tmp_path / "exp3.yaml")
    assert cli.main(["simulate", "--config", conf]) == 0
    code = cli.main(["evaluate", "--config", conf, "--data", str(tmp_path / "d/dataset.csv"),
                     "--models", str(tmp_path / "m")])
    assert code == 2
    err = capsys.readouterr().err
    assert "evaluate" in err and "4" in err and "3" in err


def test_stage_error_names_stage(tmp_path):
    cfg = small_config(tmp_path, train=TrainConfig(epochs=1, batch_size=10_000))
    with pytest.raises(StageError) as info:
        run_experiment(cfg, write=False)
    assert info.value.stage == "train" and info.value.config_hash == cfg.hash


def test_config_validation(tmp_path):
    with pytest.raises(ConfigError):
        ExperimentConfig(data=DataConfig(source="csv", path="x.csv", target="y"),
                         methods=("oracle",))
    with pytest.raises(ConfigError, match="unknown"):
        ExperimentConfig.from_dict({"alpah": 0.1})
    with pytest.raises(ConfigError):
        ExperimentConfig(methods=("pav",), grid=(0.1, 0.05))
    with pytest.raises(ConfigError):
        ExperimentConfig(methods=("bogus",))
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"train": {"lr": -1.0}})
    cfg = small_config(tmp_path)
    assert load_config(write_yaml(cfg, tmp_path / "c.yaml")) == cfg
    assert cfg.hash == ExperimentConfig.from_dict(cfg.to_dict()).hash
    assert cfg.hash != replace(cfg, alpha=0.2).hash


def test_csv_source_standardizes(tmp_path):
    src = small_config(tmp_path, methods=("conf-nn",))
    data = prepare_data(src, 0)
    plain = Dataset(data.X * 100 + 5, data.y, feature_names=data.feature_names)
    save_csv(plain, tmp_path / "plain.csv")
    cfg = replace(src, data=DataConfig(source="csv", path=str(tmp_path / "plain.csv"), target="y"))
    rep = run_experiment(cfg, write=False)
    assert "index" not in rep.curves and rep.oracle_mad == {}
    assert 0.5 < rep.metrics["conf-nn"].ave_coverage <= 1.0


def test_replications(tmp_path):
    cfg = small_config(tmp_path / "a", methods=("conf-nn", "oracle"))
    a = run_replications(cfg, R=2)
    run_replications(replace(cfg, out=str(tmp_path / "b")), R=2)
    assert (tmp_path / "a/replications.csv").read_bytes() == (tmp_path / "b/replications.csv").read_bytes()
    assert a["aggregate"]["conf-nn"]["ave_coverage"]["sd"] >= 0
    da = serialize.read_json(tmp_path / "a/aggregate.json", "aggregate")
    db = serialize.read_json(tmp_path / "b/aggregate.json", "aggregate")
    assert da["aggregate"] == db["aggregate"]
    doc = serialize.read_json(tmp_path / "a/aggregate.json", "aggregate")
    assert doc["seeds"] == [derive_seed(cfg.seed, 0), derive_seed(cfg.seed, 1)]
    with pytest.raises(DomainError):
        run_replications(cfg, R=0)


def test_oracle_covers_nominal_level(tmp_path):
    cfg = small_config(tmp_path, data=DataConfig(d=10, signal=5, n=100, n_test=20_000),
                       methods=("oracle",))
    rep = run_experiment(cfg, write=False)
    assert abs(rep.metrics["oracle"].ave_coverage - 0.9) < 3 * math.sqrt(0.09 / 20_000)


@pytest.mark.slow
def test_conformal_synthetic_run(tmp_path):
    cfg = ExperimentConfig(methods=("conf-nn",), out=str(tmp_path), seed=3)
    rep = run_experiment(cfg, write=False)
    assert 0 < rep.calibration["conf-nn"]["c_hat"] < math.inf
    assert 0.85 <= rep.metrics["conf-nn"].ave_coverage <= 0.95
