import csv
import json

import numpy as np
import pytest

from homecare_ensemble import cli, runner
from homecare_ensemble.learners import LinearModel, save_model
from homecare_ensemble.protocol import MonthlyResult, ProtocolError
from homecare_ensemble.runner import (
    ConfigError, ExperimentConfig, ExperimentError, inspect_weights, read_averages,
    read_monthly, report, run_experiment,
)
from homecare_ensemble.synthgen import SyntheticConfig, write_cohort

TABLE_METHODS = ["RF_last", "RF_all", "LR_last", "LR_all"] + [
    f"{a}+{b}/{c}" for a in ("RF", "LR") for b in ("LR", "RF")
    for c in ("from_1", "from_2", "from_1_and_2")]


@pytest.fixture(scope="module")
def cohort_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "cohort.csv"
    cfg = SyntheticConfig.from_dict({"n_citizens": 250, "start_month": "2013-04",
                                     "end_month": "2014-06", "seed": 11})
    write_cohort(cfg, path)
    return path


def _config(cohort_csv, out, **kw):
    data = {"input_csv": str(cohort_csv), "output_dir": str(out),
            "lr_lambdas": [0.01, 1.0, 100.0],
            "rf_grid": {"n_trees": [100], "feature_fraction": [0.5], "min_samples": [16]},
            **kw}
    return ExperimentConfig.from_dict(data)


def _read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_config_rejects_unknown_and_bad_values(cohort_csv):
    with pytest.raises(ConfigError, match="colour"):
        ExperimentConfig.from_dict({"input_csv": "x", "colour": "red"})
    with pytest.raises(ConfigError, match="schema_version"):
        ExperimentConfig.from_dict({"input_csv": "x", "schema_version": 9})
    with pytest.raises(ConfigError, match="unknown method"):
        ExperimentConfig.from_dict({"input_csv": "x", "methods": ["SVM"]})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"input_csv": "x", "info_levels": ["IL5"]})
    with pytest.raises(ConfigError, match="lr_lambdas"):
        ExperimentConfig.from_dict({"input_csv": "x", "lr_lambdas": [1e5]})
    with pytest.raises(ConfigError, match="min_samples"):
        ExperimentConfig.from_dict({"input_csv": "x", "rf_grid": {
            "n_trees": [100], "feature_fraction": [0.5], "min_samples": [3]}})
    with pytest.raises(ConfigError, match="test_span"):
        ExperimentConfig.from_dict({"input_csv": "x", "test_span": {"first": "2014/01"}})
    with pytest.raises(ConfigError, match="input_csv"):
        ExperimentConfig.from_dict({})


def test_single_method_report(cohort_csv, tmp_path):
    rep = run_experiment(_config(cohort_csv, tmp_path, methods=["baseline_3m"],
                                 info_levels=["IL1"]))
    rows = _read_rows(tmp_path / "averages.csv")
    assert [r["method"] for r in rows] == ["baseline_3m"]
    assert list(rep.averages) == [("baseline_3m", "IL1")]


def test_outputs_consistent(cohort_csv, tmp_path):
    cfg = _config(cohort_csv, tmp_path, methods=["baseline_3m", "baseline_12m", "LR_all",
                                                 "LR+LR/from_1_and_2"],
                  info_levels=["IL1", "IL4"])
    rep = run_experiment(cfg)
    monthly = read_monthly(tmp_path / "monthly.csv")
    # every requested cell exactly once, in config order
    assert list(monthly) == [(m, l) for l in cfg.info_levels for m in cfg.methods]
    rows = _read_rows(tmp_path / "monthly.csv")
    assert list(rows[0]) == ["method", "info_level", "year", "month", "auc", "n_test", "n_pos"]
    # averages are the mean of the defined monthly values
    averages = read_averages(tmp_path / "averages.csv")
    for key, results in monthly.items():
        values = [r.auc for r in results if r.defined]
        assert averages[key] == pytest.approx(np.mean(values), abs=1e-15)
        assert averages[key] == rep.averages[key]
    before = (tmp_path / "averages.csv").read_bytes()
    report(tmp_path)
    assert (tmp_path / "averages.csv").read_bytes() == before
    fig1 = _read_rows(tmp_path / "figures" / "fig1_series.csv")
    assert list(fig1[0])[2:] == cfg.methods
    assert len(fig1) == len(monthly[("LR_all", "IL4")])
    fig2 = _read_rows(tmp_path / "figures" / "fig2_series.csv")
    assert [c.split(":")[0] for c in list(fig2[0])[2:]] == ["IL1", "IL4"]
    meta = json.loads((tmp_path / "meta.json").read_text())
    assert meta["config"] == cfg.to_dict() and meta["seed"] == cfg.seed
    assert {"numpy", "pandas", "python"} <= set(meta["versions"])
    models = tmp_path / "models"
    assert (models / "schema.json").exists() and (models / "LR_all__IL4.json").exists()
    manifest = json.loads((models / "LR-LR_from_1_and_2__IL4" / "manifest.json").read_text())
    assert manifest["level1"] == "level1.json"
    assert {p["variant"] for p in manifest["pool"]} == {"last_month", "all_previous"}

    # the config echo reruns the experiment identically
    again = tmp_path / "again"
    echo = dict(meta["config"], output_dir=str(again))
    run_experiment(ExperimentConfig.from_dict(echo))
    assert (again / "monthly.csv").read_bytes() == (tmp_path / "monthly.csv").read_bytes()


def test_table_methods_at_il4(cohort_csv, tmp_path):
    cfg = _config(cohort_csv, tmp_path, methods=TABLE_METHODS, info_levels=["IL4"],
                  test_span={"first": "2013-10", "last": "2013-11"})
    run_experiment(cfg)
    rows = _read_rows(tmp_path / "averages.csv")
    assert [r["method"] for r in rows] == TABLE_METHODS
    assert all(0.0 <= float(r["IL4"]) <= 1.0 for r in rows)


def test_partial_results_flushed(cohort_csv, tmp_path, monkeypatch):
    real = runner.run_method

    def failing(chunks, method, level, schema, settings, store):
        if method == "LR_all":
            err = ProtocolError(method, level, 2014 * 12, RuntimeError("boom"))
            err.partial = [MonthlyResult(2013 * 12 + 9, method, str(level), 0.7, 10, 2)]
            raise err
        return real(chunks, method, level, schema, settings, store)

    monkeypatch.setattr(runner, "run_method", failing)
    cfg = _config(cohort_csv, tmp_path, methods=["baseline_3m", "LR_all"], info_levels=["IL1"])
    with pytest.raises(ExperimentError, match=r"LR_all @ IL1 @ 2014-01"):
        run_experiment(cfg)
    monthly = read_monthly(tmp_path / "monthly.csv")
    assert set(monthly) == {("baseline_3m", "IL1"), ("LR_all", "IL1")}
    assert len(monthly[("LR_all", "IL1")]) == 1
    assert json.loads((tmp_path / "meta.json").read_text())["partial"] is True


def test_inspect_weights(tmp_path):
    from homecare_ensemble.cohort import build_feature_schema
    schema = build_feature_schema(["2100"])
    d = schema.level_dim("IL1")
    w = np.zeros(d)
    w[3] = -2.0
    save_model(LinearModel(w, 0.0, 1.0, np.zeros(d), np.ones(d)), tmp_path / "m.json",
               info_level="IL1")
    ranked = inspect_weights(tmp_path / "m.json", schema)
    assert len(ranked) == d
    assert ranked[0] == (schema.level_names("IL1")[3], 2.0)
    # ties keep feature order
    assert [n for n, _ in ranked[1:]] == [n for j, n in enumerate(schema.level_names("IL1"))
                                          if j != 3]


def test_inspect_rejects_forest(cohort_csv, tmp_path):
    from homecare_ensemble.learners import train_forest
    X = np.random.default_rng(0).normal(size=(20, 2))
    save_model(train_forest(X, np.where(X[:, 0] > 0, 1, -1), n_trees=2), tmp_path / "f.json")
    with pytest.raises(ValueError, match="weights undefined for forests"):
        inspect_weights(tmp_path / "f.json")


# -- command line ----------------------------------------------------------

def test_cli_generate(tmp_path, capsys):
    cfg = tmp_path / "synth.json"
    cfg.write_text(json.dumps({"schema_version": 1, "n_citizens": 120,
                               "start_month": "2013-04", "end_month": "2014-01"}))
    assert cli.main(["generate", "--config", str(cfg), "--out", str(tmp_path / "c.csv"),
                     "--seed", "42"]) == 0
    ids = {r["citizen_id"] for r in _read_rows(tmp_path / "c.csv")}
    assert len(ids) == 120
    assert json.loads((tmp_path / "c.meta.json").read_text())["seed"] == 42
    cfg.write_text(json.dumps({"n_citizens": 10, "wibble": 1}))
    assert cli.main(["generate", "--config", str(cfg), "--out", str(tmp_path / "d.csv")]) == 2
    err = capsys.readouterr().err
    assert err.startswith("error[config]") and "wibble" in err


def test_cli_run_report_inspect(cohort_csv, tmp_path, capsys):
    cfg = tmp_path / "exp.json"
    cfg.write_text(json.dumps({"schema_version": 1, "input_csv": str(cohort_csv),
                               "output_dir": str(tmp_path / "ignored"),
                               "methods": ["LR_all"], "lr_lambdas": [1.0]}))
    out = tmp_path / "run"
    assert cli.main(["run", "--config", str(cfg), "--out", str(out), "--seed", "3",
                     "--methods", "baseline_3m,LR_last", "--levels", "IL1,IL2b"]) == 0
    rows = _read_rows(out / "averages.csv")
    assert [r["method"] for r in rows] == ["baseline_3m", "LR_last"]
    assert list(rows[0])[1:] == ["IL1", "IL2b"]
    assert json.loads((out / "meta.json").read_text())["seed"] == 3
    assert cli.main(["report", "--out", str(out)]) == 0
    capsys.readouterr()
    assert cli.main(["inspect", "--model", str(out / "models" / "LR_last__IL2b.json"),
                     "--top", "3"]) == 0
    assert len(capsys.readouterr().out.strip().splitlines()) == 3


def test_cli_errors(tmp_path, capsys):
    assert cli.main(["run", "--config", str(tmp_path / "missing.json")]) == 2
    assert capsys.readouterr().err.startswith("error[config]")
    cfg = tmp_path / "exp.json"
    cfg.write_text(json.dumps({"input_csv": str(tmp_path / "nope.csv")}))
    assert cli.main(["run", "--config", str(cfg)]) == 2
    capsys.readouterr()
    bad = tmp_path / "bad.csv"
    bad.write_text("citizen_id,year\nA,2013\n")
    cfg.write_text(json.dumps({"input_csv": str(bad), "output_dir": str(tmp_path / "o")}))
    assert cli.main(["run", "--config", str(cfg)]) == 3
    assert capsys.readouterr().err.startswith("error[data]")
    assert cli.main(["report", "--out", str(tmp_path / "empty")]) == 2
