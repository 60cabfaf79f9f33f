import csv
import json

import numpy as np
import pytest

from vofc.cli import main
from vofc.data_io import load_grid, load_timeseries, save_grid, save_timeseries
from vofc.grid import GeneratorParams, Grid, ScenarioDay


def synth(tmp_path, name="data", *extra):
    out = tmp_path / name
    assert main(["synth", "--out", str(out), *extra]) == 0
    return out


def read_lambda(path):
    return json.loads(path.read_text(encoding="utf-8"))


def test_synth_is_reproducible(tmp_path):
    a = synth(tmp_path, "a", "--seed", "7", "--days", "3", "--test-days", "2")
    b = synth(tmp_path, "b", "--seed", "7", "--days", "3", "--test-days", "2")
    for name in ("grid.json", "forecasts.csv", "actuals.csv", "config.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    c = synth(tmp_path, "c", "--seed", "8", "--days", "3", "--test-days", "2")
    assert (a / "forecasts.csv").read_bytes() != (c / "forecasts.csv").read_bytes()


def test_perfect_provider_gets_all_rmse_weight(tmp_path):
    data = synth(tmp_path, "data", "--bias", "0,0.1", "--noise", "0,0.05", "--days", "4", "--test-days", "0")
    assert main(["baseline", "--config", str(data / "config.json"), "--out", str(tmp_path / "o")]) == 0
    w = read_lambda(tmp_path / "o" / "lambda_rmse.json")["weights"]
    assert w == pytest.approx([1.0, 0.0], abs=1e-12)


def test_bad_synth_parameters_exit_1(tmp_path):
    assert main(["synth", "--out", str(tmp_path / "x"), "--providers", "3"]) == 1
    assert main(["synth", "--out", str(tmp_path / "x"), "--noise=-1,0"]) == 1


def test_identical_days_train_in_one_iteration(tmp_path):
    data = synth(tmp_path, "data", "--days", "1", "--test-days", "0", "--horizon", "4")
    grid = load_grid(data / "grid.json")
    nodes = [n.id for n in grid.nodes]
    d = load_timeseries(data / "forecasts.csv", data / "actuals.csv", nodes=nodes)[0]
    same = [ScenarioDay(k, d.forecast_load, d.forecast_wind, d.actual_load, d.actual_wind) for k in (1, 2, 3)]
    save_timeseries(same, data / "forecasts.csv", data / "actuals.csv", nodes=nodes)
    cfg = json.loads((data / "config.json").read_text())
    cfg["train_days"] = [1, 2, 3]
    (data / "config.json").write_text(json.dumps(cfg))
    out = tmp_path / "run"
    assert main(["train", "--config", str(data / "config.json"), "--out", str(out)]) == 0
    with open(out / "trace.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["tau"] for r in rows] == ["0", "1"]  # initial point, then one iteration
    assert read_lambda(out / "lambda.json")["converged"] is True
    assert (out / "timing.csv").exists()


def test_single_level_rejects_longer_minimum_times(tmp_path, capsys):
    data = synth(tmp_path, "data", "--days", "2", "--test-days", "0", "--horizon", "3")
    grid = load_grid(data / "grid.json")
    g = grid.generators
    save_grid(Grid(grid.nodes, grid.lines, [GeneratorParams(**{**g[0].__dict__, "min_up": 2}), g[1]],
                   grid.reference), data / "grid.json")
    assert main(["train", "--config", str(data / "config.json"), "--trainer", "stm",
                 "--out", str(tmp_path / "o")]) == 1
    err = capsys.readouterr().err
    assert "min_up=2" in err and "g1" in err


def test_iteration_limit_exits_2(tmp_path):
    data = synth(tmp_path, "data", "--days", "4", "--test-days", "0", "--horizon", "4")
    cfg = json.loads((data / "config.json").read_text())
    cfg["max_iter"] = 1
    (data / "config.json").write_text(json.dumps(cfg))
    out = tmp_path / "o"
    assert main(["train", "--config", str(data / "config.json"), "--out", str(out)]) == 2
    assert (out / "lambda.json").exists() and (out / "trace.csv").exists()


def test_full_active_set_pfph_matches_ph(tmp_path):
    data = synth(tmp_path, "data", "--days", "3", "--test-days", "0", "--horizon", "4")
    cfg = str(data / "config.json")
    main(["train", "--config", cfg, "--out", str(tmp_path / "ph")])
    main(["train", "--config", cfg, "--trainer", "pfph", "--dprime", "3", "--out", str(tmp_path / "pf")])
    a = read_lambda(tmp_path / "ph" / "lambda.json")["weights"]
    b = read_lambda(tmp_path / "pf" / "lambda.json")["weights"]
    assert np.abs(np.subtract(a, b)).max() <= 1e-9


def test_overrides_win_over_the_config_file(tmp_path, capsys):
    data = synth(tmp_path, "data", "--days", "2", "--test-days", "0", "--horizon", "3")
    capsys.readouterr()
    main(["train", "--config", str(data / "config.json"), "--trainer", "rmse", "--rho", "123",
          "--out", str(tmp_path / "o")])
    banner = [ln for ln in capsys.readouterr().err.splitlines() if ln.startswith("resolved config: ")][0]
    cfg = json.loads(banner.split(": ", 1)[1])
    assert cfg["rho"] == 123.0 and cfg["trainer"] == "rmse" and cfg["eps"] == 1e-5


def test_usage_errors_exit_1(tmp_path):
    with pytest.raises(SystemExit) as e:
        main(["train", "--variant", "exact"])
    assert e.value.code == 1
    assert main(["train", "--config", str(tmp_path / "missing.json")]) == 1
    assert main(["train"]) == 1


def test_evaluate_inline_and_off_simplex(tmp_path):
    data = synth(tmp_path, "data", "--days", "1", "--test-days", "2", "--horizon", "3")
    out = tmp_path / "o"
    assert main(["evaluate", "--config", str(data / "config.json"), "--lambda", "0.5,0.5", "--out", str(out)]) == 0
    with open(out / "report.csv", newline="") as fh:
        row = next(csv.DictReader(fh))
    assert row["Method"] == "fixed" and float(row["Δ_c"]) == 0.0
    assert main(["evaluate", "--config", str(data / "config.json"), "--lambda", "0.7,0.7", "--out", str(out)]) == 1


@pytest.mark.slow
def test_four_trainers_end_to_end(tmp_path):
    data = synth(tmp_path, "data", "--days", "2", "--test-days", "2", "--horizon", "3")
    cfg = str(data / "config.json")
    files = []
    for trainer in ("ph", "pfph", "stm", "rmse"):
        out = tmp_path / trainer
        assert main(["train", "--config", cfg, "--trainer", trainer, "--out", str(out)]) in (0, 2)
        files.append(str(out / "lambda.json"))
    out = tmp_path / "eval"
    assert main(["evaluate", "--config", cfg, "--weights", *files, "--out", str(out)]) == 0
    with open(out / "report.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["Method"] for r in rows] == ["ph", "pfph", "stm", "rmse"]
    assert list(rows[0]) == ["Method", "λ*₁", "λ*₂", "Time(s)", "TST*", "Δ_a", "Δ_b", "Δ_c"]
    assert len((out / "report.md").read_text(encoding="utf-8").splitlines()) == 6
    assert main(["export", "--config", cfg, "--stm", "--out", str(tmp_path / "lp")]) == 0
    assert sorted(p.name for p in (tmp_path / "lp").iterdir()) == ["ph_day1.lp", "ph_day2.lp", "stm.lp"]
