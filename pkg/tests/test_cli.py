import logging
import math

import numpy as np
import pandas as pd
import pytest

import twogridmfe as tg
from twogridmfe import cli
from twogridmfe.cli import main, run_experiment
from twogridmfe.constants import CSV_COLUMNS, EXIT_CONFIG_ERROR, EXIT_OK, EXIT_SOLVER_FAILURE
from twogridmfe.msolve import RunReport
from twogridmfe.snapshot import read_grid
from twogridmfe.tables import TableGroup, TableManifest, TableRow

SMALL_RUN = """\
problem = "example43"
gamma = 1.0
theta = 0.2
dt = "1/10"
method = "tgmfe"
fine_div = 20
coarse_div = 5
"""


@pytest.fixture
def config_path(tmp_path):
    """A small one-dimensional two-grid run."""
    path = tmp_path / "small.toml"
    path.write_text(SMALL_RUN)
    return path


def _read_csv(path):
    return pd.read_csv(path, dtype=str, keep_default_na=False)


def test_run_writes_one_row(config_path, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", "--config", str(config_path), "--out", str(out)]) == EXIT_OK
    frame = _read_csv(out / "small.csv")
    assert list(frame.columns) == list(CSV_COLUMNS)
    assert len(frame) == 1
    row = frame.iloc[0]
    assert (row["method"], row["problem"], row["dt"], row["H_hat"], row["h_hat"]) == (
        "tgmfe",
        "example43",
        "1/10",
        "2/5",
        "1/10",
    )
    assert 0.0 < float(row["err_u"]) < math.inf
    assert int(row["newton_total_iters"]) >= 10
    assert "err_u=" in capsys.readouterr().out


def test_rerun_overwrites(config_path, tmp_path):
    out = tmp_path / "out"
    assert main(["run", "--config", str(config_path), "--out", str(out)]) == EXIT_OK
    first = _read_csv(out / "small.csv").drop(columns="cpu_seconds")
    assert main(["run", "--config", str(config_path), "--out", str(out)]) == EXIT_OK
    second = _read_csv(out / "small.csv").drop(columns="cpu_seconds")
    pd.testing.assert_frame_equal(first, second)


def test_bad_config_exit_code(tmp_path, capsys):
    path = tmp_path / "bad.toml"
    path.write_text(SMALL_RUN.replace("theta = 0.2", "theta = 0.6"))
    assert main(["run", "--config", str(path), "--out", str(tmp_path / "out")]) == EXIT_CONFIG_ERROR
    err = capsys.readouterr().err
    assert "theta" in err
    assert "line 3" in err
    assert not (tmp_path / "out").exists()


def test_solver_failure_writes_nan_row(tmp_path):
    path = tmp_path / "failing.toml"
    path.write_text(SMALL_RUN + "newton_tol = 1e-15\nnewton_max = 1\n")
    out = tmp_path / "out"
    assert main(["run", "--config", str(path), "--out", str(out)]) == EXIT_SOLVER_FAILURE
    row = _read_csv(out / "failing.csv").iloc[0]
    assert row["err_u"] == "nan"
    assert row["err_sigma"] == "nan"


def test_snapshot_of_initial_state(config_path, tmp_path):
    out = tmp_path / "snap"
    assert main(["snapshot", "--config", str(config_path), "--t", "0", "--out", str(out)]) == EXIT_OK
    values, _ = read_grid(out / "small_u_t0.asc")
    assert (out / "small_sigma_t0.asc").exists()

    config = tg.ExperimentConfig.from_file(config_path)
    expected = config.fine_space().interpolate(config.problem_spec().u0)
    np.testing.assert_allclose(values, expected.coeffs[None, :], atol=1e-14)


def test_snapshot_snaps_to_time_grid(config_path, tmp_path, caplog):
    out = tmp_path / "snap"
    with caplog.at_level(logging.WARNING):
        assert main(["snapshot", "--config", str(config_path), "--t", "0.13", "--out", str(out)]) == EXIT_OK
    assert "snapped" in caplog.text
    assert (out / "small_u_t0.1.asc").exists()


def test_snapshot_outside_run(config_path, tmp_path):
    args = ["snapshot", "--config", str(config_path), "--t", "2.5", "--out", str(tmp_path)]
    assert main(args) == EXIT_CONFIG_ERROR


def test_unknown_table_id(tmp_path):
    with pytest.raises(SystemExit) as excinfo:
        main(["table", "--id", "12", "--out", str(tmp_path)])
    assert excinfo.value.code == 2


def test_snapshots_during_run(tmp_path):
    config = tg.ExperimentConfig.from_dict(
        tg.ExperimentConfig.from_file(_write(tmp_path, SMALL_RUN)).to_dict()
        | {"snapshot_times": [0.5, 1.0], "output": str(tmp_path / "fields")}
    )
    record = run_experiment(config, stem="sweep")
    assert not record.failed
    names = sorted(p.name for p in (tmp_path / "fields").iterdir())
    assert names == ["sweep_sigma_t0.5.asc", "sweep_sigma_t1.asc", "sweep_u_t0.5.asc", "sweep_u_t1.asc"]


def test_reference_errors_use_cache(cache_dir):
    config = tg.ExperimentConfig(
        problem="example42",
        gamma=1.0,
        theta=0.0,
        dt="1/10",
        T=0.5,
        fine_div=3,
        reference_fine_div=6,
    )
    first = run_experiment(config)
    assert not first.failed
    assert first.err_u > 0.0
    assert math.isfinite(first.err_sigma)
    assert len(list(cache_dir.glob("*.npz"))) == 1

    second = run_experiment(config)
    assert second.err_u == first.err_u
    assert len(list(cache_dir.glob("*.npz"))) == 1


def _write(tmp_path, text, name="sweep.toml"):
    path = tmp_path / name
    path.write_text(text)
    return path


@pytest.fixture
def tiny_reference_table(monkeypatch):
    """A two-sequence reference table on coarse meshes, replacing table 5."""
    rows = (TableRow("1/10", "1/2", "1/2"), TableRow("1/10", "1/2", "1/4"))
    manifest = TableManifest(
        table_id=5,
        title="tiny",
        problem="example42",
        refine_by="h_hat",
        groups=(TableGroup("tgmfe", 0.2, 1.0, rows), TableGroup("mfe", 0.2, 1.0, rows)),
        reference=TableRow("1/10", "1/2", "1/8"),
    )
    monkeypatch.setattr(cli, "load_manifest", lambda table_id: manifest)
    return manifest


def test_failed_reference_marks_only_its_rows(monkeypatch, tiny_reference_table, tmp_path, capsys):
    compute = cli.compute_reference

    def failing_for_two_grid(config, cache):
        if config.method == "tgmfe":
            report = RunReport(method="tgmfe", problem=config.problem, num_steps=10, failed=True)
            raise tg.StepFailureError("Step 3 failed", report)
        return compute(config, cache)

    monkeypatch.setattr(cli, "compute_reference", failing_for_two_grid)
    out = tmp_path / "tables"
    assert main(["table", "--id", "5", "--out", str(out)]) == EXIT_SOLVER_FAILURE
    assert "2 failed rows" in capsys.readouterr().out

    frame = _read_csv(out / "table5.csv")
    assert list(frame["method"]) == ["tgmfe", "tgmfe", "mfe", "mfe"]
    assert list(frame["err_u"][:2]) == ["nan", "nan"]
    assert all(math.isfinite(float(value)) and float(value) > 0 for value in frame["err_u"][2:])


def test_run_experiment_reports_failed_reference(monkeypatch):
    def failing(config, cache):
        raise tg.NewtonConvergenceError(4, [1.0, 0.5])

    monkeypatch.setattr(cli, "compute_reference", failing)
    config = tg.ExperimentConfig(problem="example42", gamma=1.0, theta=0.0, dt="1/10", fine_div=2, reference_fine_div=4)
    record = run_experiment(config)
    assert record.failed
    assert record.failure.startswith("Reference run failed")
    assert math.isnan(record.err_u)
