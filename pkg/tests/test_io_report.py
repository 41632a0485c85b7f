import json
import subprocess

import numpy as np
import pytest

from arrayhd.config import AppConfig
from arrayhd.io_utils import (
    read_grid_csv,
    read_map_csv,
    read_mode_csv,
    read_samples_csv,
    write_grid_csv,
    write_map_csv,
    write_mode_csv,
    write_samples_csv,
)
from arrayhd.logging_config import build_run_id, log_stage, setup_logging
from arrayhd.metrics import check
from arrayhd.modes import PixelGrid, build_basis
from arrayhd.pipeline_service import _git_commit, run_tag
from arrayhd.report import dumps_report, read_report, write_report
from arrayhd.report_builder import build_header, build_verify_report
from arrayhd.visualize import save_delta_map, save_density_comparison


def test_git_commit_returns_none_when_git_unavailable(monkeypatch):
    def _raise_git_error(*_args, **_kwargs):
        raise subprocess.CalledProcessError(returncode=1, cmd=["git", "rev-parse", "HEAD"])

    monkeypatch.setattr("arrayhd.pipeline_service.subprocess.check_output", _raise_git_error)
    assert _git_commit() is None


def test_mode_csv_preserves_values_exactly(tmp_path):
    grid = PixelGrid(8, 6, 0.25, 0.5)
    mode = build_basis(grid, "vortex")[1]
    path = write_mode_csv(tmp_path / "mode.csv", mode)
    restored = read_mode_csv(path, grid, label=mode.label)
    assert np.array_equal(restored.values, mode.values)
    assert path.read_text(encoding="utf-8").splitlines()[0] == "j,jprime,re,im"


def test_mode_csv_must_cover_grid(tmp_path):
    grid = PixelGrid(2, 2, 1.0, 1.0)
    path = tmp_path / "partial.csv"
    path.write_text("j,jprime,re,im\n0,0,1.0,0.0\n", encoding="utf-8")
    with pytest.raises(ValueError, match="does not cover"):
        read_mode_csv(path, grid)
    path.write_text("j,jprime,re,im\n5,0,1.0,0.0\n", encoding="utf-8")
    with pytest.raises(ValueError, match="outside the grid"):
        read_mode_csv(path, grid)


def test_map_and_samples_csv(tmp_path):
    values = np.arange(6.0).reshape(2, 3) / 7.0
    assert np.array_equal(read_map_csv(write_map_csv(tmp_path / "map.csv", values), (2, 3)), values)
    samples = np.array([[0.1, -0.2], [1e-17, 3.5]])
    assert np.array_equal(read_samples_csv(write_samples_csv(tmp_path / "s.csv", samples)), samples)


def test_grid_csv_layout(tmp_path):
    x1 = np.linspace(-1.0, 1.0, 3)
    x2 = np.linspace(0.0, 2.0, 4)
    values = np.outer(x1, x2)
    path = write_grid_csv(tmp_path / "grid.csv", x1, x2, values)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "x1,x2,value"
    assert len(lines) == 13
    a1, a2, restored = read_grid_csv(path)
    assert np.array_equal(a1, x1)
    assert np.array_equal(restored, values)
    with pytest.raises(ValueError, match="does not match axes"):
        write_grid_csv(tmp_path / "bad.csv", x1, x2, values.T)


def test_readers_check_headers_and_existence(tmp_path):
    path = tmp_path / "wrong.csv"
    path.write_text("a,b\n1,2\n", encoding="utf-8")
    with pytest.raises(ValueError, match="Unexpected CSV header"):
        read_samples_csv(path)
    with pytest.raises(FileNotFoundError):
        read_grid_csv(tmp_path / "missing.csv")


def test_report_json_handles_non_finite_values(tmp_path):
    report = {"a": float("inf"), "b": [float("nan"), 1.5], "c": {"d": -float("inf")}}
    path = tmp_path / "nested" / "report.json"
    write_report(report, path)
    restored = read_report(path)
    assert restored == {"a": "inf", "b": [None, 1.5], "c": {"d": "-inf"}}
    assert json.loads(dumps_report(report)) == restored
    with pytest.raises(FileNotFoundError):
        read_report(tmp_path / "absent.json")


def test_verify_report_status_follows_checks():
    cfg = AppConfig()
    header = build_header("abc", None)
    ok = build_verify_report(cfg=cfg, header=header, checks=[check("x", 0.0, 1.0)], inversion={})
    assert ok["status"] == "ok"
    assert ok["header"]["run_id"] == "abc"
    failed = build_verify_report(cfg=cfg, header=header, checks=[check("x", 2.0, 1.0)], inversion={})
    assert failed["status"] == "failed"
    assert failed["summary"]["worst_check"] == "x"


def test_run_tag_names_state_parameters():
    assert run_tag(AppConfig.from_preset("fig2")) == "perelomov_r1.0000_g0.7854_p0.7854_m0.7854"
    assert run_tag(AppConfig.from_preset("vacuum")) == "vacuum_p0.0000_0.0000"


def test_logging_writes_run_files(tmp_path):
    run_id = build_run_id()
    assert len(run_id) == 12
    log = setup_logging(tmp_path, run_id)
    with log_stage(log, "unit.stage", answer=42):
        pass
    with pytest.raises(RuntimeError):
        with log_stage(log, "unit.failing"):
            raise RuntimeError("boom")
    setup_logging(None, run_id)
    lines = (tmp_path / "run.jsonl").read_text(encoding="utf-8").splitlines()
    events = [json.loads(line)["record"]["extra"] for line in lines]
    assert [e["event"] for e in events] == [
        "unit.stage.start",
        "unit.stage.end",
        "unit.failing.start",
        "unit.failing.error",
    ]
    assert all(e["run_id"] == run_id for e in events)
    assert "duration_ms" in events[1]


def test_figures_are_written(tmp_path):
    axis = np.linspace(-2.0, 2.0, 9)
    values = np.exp(-np.add.outer(axis**2, axis**2))
    save_density_comparison(tmp_path / "fig" / "cmp.png", axis, axis, values, values * 0.9, title="t")
    save_delta_map(tmp_path / "delta.png", axis, axis, values - values.T)
    assert (tmp_path / "fig" / "cmp.png").stat().st_size > 0
    assert (tmp_path / "delta.png").stat().st_size > 0
