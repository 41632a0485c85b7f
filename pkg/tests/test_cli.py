import json
import math

import numpy as np
import pytest

from arrayhd.cli import EXIT_FAILURE, EXIT_OK, EXIT_USAGE, main
from arrayhd.cli_args import build_parser
from arrayhd.config import THREADS_ENV, AppConfig
from arrayhd.io_utils import read_grid_csv, read_samples_csv
from arrayhd.pipeline_service import apply_cli_overrides
from arrayhd.report import read_report


def _report(out_dir):
    return read_report(out_dir / "report.json")


def test_help_exits_cleanly():
    assert main(["--help"]) == EXIT_OK


def test_usage_errors_exit_with_two():
    assert main([]) == EXIT_USAGE
    assert main(["tomography"]) == EXIT_USAGE
    assert main(["simulate", "--seed", "-1"]) == EXIT_USAGE
    assert main(["simulate", "--preset", "fig9"]) == EXIT_USAGE
    assert main(["verify", "--seed", "-1"]) == EXIT_USAGE
    assert main(["densities", "--bins", "0"]) == EXIT_USAGE


def _overrides(argv):
    return apply_cli_overrides(AppConfig(), build_parser().parse_args(argv))


def test_general_flags_are_shared_by_every_command():
    verify = _overrides(["verify", "--seed", "4", "--samples", "1000", "--bins", "20", "--workers", "2"])
    assert verify.selection.seed == 4
    assert verify.sampling.seed == AppConfig().sampling.seed
    assert (verify.sampling.samples, verify.histogram.bins, verify.selection.workers) == (1000, 20, 2)
    single = _overrides(["single-detector", "--seed", "7", "--range", "6"])
    assert single.selection.seed == 7
    assert single.histogram.range == 6.0
    densities = _overrides(["densities", "--seed", "9", "--range", "3"])
    assert densities.sampling.seed == 9
    assert densities.densities.range == 3.0
    assert _overrides(["simulate", "--seed", "5"]).sampling.seed == 5


def test_densities_vacuum_grid(tmp_path, capsys):
    out = tmp_path / "densities"
    code = main(["densities", "--preset", "vacuum", "--points", "11", "--range", "3", "--out", str(out)])
    assert code == EXIT_OK
    printed = json.loads(capsys.readouterr().out)
    assert printed["command"] == "densities"

    report = _report(out)
    assert report["status"] == "ok"
    assert report["grid"] == {"points": 11, "range": 3.0}
    assert report["comparison"]["max_abs_delta"] < 1e-8
    x1, x2, values = read_grid_csv(report["artifacts"]["analytic_csv"])
    assert x1[0] == pytest.approx(-3.0)
    assert x2[-1] == pytest.approx(3.0)
    g1, g2 = np.meshgrid(x1, x2, indexing="ij")
    assert np.allclose(values, np.exp(-g1 * g1 - g2 * g2) / math.pi, atol=1e-15)
    assert (out / "run.log").exists()
    assert (out / "run.jsonl").exists()


def test_densities_fig2_reports_literal_constant_gap(tmp_path):
    out = tmp_path / "fig2"
    assert main(["densities", "--preset", "fig2", "--points", "21", "--plots", "--out", str(out)]) == EXIT_OK
    report = _report(out)
    assert report["comparison"]["within_tolerance"] is True
    assert report["comparison"]["unreconciled_max_abs_delta"] > 1e-3
    assert report["comparison"]["oracle_cutoff"] > 12
    assert report["state"]["A"] > report["state"]["B"]
    assert list(out.glob("*_delta.png"))


def test_malformed_config_exits_with_two(tmp_path):
    cfg_path = tmp_path / "broken.toml"
    cfg_path.write_text("[sampling\nsamples = 10\n", encoding="utf-8")
    assert main(["simulate", "--config", str(cfg_path), "--out", str(tmp_path / "out")]) == EXIT_USAGE


def test_invalid_config_value_exits_with_two(tmp_path):
    cfg_path = tmp_path / "bad.json"
    cfg_path.write_text(json.dumps({"histogram": {"bins": 1}}), encoding="utf-8")
    assert main(["simulate", "--config", str(cfg_path), "--out", str(tmp_path / "out")]) == EXIT_USAGE


def test_simulate_is_reproducible(tmp_path):
    runs = []
    for name, workers in (("a", "1"), ("b", "1"), ("c", "3")):
        out = tmp_path / name
        args = ["simulate", "--preset", "fig3", "--samples", "3000", "--seed", "5", "--workers", workers]
        assert main(args + ["--out", str(out)]) == EXIT_OK
        (samples_path,) = out.glob("*_seed5_samples.csv")
        runs.append(samples_path.read_text(encoding="utf-8"))
    assert runs[0] == runs[1] == runs[2]
    assert read_samples_csv(samples_path).shape == (3000, 2)


def test_simulate_report_contents(tmp_path):
    out = tmp_path / "sim"
    args = ["simulate", "--preset", "fig3", "--samples", "4000", "--seed", "9", "--bins", "20", "--plots"]
    assert main(args + ["--out", str(out)]) == EXIT_OK
    report = _report(out)
    assert report["sampling"]["seed"] == 9
    assert report["sampling"]["count"] == 4000
    assert report["sampling"]["rng"] == "numpy.random.Philox"
    assert report["histogram"]["bins"] == [20, 20]
    assert report["histogram"]["coverage"] > 0.999
    assert report["goodness_of_fit"]["dof"] >= 1
    assert report["config"]["sampling"]["seed"] == 9
    for key in ("samples_csv", "histogram_csv", "analytic_csv", "histogram_json", "comparison_png"):
        assert key in report["artifacts"]
    (hist_path,) = out.glob("*_histogram.json")
    hist = json.loads(hist_path.read_text(encoding="utf-8"))
    assert sum(map(sum, hist["counts"])) + hist["overflow"] == 4000


def test_simulate_rejects_narrow_range(tmp_path):
    code = main(["simulate", "--preset", "fig1", "--range", "4", "--samples", "1000", "--out", str(tmp_path)])
    assert code == EXIT_USAGE


def test_thread_cap_must_be_valid(tmp_path, monkeypatch):
    monkeypatch.setenv(THREADS_ENV, "zero")
    code = main(["simulate", "--preset", "vacuum", "--samples", "500", "--out", str(tmp_path)])
    assert code == EXIT_USAGE


def test_single_detector_constant_basis_fails(tmp_path):
    out = tmp_path / "constant"
    assert main(["single-detector", "--basis", "constant", "--seeds", "4", "--out", str(out)]) == EXIT_FAILURE
    report = _report(out)
    assert report["status"] == "failed"
    assert report["selection"] is None
    assert report["diagnosis"]["feature_rank"] < 8
    assert report["diagnosis"]["mode_overlap"] == pytest.approx(1.0)
    assert (out / "mode1_constant.csv").exists()


def test_single_detector_default_basis(tmp_path):
    out = tmp_path / "single"
    assert main(["single-detector", "--seeds", "20", "--seed", "4", "--out", str(out)]) == EXIT_OK
    report = _report(out)
    assert report["status"] == "ok"
    assert report["selection"]["seed"] == 4
    assert len(report["selection"]["pixels"]) == 9
    assert report["selection"]["condition_number"] < 1e8
    assert all(row["passed"] for row in report["deviations"])
    assert (out / "counts_vacuum_hermite-gauss.csv").exists()


def test_verify_default_configuration_passes(tmp_path):
    out = tmp_path / "verify"
    assert main(["verify", "--out", str(out)]) == EXIT_OK
    report = _report(out)
    assert report["status"] == "ok"
    assert report["summary"]["failed"] == 0
    assert report["inversion"]["swapped_denominators_max_deviation"] > 1.0
    names = {c["name"] for c in report["checks"]}
    assert "inversion.x1" in names
    assert "single.rejects_constant" in names
    assert "density.fig1_printed_constants" in names


def test_verify_with_equal_mixing_angles_marks_expected_failures(tmp_path):
    cfg_path = tmp_path / "degenerate.toml"
    cfg_path.write_text(
        "[verify]\nnu1 = 0.5\nnu2 = 0.5\nthetas = [1.5707963267948966]\nphis = [0.0]\n\n"
        "[selection]\nseeds = 20\n",
        encoding="utf-8",
    )
    out = tmp_path / "verify"
    assert main(["verify", "--config", str(cfg_path), "--out", str(out)]) == EXIT_OK
    report = _report(out)
    statuses = {c["name"]: c["status"] for c in report["checks"]}
    assert statuses["inversion.degenerate"] == "expected_failure"
    assert report["summary"]["expected_failures"] >= 1
