import json

import numpy as np
import pytest

from src.cli.main import main, parse_config
from src.cli.verify import _rate_result
from src.core.errors import ConfigError
from src.core.evolve import ConvergenceFit
from src.core.linearize import WeightedNormSpec
from src.utils.artifacts import read_csv_body

SMALL_GRID = ["--h", "0.03125", "--y-max", "32"]


def test_parse_config_flags():
    cfg = parse_config(["mc", "--kernel", "0.5,0.5", "--count", "500", "--variant", "ring", "--seed", "3"])
    assert cfg.command == "mc"
    assert cfg.kernel == [0.5, 0.5]
    assert cfg.count == 500
    assert cfg.variant == "ring"
    assert cfg.seed == 3
    assert cfg.h == 1.0 / 64.0


def test_config_file_is_overridden_by_flags(tmp_path):
    conf = tmp_path / "run.conf"
    conf.write_text("KERNEL=1\nTHETA=0.5,1\nY_MAX=16\n")
    cfg = parse_config(["steady", "--config", str(conf), "--y-max", "24"])
    assert cfg.kernel == [1.0]
    assert cfg.theta == [0.5, 1.0]
    assert cfg.y_max == 24.0


def test_missing_config_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        parse_config(["steady", "--config", str(tmp_path / "absent.conf")])


def test_unparsable_weights():
    with pytest.raises(ConfigError):
        parse_config(["steady", "--kernel", "a,b"])


@pytest.mark.parametrize('weights', ["0,-1", "0.2,0.2", "", "a,b"])
def test_corrupted_weights_exit_code(weights, tmp_path, capsys):
    code = main(["steady", "--kernel", weights, "--output-dir", str(tmp_path)])
    assert code == 2
    err = capsys.readouterr().err
    payload = json.loads(err.strip().splitlines()[-1])
    assert payload["error_type"] == "ConfigError"
    assert payload["exit_code"] == 2
    assert not list(tmp_path.iterdir())


def test_steady_writes_profiles_with_header(tmp_path):
    code = main(["steady", "--theta", "0.5,1", "--output-dir", str(tmp_path), *SMALL_GRID])
    assert code == 0
    path = tmp_path / "steady_theta_1.csv"
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# tool: ")
    assert any(line.startswith("# kernel: ") for line in lines[:12])
    frame = read_csv_body(str(path))
    assert list(frame.columns) == ["y", "ode", "spectral", "abs_diff"]
    assert frame["abs_diff"].max() <= 1e-3
    head = frame[frame["y"] <= 3.0]
    assert np.allclose(head["ode"], 0.5 / head["y"], atol=1e-6)
    summary = json.loads((tmp_path / "steady_summary.json").read_text())
    assert [p["theta"] for p in summary["profiles"]] == [0.5, 1.0]
    assert summary["header"]["config"]["command"] == "steady"


def test_steady_flags_profiles_outside_p(tmp_path):
    assert main(["steady", "--theta", "2", "--output-dir", str(tmp_path), *SMALL_GRID]) == 0
    summary = json.loads((tmp_path / "steady_summary.json").read_text())
    (profile,) = summary["profiles"]
    assert profile["in_p"] is False
    assert profile["note"].startswith("not in P")


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("COARSENING_OUTPUT_DIR", str(tmp_path / "env_out"))
    assert main(["transform", *SMALL_GRID]) == 0
    summary = json.loads((tmp_path / "env_out" / "transform_summary.json").read_text())
    assert summary["theta"] == 1.0
    assert "d0_analytic" in summary


def test_evolve_binary_snapshots(tmp_path):
    code = main(["evolve", "--tau-end", "0.25", "--emit", "binary", "--snapshots", "16",
                 "--output-dir", str(tmp_path), *SMALL_GRID])
    assert code == 0
    index = json.loads((tmp_path / "evolve_snapshots.json").read_text())["snapshots"]
    assert index
    assert all((tmp_path / s["path"]).read_bytes().startswith(b"CGRIDv1") for s in index)
    trace = read_csv_body(str(tmp_path / "evolve_trace.csv"))
    assert abs(trace["mass"].iloc[-1] - 1.0) <= 1e-6


def test_mc_is_reproducible(tmp_path):
    bodies = []
    for run in ("a", "b"):
        out = tmp_path / run
        cdf = out / "cdf.csv"
        out.mkdir()
        code = main(["mc", "--count", "2000", "--grow", "2", "--seed", "5", "--output-dir", str(out),
                     "--emit-cdf", str(cdf), *SMALL_GRID])
        assert code == 0
        bodies.append(read_csv_body(str(cdf)).to_csv(index=False))
    assert bodies[0] == bodies[1]
    summary = json.loads((tmp_path / "a" / "mc_summary.json").read_text())
    assert summary["header"]["seed"] == 5
    assert summary["rng"] == "numpy.random.Philox"


def test_verify_single_criterion(tmp_path):
    code = main(["verify", "--criteria", "1", "--output-dir", str(tmp_path)])
    assert code == 0
    report = json.loads((tmp_path / "verify_report.json").read_text())
    assert report["status"] == "pass"
    assert [r["id"] for r in report["results"]] == [1]
    assert report["kernel"]["lambda"] == "inf" or isinstance(report["kernel"]["lambda"], float)


def test_verify_unknown_criterion(tmp_path):
    assert main(["verify", "--criteria", "99", "--output-dir", str(tmp_path)]) == 2


@pytest.mark.parametrize("rate,passed", [(1.5, True), (1.3, True), (1.9, False), (1.2, False)])
def test_rate_criterion_is_two_sided(rate, passed):
    fit = ConvergenceFit(rate=rate, taus=np.zeros(2), norms=np.ones(2), norm=WeightedNormSpec(p=2, gamma=2.0),
                         gamma=3.0, theta=1.0)
    result = _rate_result(10, "rate", fit, 1.5, 0.15)
    assert result.passed is passed
    assert result.measured["relative_deviation"] == pytest.approx((rate - 1.5) / 1.5)
