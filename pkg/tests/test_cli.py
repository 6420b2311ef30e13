import logging

import pytest
from click.testing import CliRunner

from stmdplus.cli import cli
from stmdplus.records import read_detections, read_roc
from stmdplus.version import __version__

SMALL = ["--preset", "tuning-base", "--spec-set", "frames=200", "--spec-set", "view_w=120",
         "--spec-set", "view_h=32", "--spec-set", "start_y=16"]


@pytest.fixture
def runner(monkeypatch, tmp_path):
    monkeypatch.setenv("STMDPLUS_ROOT", str(tmp_path / "root"))
    monkeypatch.delenv("STMDPLUS_OUTPUT_ROOT", raising=False)
    monkeypatch.delenv("STMDPLUS_PRESETS_ROOT", raising=False)
    return CliRunner()


@pytest.fixture
def rendered(runner, tmp_path):
    out = tmp_path / "seq"
    result = runner.invoke(cli, ["synth", *SMALL, "--output", str(out)])
    assert result.exit_code == 0, result.output
    return out


def test_version(runner):
    result = runner.invoke(cli, ["--version"])
    assert result.exit_code == 0
    assert __version__ in result.output


def test_presets_listing_and_check(runner):
    result = runner.invoke(cli, ["presets"])
    assert result.exit_code == 0
    assert "initial" in result.output and "sweep" in result.output
    result = runner.invoke(cli, ["presets", "--check"])
    assert result.exit_code == 0
    assert "built-in presets OK" in result.output


def test_synth_writes_frames_and_ground_truth(rendered):
    assert len(list((rendered / "frames").glob("*.pgm"))) == 200
    lines = (rendered / "ground_truth.csv").read_text().splitlines()
    assert lines[0] == "frame,x,y" and len(lines) == 201


def test_run_then_eval(runner, rendered, tmp_path):
    out = tmp_path / "run"
    result = runner.invoke(
        cli,
        [
            "--set", "beta=0.001", "--set", "m=200", "--set", "include_undecided=true",
            "run", "--frames", str(rendered / "frames"), "--ground-truth", str(rendered / "ground_truth.csv"),
            "--output", str(out),
        ],
    )
    assert result.exit_code == 0, result.output
    assert "detection_rate=" in result.output
    assert (out / "traces.csv").exists() and (out / "ground_truth.csv").exists()
    assert read_detections(out / "detections.csv")

    result = runner.invoke(
        cli,
        ["eval", "--detections", str(out / "detections.csv"), "--ground-truth", str(rendered / "ground_truth.csv"),
         "--all-labels"],
    )
    assert result.exit_code == 0, result.output
    assert result.output.startswith("detection_rate=")
    assert "frames=" in result.output


def test_roc_from_a_preset(runner, tmp_path):
    target = tmp_path / "roc.csv"
    result = runner.invoke(cli, ["roc", *SMALL, "--betas", "0.001,0.01", "--output", str(target)])
    assert result.exit_code == 0, result.output
    points = read_roc(target)
    assert [p.beta for p in points] == [0.001, 0.01]
    assert all(0 <= p.detection_rate <= 1 for p in points)


def test_bad_config_key_exits_with_1(runner):
    result = runner.invoke(cli, ["--set", "sigma9=1", "presets"])
    assert result.exit_code == 1
    assert "error: unknown config key 'sigma9'" in result.output


def test_missing_frames_exit_with_2(runner, tmp_path):
    result = runner.invoke(cli, ["--set", "beta=1", "run", "--frames", str(tmp_path / "nowhere"), "--output", str(tmp_path / "o")])
    assert result.exit_code == 2
    assert "error:" in result.output


def test_run_without_beta_exits_with_1(runner, rendered, tmp_path):
    result = runner.invoke(cli, ["run", "--frames", str(rendered / "frames"), "--output", str(tmp_path / "o")])
    assert result.exit_code == 1
    assert "beta" in result.output


@pytest.mark.parametrize("flag,expected", [("debug", logging.DEBUG), ("WARNING", logging.WARNING), ("chatty", logging.INFO)])
def test_log_level_option(runner, monkeypatch, flag, expected):
    seen = {}
    monkeypatch.setattr(logging, "basicConfig", lambda **kwargs: seen.update(kwargs))
    result = runner.invoke(cli, ["--log-level", flag, "presets"])
    assert result.exit_code == 0, result.output
    assert seen["level"] == expected
