import logging
from pathlib import Path

import pytest

from stmdplus.app_settings import AppSettings
from stmdplus.config import get_output_root, get_presets_root, get_root
from stmdplus.errors import ConfigError
from stmdplus.params import (
    ClassifierParams,
    PipelineParams,
    RunConfig,
    load_run_config,
    parse_number_list,
    parse_overrides,
)


def test_default_parameters():
    p = PipelineParams()
    assert (p.sigma1, p.n1, p.tau1, p.n2, p.tau2, p.alpha1) == (1.0, 2, 3.0, 6, 9.0, 3)
    assert (p.n3, p.tau3, p.n4, p.tau4, p.n5, p.tau5) == (3, 15.0, 5, 25.0, 8, 40.0)
    assert (p.A, p.B, p.e, p.rho, p.sigma2, p.sigma3, p.eta, p.alpha2) == (1.0, 3.0, 1.0, 0.0, 1.5, 3.0, 1.5, 3)
    assert p.contrast_window == 5
    assert p.beta is None
    c = ClassifierParams()
    assert (c.gamma, c.m, c.match_radius, c.max_gap, c.nms_radius) == (10.0, 1000, 8.0, 3, 5)


def test_beta_is_required_only_when_detecting():
    with pytest.raises(ConfigError):
        PipelineParams().require_beta()
    assert PipelineParams(beta=150).require_beta() == 150.0


def test_config_file_and_overrides(tmp_path):
    path = tmp_path / "run.conf"
    path.write_text(
        "# ablation run\nsigma1 = 1.2\nbeta = 300\ngamma = 12\ncontrast_pathway = false\nframes = data/frames\n",
        encoding="utf-8",
    )
    config = load_run_config(path, parse_overrides(["beta=450", "m=400"]))
    assert config.pipeline.sigma1 == 1.2
    assert config.pipeline.beta == 450
    assert config.classifier.gamma == 12 and config.classifier.m == 400
    assert config.contrast_pathway is False
    assert config.frames == Path("data/frames")


def test_unknown_and_invalid_keys(tmp_path):
    with pytest.raises(ConfigError, match="unknown config key 'sigma9'"):
        RunConfig.from_mapping({"sigma9": "1"})
    with pytest.raises(ConfigError, match="sigma3"):
        RunConfig.from_mapping({"sigma2": "4", "sigma3": "3"})
    with pytest.raises(ConfigError, match="n1"):
        RunConfig.from_mapping({"n1": "0"})
    with pytest.raises(ConfigError):
        load_run_config(tmp_path / "missing.conf")


def test_with_overrides_keeps_other_values():
    config = RunConfig.from_mapping({"beta": "200", "gamma": "8"})
    updated = config.with_overrides({"include_undecided": "true"})
    assert updated.include_undecided is True
    assert updated.pipeline.beta == 200 and updated.classifier.gamma == 8


def test_small_m_warns(caplog):
    with caplog.at_level(logging.WARNING):
        ClassifierParams(m=100)
    assert "below 200" in caplog.text


def test_parse_helpers():
    assert parse_overrides(["a=1", "b = x", "a=2"]) == {"a": "2", "b": "x"}
    with pytest.raises(ConfigError):
        parse_overrides(["novalue"])
    assert parse_number_list("150, 250,350") == (150.0, 250.0, 350.0)
    with pytest.raises(ConfigError):
        parse_number_list("1,two")


def test_environment_paths(monkeypatch, tmp_path):
    monkeypatch.setenv("STMDPLUS_ROOT", str(tmp_path))
    monkeypatch.delenv("STMDPLUS_OUTPUT_ROOT", raising=False)
    monkeypatch.delenv("STMDPLUS_PRESETS_ROOT", raising=False)
    assert get_root() == tmp_path
    assert get_output_root() == tmp_path / "output"
    assert get_presets_root() == tmp_path / "presets"
    monkeypatch.setenv("STMDPLUS_OUTPUT_ROOT", str(tmp_path / "out"))
    assert get_output_root() == tmp_path / "out"


def test_app_settings_from_env(monkeypatch):
    monkeypatch.setenv("STMDPLUS_MAX_WORKERS", "0")
    monkeypatch.setenv("STMDPLUS_FFT_MIN_TAPS", "64")
    monkeypatch.setenv("STMDPLUS_LOG_LEVEL", "debug")
    settings = AppSettings.from_env()
    assert settings.max_workers == 1
    assert settings.fft_min_taps == 64
    assert settings.level == logging.DEBUG
