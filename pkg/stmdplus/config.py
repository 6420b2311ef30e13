import os
from pathlib import Path
from typing import List, Union


def _env_path(keys: List[str], default: Union[Path, str]) -> Path:
    """
    Return the first set environment variable from `keys` as a Path; otherwise return `default` as a Path.
    """
    for key in keys:
        val = os.getenv(key)
        if val:
            return Path(val)
    return Path(default)


def get_root() -> Path:
    """
    Project root (parent of the stmdplus package), unless overridden by STMDPLUS_ROOT.
    """
    pkg_root = Path(__file__).resolve().parent.parent
    return _env_path(["STMDPLUS_ROOT"], pkg_root)


def get_output_root() -> Path:
    """
    Default directory for run outputs (detections, traces, ROC and tuning CSVs).
    """
    return _env_path(["STMDPLUS_OUTPUT_ROOT"], get_root() / "output")


def get_presets_root() -> Path:
    """
    Directory holding user preset files (*.yml) that extend or override the built-ins.
    """
    return _env_path(["STMDPLUS_PRESETS_ROOT"], get_root() / "presets")


def get_builtin_presets_path() -> Path:
    return Path(__file__).resolve().parent / "presets" / "builtin.yml"


def get_run_dir(name: str) -> Path:
    """
    Output directory of a named run; callers create it on first write.
    """
    return get_output_root() / name
