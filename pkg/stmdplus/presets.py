import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import yaml
from pydantic import BaseModel, ConfigDict, ValidationError, field_validator

from .config import get_builtin_presets_path, get_presets_root
from .errors import ConfigError, InvalidSpecError
from .evaluation import TUNING_AXES
from .synth import SequenceSpec

_logger = logging.getLogger(__name__)


def _is_safe_name(value: str) -> bool:
    return bool(re.fullmatch(r"[A-Za-z0-9_.-]+", value))


class SequencePreset(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str
    description: str = ""
    spec: Dict[str, object]

    @field_validator("name")
    @classmethod
    def validate_name(cls, v: str) -> str:
        if not _is_safe_name(v):
            raise ValueError("invalid preset name")
        return v

    @field_validator("spec")
    @classmethod
    def validate_spec(cls, v: Dict[str, object]) -> Dict[str, object]:
        try:
            SequenceSpec.from_mapping(v)
        except InvalidSpecError as exc:
            raise ValueError(str(exc)) from None
        return v

    def to_spec(self) -> SequenceSpec:
        return SequenceSpec.from_mapping(self.spec)


class SweepPreset(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str
    description: str = ""
    axis: str
    base: str
    grid: List[float]

    @field_validator("name", "base")
    @classmethod
    def validate_names(cls, v: str) -> str:
        if not _is_safe_name(v):
            raise ValueError("invalid preset name")
        return v

    @field_validator("axis")
    @classmethod
    def validate_axis(cls, v: str) -> str:
        if v not in TUNING_AXES:
            raise ValueError(f"axis must be one of {', '.join(TUNING_AXES)}")
        return v

    @field_validator("grid")
    @classmethod
    def validate_grid(cls, v: List[float]) -> List[float]:
        if not v:
            raise ValueError("grid must not be empty")
        return v


class PresetFile(BaseModel):
    version: int
    sequences: List[SequencePreset] = []
    sweeps: List[SweepPreset] = []


@dataclass
class Presets:
    sequences: Dict[str, SequencePreset] = field(default_factory=dict)
    sweeps: Dict[str, SweepPreset] = field(default_factory=dict)

    def sequence(self, name: str) -> SequenceSpec:
        preset = self.sequences.get(name)
        if preset is None:
            known = ", ".join(sorted(self.sequences)) or "none"
            raise ConfigError(f"unknown sequence preset '{name}' (known: {known})")
        return preset.to_spec()

    def sweep(self, name: str) -> SweepPreset:
        preset = self.sweeps.get(name)
        if preset is None:
            known = ", ".join(sorted(self.sweeps)) or "none"
            raise ConfigError(f"unknown sweep preset '{name}' (known: {known})")
        if preset.base not in self.sequences:
            raise ConfigError(f"sweep '{name}' refers to unknown sequence preset '{preset.base}'")
        return preset


def _load_yaml(path: Path) -> Optional[dict]:
    try:
        with path.open("r", encoding="utf-8") as f:
            data = yaml.safe_load(f) or {}
    except (OSError, yaml.YAMLError) as exc:
        _logger.error("[presets] failed to read preset file %s: %s", path, exc)
        return None
    if not isinstance(data, dict):
        _logger.error("[presets] preset file %s is not a mapping", path)
        return None
    return data


def _parse_presets(data: Optional[dict], source: Path) -> Presets:
    presets = Presets()
    if data is None:
        return presets
    try:
        preset_file = PresetFile(**data)
    except ValidationError as exc:
        _logger.error("[presets] validation failed for %s: %s", source, exc)
        return presets
    if preset_file.version != 1:
        _logger.error("[presets] unsupported preset version %s in %s", preset_file.version, source)
        return presets
    for seq in preset_file.sequences:
        presets.sequences[seq.name] = seq
    for sweep in preset_file.sweeps:
        presets.sweeps[sweep.name] = sweep
    if not presets.sequences and not presets.sweeps:
        _logger.warning("[presets] %s defines no presets", source)
    return presets


def load_builtin_presets() -> Presets:
    builtin_path = get_builtin_presets_path()
    if not builtin_path.exists():
        _logger.error("[presets] built-in preset file missing at %s", builtin_path)
        return Presets()
    return _parse_presets(_load_yaml(builtin_path), builtin_path)


def load_user_presets(root: Optional[Path] = None) -> Presets:
    root = root if root is not None else get_presets_root()
    merged = Presets()
    if not root.is_dir():
        return merged
    for path in sorted(root.glob("*.yml")):
        user = _parse_presets(_load_yaml(path), path)
        merged.sequences.update(user.sequences)
        merged.sweeps.update(user.sweeps)
    return merged


def merge_presets(builtin: Presets, user: Presets) -> Presets:
    return Presets(
        sequences={**builtin.sequences, **user.sequences},
        sweeps={**builtin.sweeps, **user.sweeps},
    )


def load_presets(user_root: Optional[Path] = None) -> Presets:
    return merge_presets(load_builtin_presets(), load_user_presets(user_root))


def summarize_presets(presets: Presets) -> List[Dict[str, object]]:
    items: List[Dict[str, object]] = []
    for preset in sorted(presets.sequences.values(), key=lambda p: p.name.lower()):
        items.append({"kind": "sequence", "name": preset.name, "description": preset.description})
    for sweep in sorted(presets.sweeps.values(), key=lambda p: p.name.lower()):
        grid = ",".join(f"{v:g}" for v in sweep.grid)
        items.append(
            {"kind": "sweep", "name": sweep.name, "description": f"{sweep.description} [{sweep.axis}: {grid}]"}
        )
    return items


def validate_builtin_presets() -> int:
    presets = load_builtin_presets()
    if not presets.sequences:
        raise ConfigError(f"no built-in presets loaded from {get_builtin_presets_path()}")
    for name in presets.sweeps:
        presets.sweep(name)
    return len(presets.sequences) + len(presets.sweeps)
