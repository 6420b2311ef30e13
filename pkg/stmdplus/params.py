"""
Validated run parameters and the `key = value` config-file loader.
"""
import logging
from pathlib import Path
from typing import Dict, Iterable, Mapping, Optional, Tuple

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigError

_logger = logging.getLogger(__name__)


class PipelineParams(BaseModel):
    """Motion/contrast pathway parameters; defaults are the reference model values."""

    model_config = ConfigDict(extra="forbid", frozen=True, allow_inf_nan=False)

    sigma1: float = Field(1.0, gt=0)
    n1: int = Field(2, ge=1)
    tau1: float = Field(3.0, gt=0)
    n2: int = Field(6, ge=1)
    tau2: float = Field(9.0, gt=0)
    alpha1: int = Field(3, ge=1)
    n3: int = Field(3, ge=1)
    tau3: float = Field(15.0, gt=0)
    n4: int = Field(5, ge=1)
    tau4: float = Field(25.0, gt=0)
    n5: int = Field(8, ge=1)
    tau5: float = Field(40.0, gt=0)
    A: float = 1.0
    B: float = 3.0
    e: float = 1.0
    rho: float = 0.0
    sigma2: float = Field(1.5, gt=0)
    sigma3: float = Field(3.0, gt=0)
    eta: float = Field(1.5, gt=0)
    alpha2: int = Field(3, ge=1)
    # disk radius of the per-orientation max taken before contrast is sampled on a trace
    contrast_window: int = Field(5, ge=0)
    beta: Optional[float] = Field(None, ge=0)
    mass_eps: float = Field(1e-3, gt=0, le=0.01)

    @model_validator(mode="after")
    def validate_sigmas(self) -> "PipelineParams":
        if self.sigma3 <= self.sigma2:
            raise ValueError("sigma3 must be greater than sigma2")
        return self

    def require_beta(self) -> float:
        if self.beta is None:
            raise ConfigError("detection threshold 'beta' is not configured (no default exists)")
        return float(self.beta)


class ClassifierParams(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True, allow_inf_nan=False)

    gamma: float = Field(10.0, gt=0)
    m: int = Field(1000, ge=1)
    match_radius: float = Field(8.0, ge=1)
    max_gap: int = Field(3, ge=1)
    nms_radius: int = Field(5, ge=1)
    min_length: Optional[int] = Field(None, ge=1)

    @field_validator("m")
    @classmethod
    def warn_small_m(cls, v: int) -> int:
        if v < 200:
            _logger.warning("[params] m=%d is below 200 samples; contrast SD may be unstable", v)
        return v

    @property
    def min_trace_length(self) -> int:
        return self.min_length if self.min_length is not None else self.m


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    pipeline: PipelineParams = PipelineParams()
    classifier: ClassifierParams = ClassifierParams()
    contrast_pathway: bool = True
    include_undecided: bool = False
    eval_radius: float = Field(5.0, gt=0)
    frames: Optional[Path] = None
    ground_truth: Optional[Path] = None
    output: Optional[Path] = None

    @classmethod
    def from_mapping(cls, values: Mapping[str, object]) -> "RunConfig":
        """Build from flat config keys (`sigma1`, `gamma`, `contrast_pathway`, ...)."""
        pipeline_keys = set(PipelineParams.model_fields)
        classifier_keys = set(ClassifierParams.model_fields)
        top_keys = set(cls.model_fields) - {"pipeline", "classifier"}
        pipeline: Dict[str, object] = {}
        classifier: Dict[str, object] = {}
        top: Dict[str, object] = {}
        for key, value in values.items():
            if key in pipeline_keys:
                pipeline[key] = value
            elif key in classifier_keys:
                classifier[key] = value
            elif key in top_keys:
                top[key] = value
            else:
                raise ConfigError(f"unknown config key '{key}'")
        try:
            return cls(
                pipeline=PipelineParams(**pipeline),
                classifier=ClassifierParams(**classifier),
                **top,
            )
        except ValidationError as exc:
            raise ConfigError(_describe(exc)) from None

    def with_overrides(self, values: Mapping[str, object]) -> "RunConfig":
        merged = self.flat()
        merged.update(values)
        return RunConfig.from_mapping(merged)

    def flat(self) -> Dict[str, object]:
        out: Dict[str, object] = {}
        out.update(self.pipeline.model_dump(exclude_none=True))
        out.update(self.classifier.model_dump(exclude_none=True))
        out.update(self.model_dump(exclude={"pipeline", "classifier"}, exclude_none=True))
        return out


def _describe(exc: ValidationError) -> str:
    parts = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err.get("loc", ())) or "value"
        parts.append(f"{loc}: {err.get('msg')}")
    return "invalid configuration: " + "; ".join(parts)


def parse_overrides(items: Iterable[str]) -> Dict[str, str]:
    """Parse repeated `key=value` CLI overrides; later entries win."""
    out: Dict[str, str] = {}
    for item in items:
        key, sep, value = item.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"override '{item}' is not of the form key=value")
        out[key] = value.strip()
    return out


def read_key_values(path: Path) -> Dict[str, str]:
    """Read a UTF-8 `key = value` file (with # comments) without touching os.environ."""
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = dotenv_values(path, encoding="utf-8", interpolate=False)
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    values: Dict[str, str] = {}
    for key, value in raw.items():
        if value is None:
            raise ConfigError(f"config key '{key}' in {path} has no value")
        values[key] = value
    return values


def load_run_config(path: Optional[Path] = None, overrides: Optional[Mapping[str, str]] = None) -> RunConfig:
    values: Dict[str, object] = {}
    if path is not None:
        values.update(read_key_values(Path(path)))
        _logger.debug("[params] loaded %d keys from %s", len(values), path)
    if overrides:
        values.update(overrides)
    return RunConfig.from_mapping(values)


def parse_number_list(text: str, sep: str = ",") -> Tuple[float, ...]:
    """Parse a comma-separated list of numbers such as a beta list or sweep grid."""
    items = [chunk.strip() for chunk in text.split(sep) if chunk.strip()]
    try:
        return tuple(float(item) for item in items)
    except ValueError:
        raise ConfigError(f"expected a list of numbers, got '{text}'") from None
