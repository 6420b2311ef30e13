"""
Synthetic sequences: a panning background with a small solid target block
composited along a path, plus the matching ground truth.
"""
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Mapping, NamedTuple, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import InvalidParameterError, InvalidSpecError
from .frames import load_image
from .params import read_key_values

logger = logging.getLogger(__name__)

DEFAULT_VIEW = (500, 250)  # (width, height) of generated and uniform backgrounds

FEATURE_SIDES = (2, 6)
FEATURE_SPACING = 12.0
FEATURE_DARKENING = 0.7


def _parse_path(value: object) -> object:
    if not isinstance(value, str):
        return value
    points = []
    for chunk in value.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        parts = chunk.replace(",", " ").split()
        if len(parts) != 2:
            raise ValueError(f"waypoint '{chunk}' is not of the form 'x y'")
        points.append((float(parts[0]), float(parts[1])))
    return points


def _parse_rows(value: object) -> object:
    if not isinstance(value, str):
        return value
    lo, sep, hi = value.partition(":")
    if not sep:
        raise ValueError(f"row band '{value}' is not of the form lo:hi")
    return (int(lo), int(hi))


class SequenceSpec(BaseModel):
    """One synthetic sequence; positions are in view-window pixels, velocities in px/s."""

    model_config = ConfigDict(extra="forbid", frozen=True, allow_inf_nan=False)

    background: str = "generated"
    bg_velocity: float = 250.0
    target_w: int = Field(5, ge=1)
    target_h: int = Field(5, ge=1)
    target_luminance: float = Field(0.0, ge=0, le=255)
    target_velocity: float = Field(250.0, ge=0)
    target_direction: float = 0.0
    path: Optional[List[Tuple[float, float]]] = None
    start_x: Optional[float] = None
    start_y: Optional[float] = None
    onset: int = Field(0, ge=0)
    frames: int = Field(1000, ge=1)
    rate: float = Field(1000.0, gt=0)
    seed: int = 0
    view_w: Optional[int] = Field(None, ge=8)
    view_h: Optional[int] = Field(None, ge=8)
    bg_width: Optional[int] = Field(None, ge=8)
    features: int = Field(30, ge=0)
    clear_rows: Optional[Tuple[int, int]] = None

    @field_validator("path", mode="before")
    @classmethod
    def parse_path(cls, v: object) -> object:
        return _parse_path(v)

    @field_validator("clear_rows", mode="before")
    @classmethod
    def parse_rows(cls, v: object) -> object:
        return _parse_rows(v)

    @field_validator("background")
    @classmethod
    def validate_background(cls, v: str) -> str:
        v = v.strip()
        if not v:
            raise ValueError("background must name an image, 'generated' or 'uniform:<level>'")
        if v.startswith("uniform:"):
            level = float(v.split(":", 1)[1])
            if not 0 <= level <= 255:
                raise ValueError("uniform background level must lie in [0, 255]")
        return v

    @model_validator(mode="after")
    def validate_layout(self) -> "SequenceSpec":
        if self.path is not None and not self.path:
            raise ValueError("path needs at least one waypoint")
        if self.clear_rows is not None and not 0 <= self.clear_rows[0] < self.clear_rows[1]:
            raise ValueError("clear_rows must satisfy 0 <= lo < hi")
        if self.onset >= self.frames:
            raise ValueError("onset must be earlier than the last frame")
        return self

    @property
    def uniform_level(self) -> Optional[float]:
        if self.background.startswith("uniform:"):
            return float(self.background.split(":", 1)[1])
        return None

    @property
    def is_image(self) -> bool:
        return self.background != "generated" and self.uniform_level is None

    @property
    def pan_distance(self) -> int:
        return int(math.ceil(abs(self.bg_velocity) * self.frames / self.rate))

    @classmethod
    def from_mapping(cls, values: Mapping[str, object]) -> "SequenceSpec":
        try:
            return cls(**dict(values))
        except ValidationError as exc:
            parts = []
            for err in exc.errors():
                loc = ".".join(str(p) for p in err.get("loc", ())) or "value"
                parts.append(f"{loc}: {err.get('msg')}")
            raise InvalidSpecError("invalid sequence spec: " + "; ".join(parts)) from None

    def with_overrides(self, values: Mapping[str, object]) -> "SequenceSpec":
        merged: Dict[str, object] = self.model_dump(exclude_none=True)
        merged.update(values)
        return SequenceSpec.from_mapping(merged)

    def target_centre(self, t: int, view_size: Tuple[int, int]) -> Tuple[float, float]:
        """Nominal (sub-pixel) target centre at frame t in a view of (width, height)."""
        travelled = self.target_velocity * max(t - self.onset, 0) / self.rate
        if self.path:
            return _along_polyline(self.path, travelled)
        view_w, view_h = view_size
        sx = self.start_x if self.start_x is not None else view_w / 3.0
        sy = self.start_y if self.start_y is not None else view_h / 2.0
        angle = math.radians(self.target_direction)
        return sx + travelled * math.cos(angle), sy + travelled * math.sin(angle)

    def view_size_hint(self) -> Tuple[int, int]:
        w = self.view_w if self.view_w is not None else DEFAULT_VIEW[0]
        h = self.view_h if self.view_h is not None else DEFAULT_VIEW[1]
        return w, h


def _along_polyline(points: List[Tuple[float, float]], distance: float) -> Tuple[float, float]:
    x, y = points[0]
    remaining = distance
    for nx, ny in points[1:]:
        seg = math.hypot(nx - x, ny - y)
        if seg > 0 and remaining <= seg:
            f = remaining / seg
            return x + f * (nx - x), y + f * (ny - y)
        remaining -= seg
        x, y = nx, ny
    return x, y


class GroundTruthPoint(NamedTuple):
    t: int
    x: float
    y: float


@dataclass
class GroundTruth:
    """Target centre per frame from onset on."""

    points: List[GroundTruthPoint] = field(default_factory=list)

    def __post_init__(self) -> None:
        self._by_frame = {p.t: p for p in self.points}

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self) -> Iterator[GroundTruthPoint]:
        return iter(self.points)

    def at(self, t: int) -> Optional[GroundTruthPoint]:
        return self._by_frame.get(t)


def make_background(
    width: int,
    height: int,
    features: int = 30,
    seed: int = 0,
    clear_rows: Optional[Tuple[int, int]] = None,
) -> np.ndarray:
    """
    Smooth sinusoidal luminance field sprinkled with small dark rectangles.

    Each feature is its local background darkened to 70 %; features keep their
    centres at least 12 px apart and stay out of `clear_rows`.
    """
    if width < 8 or height < 8:
        raise InvalidParameterError(f"background must be at least 8x8, got {width}x{height}")
    rng = np.random.default_rng(seed)
    phi1, phi2 = rng.uniform(0.0, 2.0 * math.pi, size=2)
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    bg = (
        170.0
        + 55.0 * np.sin(2.0 * math.pi * xx / 80.0 + phi1)
        + 25.0 * np.sin(2.0 * math.pi * (xx / 37.0 + yy / 53.0) + phi2)
    )
    bg = np.rint(bg)

    centres: List[Tuple[float, float]] = []
    attempts = 0
    while len(centres) < features and attempts < 200 * max(features, 1):
        attempts += 1
        w, h = (int(v) for v in rng.integers(FEATURE_SIDES[0], FEATURE_SIDES[1] + 1, size=2))
        x0 = int(rng.integers(0, width - w + 1))
        y0 = int(rng.integers(0, height - h + 1))
        if clear_rows is not None and y0 < clear_rows[1] and y0 + h > clear_rows[0]:
            continue
        cx, cy = x0 + (w - 1) / 2.0, y0 + (h - 1) / 2.0
        if any(math.hypot(cx - px, cy - py) < FEATURE_SPACING for px, py in centres):
            continue
        bg[y0 : y0 + h, x0 : x0 + w] = np.rint(FEATURE_DARKENING * bg[y0 : y0 + h, x0 : x0 + w])
        centres.append((cx, cy))
    if len(centres) < features:
        logger.warning("[synth] placed only %d of %d background features", len(centres), features)
    return np.clip(bg, 0.0, 255.0)


class SyntheticSequence:
    """
    Frames are rendered on demand; ground truth and block placement are fixed at construction.
    """

    def __init__(self, spec: SequenceSpec, background: np.ndarray) -> None:
        self.spec = spec
        bg_h, bg_w = background.shape
        if spec.is_image:
            view_w = spec.view_w if spec.view_w is not None else bg_w
            view_h = spec.view_h if spec.view_h is not None else bg_h
        else:
            view_w, view_h = spec.view_size_hint()
        if view_w > bg_w or view_h > bg_h:
            raise InvalidSpecError(f"view {view_w}x{view_h} is larger than the {bg_w}x{bg_h} background")
        top = (bg_h - view_h) // 2
        self.background = np.ascontiguousarray(background[top : top + view_h], dtype=np.float64)
        self.shape = (view_h, view_w)
        self._corners: Dict[int, Tuple[int, int]] = {}
        points = []
        for t in range(spec.onset, spec.frames):
            cx, cy = spec.target_centre(t, (view_w, view_h))
            x0 = int(math.floor(cx - (spec.target_w - 1) / 2.0 + 0.5))
            y0 = int(math.floor(cy - (spec.target_h - 1) / 2.0 + 0.5))
            if x0 < 0 or y0 < 0 or x0 + spec.target_w > view_w or y0 + spec.target_h > view_h:
                raise InvalidSpecError(
                    f"target leaves the {view_w}x{view_h} frame at frame {t} (centre {cx:.2f}, {cy:.2f})"
                )
            self._corners[t] = (x0, y0)
            points.append(
                GroundTruthPoint(t, x0 + (spec.target_w - 1) / 2.0, y0 + (spec.target_h - 1) / 2.0)
            )
        self.ground_truth = GroundTruth(points)

    def __len__(self) -> int:
        return self.spec.frames

    def bg_offset(self, t: int) -> int:
        return int(math.floor(self.spec.bg_velocity * t / self.spec.rate + 0.5))

    def frame(self, t: int) -> np.ndarray:
        if not 0 <= t < self.spec.frames:
            raise InvalidParameterError(f"frame {t} outside a {self.spec.frames}-frame sequence")
        view_h, view_w = self.shape
        cols = (np.arange(view_w) - self.bg_offset(t)) % self.background.shape[1]
        out = self.background[:, cols]
        corner = self._corners.get(t)
        if corner is not None:
            x0, y0 = corner
            out[y0 : y0 + self.spec.target_h, x0 : x0 + self.spec.target_w] = self.spec.target_luminance
        return out

    def frames(self) -> Iterator[np.ndarray]:
        for t in range(self.spec.frames):
            yield self.frame(t)


def _resolve_background(spec: SequenceSpec, base_dir: Optional[Path]) -> np.ndarray:
    view_w, view_h = spec.view_size_hint()
    level = spec.uniform_level
    if level is not None:
        return np.full((view_h, view_w), level, dtype=np.float64)
    if spec.background == "generated":
        width = spec.bg_width if spec.bg_width is not None else view_w + spec.pan_distance + 16
        if width < view_w:
            raise InvalidSpecError(f"bg_width {width} is narrower than the {view_w} px view")
        return make_background(width, view_h, spec.features, spec.seed, spec.clear_rows)
    path = Path(spec.background)
    if not path.is_absolute() and base_dir is not None:
        path = base_dir / path
    return load_image(path)


def generate_sequence(spec: SequenceSpec, base_dir: Optional[Path] = None) -> SyntheticSequence:
    background = _resolve_background(spec, base_dir)
    sequence = SyntheticSequence(spec, background)
    logger.info(
        "[synth] %d frames of %dx%d, target %dx%d at %g px/s, background %g px/s",
        spec.frames,
        sequence.shape[1],
        sequence.shape[0],
        spec.target_w,
        spec.target_h,
        spec.target_velocity,
        spec.bg_velocity,
    )
    return sequence


def load_sequence_spec(path: Path, overrides: Optional[Mapping[str, object]] = None) -> SequenceSpec:
    values: Dict[str, object] = dict(read_key_values(Path(path)))
    if overrides:
        values.update(overrides)
    return SequenceSpec.from_mapping(values)
