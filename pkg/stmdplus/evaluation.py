"""
Scoring against ground truth, ROC sweeps, Weber contrast and tuning curves.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .app_settings import app_settings
from .engine import CandidateCache, collect_candidates, track_candidates, window_response
from .errors import InvalidParameterError, InvalidSpecError
from .motion import MotionPathway
from .mushroom import Detection
from .params import ClassifierParams, PipelineParams
from .records import RocPoint, TuningPoint
from .synth import GroundTruth, SequenceSpec, generate_sequence

logger = logging.getLogger(__name__)

TUNING_AXES = ("contrast", "velocity", "width", "height")


@dataclass(frozen=True)
class EvalResult:
    true_detections: int
    actual_targets: int
    false_detections: int
    frames: int

    @property
    def detection_rate(self) -> float:
        return self.true_detections / self.actual_targets if self.actual_targets else 0.0

    @property
    def false_alarm_rate(self) -> float:
        return self.false_detections / self.frames if self.frames else 0.0


def match_and_score(
    detections: Iterable[Detection],
    gt: GroundTruth,
    radius: float = 5.0,
    frames: Optional[Sequence[int]] = None,
) -> EvalResult:
    """
    Count true and false detections per frame.

    The detection nearest the ground truth within `radius` is the single true detection
    of its frame; every other detection is false. `frames` lists the scored frames
    (default: every ground-truth frame); detections outside them are ignored.
    """
    scored = sorted(set(frames)) if frames is not None else sorted(p.t for p in gt)
    scored_set = set(scored)
    per_frame: Dict[int, List[Detection]] = {}
    for det in detections:
        if det.t in scored_set:
            per_frame.setdefault(det.t, []).append(det)

    true_count = 0
    false_count = 0
    targets = 0
    for t in scored:
        dets = per_frame.get(t, [])
        point = gt.at(t)
        hit = False
        if point is not None:
            targets += 1
            hit = any(math.hypot(d.x - point.x, d.y - point.y) <= radius for d in dets)
        true_count += int(hit)
        false_count += len(dets) - int(hit)
    return EvalResult(true_count, targets, false_count, len(scored))


def roc_from_cache(
    cache: CandidateCache,
    gt: GroundTruth,
    betas: Sequence[float],
    classifier: ClassifierParams,
    radius: float = 5.0,
    include_undecided: bool = False,
) -> List[RocPoint]:
    _check_betas(betas)
    points = []
    for beta in betas:
        result = track_candidates(cache, beta, classifier)
        score = match_and_score(result.scored_detections(include_undecided), gt, radius, cache.scored_frames)
        logger.info(
            "[eval] beta=%g: D_R=%.4f F_A=%.4f (%d/%d true, %d false)",
            beta,
            score.detection_rate,
            score.false_alarm_rate,
            score.true_detections,
            score.actual_targets,
            score.false_detections,
        )
        points.append(RocPoint(float(beta), score.detection_rate, score.false_alarm_rate))
    return points


def roc_sweep(
    frames: Iterable[np.ndarray],
    gt: GroundTruth,
    betas: Sequence[float],
    params: PipelineParams,
    classifier: ClassifierParams,
    contrast_pathway: bool = True,
    radius: float = 5.0,
    include_undecided: bool = False,
) -> List[RocPoint]:
    """One pass over the frames, thresholded post hoc at every beta."""
    _check_betas(betas)
    cache = collect_candidates(frames, params, betas[0], contrast_pathway, classifier.nms_radius)
    return roc_from_cache(cache, gt, betas, classifier, radius, include_undecided)


def _check_betas(betas: Sequence[float]) -> None:
    if not betas:
        raise InvalidParameterError("beta list is empty")
    if betas[0] <= 0:
        raise InvalidParameterError(f"beta values must be > 0, got {betas[0]}")
    for lo, hi in zip(betas, betas[1:]):
        if hi <= lo:
            raise InvalidParameterError(f"beta list must be strictly increasing ({lo} then {hi})")


def weber_contrast(frame: np.ndarray, rect: Tuple[int, int, int, int], margin: int = 10) -> float:
    """
    |mean(target) - mean(surround)| / 255 for rect = (x, y, w, h).

    The surround is the ring of `margin` pixels around the rectangle.
    """
    img = np.asarray(frame, dtype=np.float64)
    x, y, w, h = (int(v) for v in rect)
    if w < 1 or h < 1 or margin < 1:
        raise InvalidParameterError(f"invalid target rect {rect} or margin {margin}")
    height, width = img.shape
    if x - margin < 0 or y - margin < 0 or x + w + margin > width or y + h + margin > height:
        raise InvalidParameterError(f"target rect {rect} with margin {margin} does not fit a {width}x{height} frame")
    outer = img[y - margin : y + h + margin, x - margin : x + w + margin]
    inner = img[y : y + h, x : x + w]
    mu_t = inner.mean()
    mu_b = (outer.sum() - inner.sum()) / (outer.size - inner.size)
    return abs(mu_t - mu_b) / 255.0


def _spec_for(axis: str, value: float, base: SequenceSpec) -> SequenceSpec:
    if axis == "contrast":
        level = base.uniform_level
        if level is None:
            raise InvalidSpecError("the contrast axis needs a uniform:<level> background")
        return base.with_overrides({"target_luminance": level - value * 255.0})
    if axis == "velocity":
        return base.with_overrides({"target_velocity": value})
    if axis == "width":
        return base.with_overrides({"target_w": int(round(value))})
    if axis == "height":
        return base.with_overrides({"target_h": int(round(value))})
    raise InvalidParameterError(f"unknown tuning axis '{axis}' (expected one of {', '.join(TUNING_AXES)})")


def mean_target_response(spec: SequenceSpec, params: PipelineParams, radius: float = 5.0) -> float:
    """Mean over scored frames of the largest response near the target centre."""
    sequence = generate_sequence(spec)
    window = radius + max(spec.target_w, spec.target_h) / 2.0
    motion = MotionPathway(params)
    total = 0.0
    count = 0
    for raw in sequence.frames():
        out = motion.step(raw)
        point = sequence.ground_truth.at(out.t)
        if out.warm_up or point is None:
            continue
        total += window_response(out.E, point.x, point.y, window)
        count += 1
    if count == 0:
        raise InvalidSpecError(f"{spec.frames} frames do not outlast the {motion.warmup_frames}-frame warm-up")
    return total / count


def tuning_experiment(
    axis: str,
    grid: Sequence[float],
    base: SequenceSpec,
    params: PipelineParams,
    radius: float = 5.0,
    max_workers: Optional[int] = None,
) -> List[TuningPoint]:
    """Mean target response for every grid value; output follows grid order."""
    if axis not in TUNING_AXES:
        raise InvalidParameterError(f"unknown tuning axis '{axis}' (expected one of {', '.join(TUNING_AXES)})")
    specs = [_spec_for(axis, value, base) for value in grid]
    workers = max_workers if max_workers is not None else app_settings.max_workers
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        responses = list(pool.map(lambda spec: mean_target_response(spec, params, radius), specs))
    for value, response in zip(grid, responses):
        logger.info("[eval] %s=%g: mean response %.6g", axis, value, response)
    return [TuningPoint(axis, float(value), float(response)) for value, response in zip(grid, responses)]
