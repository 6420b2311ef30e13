"""
Per-frame detection loop: motion pathway, optional contrast pathway, candidate
caching and the mushroom-body trace/classification stage.

A run is split in two passes. `collect_candidates` streams the frames once and
keeps, per post-warm-up frame, every local maximum of the response field above
a floor together with its direction and contrast values. `track_candidates`
then thresholds that cache at any beta >= floor, links traces and labels them,
which gives exactly what a full rerun at that beta would give.
"""
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np

from .config import get_run_dir
from .contrast import ContrastPathway
from .errors import FrameIOError, InvalidParameterError, InvalidStateError, UndefinedDirectionError
from .frames import read_frames
from .kernels import DIRECTIONS
from .motion import MotionOutput, MotionPathway, estimate_direction
from .mushroom import (
    LABEL_TARGET,
    LABEL_UNDECIDED,
    Detection,
    Trace,
    TraceStore,
    classify,
    local_maxima,
    max_response,
    sample_contrast,
    trace_sd,
)
from .params import ClassifierParams, PipelineParams, RunConfig
from .records import DetectionRecord, DirectionRecord, LayerRow, StageTiming, TraceRecord, write_records
from .synth import GroundTruth

logger = logging.getLogger(__name__)

STAGES = ("ommatidia", "lmc", "medulla", "stmd", "inhibition", "contrast", "mushroom")


@dataclass
class FrameCandidates:
    """Local maxima of one frame above the cache floor, strongest first."""

    t: int
    xs: np.ndarray
    ys: np.ndarray
    response: np.ndarray
    theta_index: np.ndarray
    contrast: Optional[np.ndarray] = None  # (candidates, orientations)

    def __len__(self) -> int:
        return int(self.xs.size)

    def detections(self, beta: float) -> List[Detection]:
        keep = np.nonzero(self.response > beta)[0]
        return [
            Detection(
                t=self.t,
                x=int(self.xs[i]),
                y=int(self.ys[i]),
                theta=DIRECTIONS[int(self.theta_index[i])],
                response=float(self.response[i]),
            )
            for i in keep
        ]

    def contrast_source(self) -> "CachedContrast":
        return CachedContrast(self)


class CachedContrast:
    """Contrast values of one frame, available at candidate pixels only."""

    def __init__(self, candidates: FrameCandidates) -> None:
        if candidates.contrast is None:
            raise InvalidStateError(f"frame {candidates.t} was collected without the contrast pathway")
        self.t = candidates.t
        self._values = {
            (int(x), int(y)): candidates.contrast[i]
            for i, (x, y) in enumerate(zip(candidates.xs, candidates.ys))
        }

    def value_at(self, x: int, y: int) -> np.ndarray:
        try:
            return self._values[(x, y)].copy()
        except KeyError:
            raise InvalidStateError(f"no cached contrast at ({x}, {y}) in frame {self.t}") from None


class StmdPlusEngine:
    """
    One streaming pipeline instance; frames must be stepped strictly in order.
    """

    def __init__(self, params: PipelineParams, contrast_pathway: bool = True, nms_radius: int = 5) -> None:
        self.params = params
        self.nms_radius = nms_radius
        self.motion = MotionPathway(params)
        self.contrast = ContrastPathway(params.eta, params.alpha2, params.contrast_window) if contrast_pathway else None
        self.timings = self.motion.timings

    @property
    def warmup_frames(self) -> int:
        return self.motion.warmup_frames

    @property
    def frames_seen(self) -> int:
        return self.motion.frames_seen

    def step(self, raw: np.ndarray, floor: float) -> Tuple[MotionOutput, Optional[FrameCandidates]]:
        """Advance one frame; candidates are None during warm-up."""
        out = self.motion.step(raw)
        if out.warm_up:
            return out, None
        clock = time.perf_counter()
        M, arg = max_response(out.E)
        peaks = local_maxima(M, self.nms_radius, floor)
        ys = np.fromiter((p[0] for p in peaks), dtype=np.int64, count=len(peaks))
        xs = np.fromiter((p[1] for p in peaks), dtype=np.int64, count=len(peaks))
        candidates = FrameCandidates(
            t=out.t, xs=xs, ys=ys, response=M[ys, xs], theta_index=arg[ys, xs].astype(np.int64)
        )
        now = time.perf_counter()
        self.timings["mushroom"] += now - clock
        if self.contrast is not None and len(candidates):
            candidates.contrast = self.contrast.compute(out.P, out.t).sample(xs, ys)
            self.timings["contrast"] += time.perf_counter() - now
        elif self.contrast is not None:
            candidates.contrast = np.zeros((0, 4), dtype=np.float64)
        return out, candidates


@dataclass
class CandidateCache:
    floor: float
    warmup_frames: int
    n_frames: int
    shape: Tuple[int, int]
    contrast_pathway: bool
    frames: List[FrameCandidates] = field(default_factory=list)
    timings: Dict[str, float] = field(default_factory=dict)

    @property
    def scored_frames(self) -> List[int]:
        return [fc.t for fc in self.frames]

    def max_response(self) -> float:
        return max((float(fc.response[0]) for fc in self.frames if len(fc)), default=0.0)


def collect_candidates(
    frames: Iterable[np.ndarray],
    params: PipelineParams,
    floor: float,
    contrast_pathway: bool = True,
    nms_radius: int = 5,
) -> CandidateCache:
    if floor <= 0:
        raise InvalidParameterError(f"candidate floor must be > 0, got {floor}")
    engine = StmdPlusEngine(params, contrast_pathway, nms_radius)
    collected: List[FrameCandidates] = []
    shape: Optional[Tuple[int, int]] = None
    for raw in frames:
        out, candidates = engine.step(raw, floor)
        if shape is None:
            shape = out.P.shape
        if candidates is not None:
            collected.append(candidates)
            logger.debug("[engine] frame %d: %d candidates", out.t, len(candidates))
    if shape is None:
        raise FrameIOError("no frames to process")
    if not collected:
        logger.warning(
            "[engine] all %d frames fall inside the %d-frame warm-up; nothing is scored",
            engine.frames_seen,
            engine.warmup_frames,
        )
    return CandidateCache(
        floor=floor,
        warmup_frames=engine.warmup_frames,
        n_frames=engine.frames_seen,
        shape=shape,
        contrast_pathway=contrast_pathway,
        frames=collected,
        timings=dict(engine.timings),
    )


@dataclass
class TrackingResult:
    beta: float
    traces: List[Trace]
    detections: List[Tuple[Detection, Trace]]
    contrast_pathway: bool
    scored_frames: List[int]

    def scored_detections(self, include_undecided: bool = False) -> List[Detection]:
        accepted = {LABEL_TARGET, LABEL_UNDECIDED} if include_undecided else {LABEL_TARGET}
        return [det for det, trace in self.detections if trace.label in accepted]

    def detection_records(self) -> List[DetectionRecord]:
        return [
            DetectionRecord(
                frame=det.t,
                x=det.x,
                y=det.y,
                theta_deg=45 * det.theta_index,
                response=det.response,
                trace_id=trace.trace_id,
                label=trace.label,
            )
            for det, trace in self.detections
        ]

    def trace_records(self, m: int) -> List[TraceRecord]:
        out = []
        for trace in self.traces:
            sd = trace_sd(trace, m) if self.contrast_pathway else None
            out.append(
                TraceRecord(
                    trace_id=trace.trace_id,
                    label=trace.label,
                    length=len(trace),
                    first_frame=trace.first_frame,
                    last_frame=trace.last_frame,
                    sd=None if sd is None else tuple(float(v) for v in sd),
                )
            )
        return out


def track_candidates(
    cache: CandidateCache, beta: float, classifier: ClassifierParams, contrast_pathway: Optional[bool] = None
) -> TrackingResult:
    """
    Threshold the cache at beta, link traces and label them with their end-of-run class.

    `contrast_pathway=False` replays a cache collected with contrast values as an ablation run.
    """
    use_contrast = cache.contrast_pathway if contrast_pathway is None else contrast_pathway
    if use_contrast and not cache.contrast_pathway:
        raise InvalidStateError("candidates were collected without the contrast pathway")
    if beta <= 0:
        raise InvalidParameterError(f"beta must be > 0, got {beta}")
    if beta < cache.floor:
        raise InvalidParameterError(f"beta {beta} is below the cached floor {cache.floor}; recollect candidates")
    store = TraceStore(classifier)
    joined: List[Tuple[Detection, Trace]] = []
    for fc in cache.frames:
        dets = fc.detections(beta)
        traces = store.update(dets, fc.t)
        if use_contrast and dets:
            source = fc.contrast_source()
            for trace in traces:
                sample_contrast(trace, source)
        joined.extend(zip(dets, traces))
    traces = store.close()
    for trace in traces:
        trace.label = classify(trace, classifier) if use_contrast else LABEL_TARGET
    counts: Dict[str, int] = {}
    for trace in traces:
        counts[trace.label] = counts.get(trace.label, 0) + 1
    logger.debug("[engine] beta=%g: %d detections, traces %s", beta, len(joined), counts)
    return TrackingResult(
        beta=beta,
        traces=traces,
        detections=joined,
        contrast_pathway=use_contrast,
        scored_frames=cache.scored_frames,
    )


def detect_sequence(
    frames: Iterable[np.ndarray], params: PipelineParams, classifier: ClassifierParams, contrast_pathway: bool = True
) -> TrackingResult:
    beta = params.require_beta()
    cache = collect_candidates(frames, params, beta, contrast_pathway, classifier.nms_radius)
    return track_candidates(cache, beta, classifier)


@dataclass
class RunOutputs:
    result: TrackingResult
    detections_path: Path
    traces_path: Path


def run(config: RunConfig, frames: Optional[Iterable[np.ndarray]] = None) -> RunOutputs:
    """Detect over the configured frames and write detections.csv and traces.csv."""
    if frames is None:
        if config.frames is None:
            raise InvalidParameterError("no frame source configured (set 'frames')")
        frames = read_frames(config.frames)
    out_dir = config.output if config.output is not None else get_run_dir("run")
    started = time.perf_counter()
    result = detect_sequence(frames, config.pipeline, config.classifier, config.contrast_pathway)
    detections_path = Path(out_dir) / "detections.csv"
    traces_path = Path(out_dir) / "traces.csv"
    write_records(result.detection_records(), detections_path, kind=DetectionRecord)
    write_records(result.trace_records(config.classifier.m), traces_path, kind=TraceRecord)
    logger.info(
        "[engine] %d detections in %d traces over %d scored frames (%.1fs); wrote %s",
        len(result.detections),
        len(result.traces),
        len(result.scored_frames),
        time.perf_counter() - started,
        out_dir,
    )
    return RunOutputs(result, detections_path, traces_path)


def _window_argmax(M: np.ndarray, cx: float, cy: float, radius: float) -> Optional[Tuple[int, int]]:
    """(x, y) of the largest M within `radius` of (cx, cy); None when the window misses the frame."""
    h, w = M.shape
    x_lo, x_hi = max(int(math.floor(cx - radius)), 0), min(int(math.ceil(cx + radius)), w - 1)
    y_lo, y_hi = max(int(math.floor(cy - radius)), 0), min(int(math.ceil(cy + radius)), h - 1)
    if x_lo > x_hi or y_lo > y_hi:
        return None
    yy, xx = np.mgrid[y_lo : y_hi + 1, x_lo : x_hi + 1]
    inside = (xx - cx) ** 2 + (yy - cy) ** 2 <= radius * radius
    if not inside.any():
        return None
    window = np.where(inside, M[y_lo : y_hi + 1, x_lo : x_hi + 1], -np.inf)
    iy, ix = np.unravel_index(int(np.argmax(window)), window.shape)
    return x_lo + int(ix), y_lo + int(iy)


def window_response(E: np.ndarray, cx: float, cy: float, radius: float) -> float:
    M = E.max(axis=0)
    pos = _window_argmax(M, cx, cy, radius)
    return 0.0 if pos is None else float(M[pos[1], pos[0]])


def direction_profile(
    frames: Iterable[np.ndarray], ground_truth: GroundTruth, params: PipelineParams, radius: float = 5.0
) -> List[DirectionRecord]:
    """Eight directional responses at the strongest pixel near the ground truth, per scored frame."""
    motion = MotionPathway(params)
    rows: List[DirectionRecord] = []
    for raw in frames:
        out = motion.step(raw)
        point = ground_truth.at(out.t)
        if out.warm_up or point is None:
            continue
        pos = _window_argmax(out.E.max(axis=0), point.x, point.y, radius)
        if pos is None:
            continue
        values = tuple(float(v) for v in out.E[:, pos[1], pos[0]])
        try:
            direction: Optional[float] = math.degrees(estimate_direction(values))
        except UndefinedDirectionError:
            direction = None
        rows.append(DirectionRecord(out.t, pos[0], pos[1], values, direction))
    return rows


def layer_profile(frames: Iterable[np.ndarray], params: PipelineParams, frame: int, row: int) -> List[LayerRow]:
    """Every stage's values along one image row at one frame; STMD stages report theta = 0."""
    motion = MotionPathway(params)
    for raw in frames:
        out = motion.step(raw)
        if out.t < frame:
            continue
        h, w = out.P.shape
        if not 0 <= row < h:
            raise InvalidParameterError(f"row {row} outside a {h}-row frame")
        med = out.medulla
        stages = [out.raw, out.P, out.L, med.tm3, med.tm2, med.mi1, med.tm1_fast, med.tm1_slow, out.D[0], out.E[0]]
        return [LayerRow(x, *(float(s[row, x]) for s in stages)) for x in range(w)]
    raise InvalidParameterError(f"frame {frame} is beyond the end of the sequence")


def bench(
    frames: Iterable[np.ndarray], params: PipelineParams, classifier: ClassifierParams, contrast_pathway: bool = True
) -> List[StageTiming]:
    """Mean wall time per frame of every stage over one detection run."""
    beta = params.require_beta()
    cache = collect_candidates(frames, params, beta, contrast_pathway, classifier.nms_radius)
    started = time.perf_counter()
    track_candidates(cache, beta, classifier)
    timings = dict(cache.timings)
    timings["mushroom"] = timings.get("mushroom", 0.0) + time.perf_counter() - started
    n = max(cache.n_frames, 1)
    return [StageTiming(stage, timings.get(stage, 0.0) / n) for stage in STAGES]
