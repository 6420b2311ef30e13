"""
Mushroom body: point detections, motion traces, contrast sampling along traces
and the target / fake-feature decision.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Protocol, Sequence, Tuple

import numpy as np
from scipy import ndimage

from .errors import InvalidParameterError, InvalidStateError
from .kernels import DIRECTIONS, disk_footprint
from .params import ClassifierParams

logger = logging.getLogger(__name__)

LABEL_UNDECIDED = "undecided"
LABEL_TARGET = "target"
LABEL_FAKE = "fake"
LABELS = (LABEL_TARGET, LABEL_FAKE, LABEL_UNDECIDED)


@dataclass(frozen=True)
class Detection:
    t: int
    x: int
    y: int
    theta: float
    response: float

    @property
    def theta_index(self) -> int:
        return int(round(self.theta / (math.pi / 4))) % len(DIRECTIONS)


class TracePoint(NamedTuple):
    t: int
    x: int
    y: int
    theta: float


@dataclass
class Trace:
    trace_id: int
    points: List[TracePoint] = field(default_factory=list)
    samples: List[np.ndarray] = field(default_factory=list)
    label: str = LABEL_UNDECIDED
    finalized: bool = False

    def __len__(self) -> int:
        return len(self.points)

    @property
    def last(self) -> TracePoint:
        return self.points[-1]

    @property
    def first_frame(self) -> int:
        return self.points[0].t

    @property
    def last_frame(self) -> int:
        return self.points[-1].t

    def extend(self, det: Detection) -> None:
        if self.points and det.t <= self.last.t:
            raise InvalidStateError(f"trace {self.trace_id}: point at frame {det.t} after frame {self.last.t}")
        self.points.append(TracePoint(det.t, det.x, det.y, det.theta))

    def sample_array(self) -> np.ndarray:
        if not self.samples:
            return np.zeros((0, 4), dtype=np.float64)
        return np.vstack(self.samples)


class ContrastSource(Protocol):
    """Anything that yields the four orientation values of one frame at a pixel."""

    t: int

    def value_at(self, x: int, y: int) -> np.ndarray: ...


def max_response(E: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Per-pixel maximum over directions and its argmax (first, i.e. smallest theta, on ties)."""
    return E.max(axis=0), E.argmax(axis=0)


def local_maxima(M: np.ndarray, radius: int, floor: float) -> List[Tuple[int, int]]:
    """
    Pixels above `floor` holding the maximum of M within a disk of `radius`.

    Returned as (y, x), strongest first. Equal maxima closer than `radius`
    keep only the first in raster order.
    """
    footprint = disk_footprint(radius)
    neighbourhood = ndimage.maximum_filter(M, footprint=footprint, mode="constant", cval=-np.inf)
    ys, xs = np.nonzero((M >= neighbourhood) & (M > floor))
    if ys.size == 0:
        return []
    order = np.lexsort((xs, ys, -M[ys, xs]))
    kept: List[Tuple[int, int]] = []
    kept_arr = np.zeros((0, 2), dtype=np.int64)
    limit = float(radius) ** 2
    for idx in order:
        y, x = int(ys[idx]), int(xs[idx])
        if kept_arr.size:
            d2 = (kept_arr[:, 0] - y) ** 2 + (kept_arr[:, 1] - x) ** 2
            if np.any(d2 <= limit):
                continue
        kept.append((y, x))
        kept_arr = np.vstack([kept_arr, [y, x]])
    return kept


def detect(E: np.ndarray, beta: float, nms_radius: int = 5, t: int = 0) -> List[Detection]:
    """Threshold the directional response field (directions, H, W) into point detections."""
    if beta <= 0:
        raise InvalidParameterError(f"beta must be > 0, got {beta}")
    M, arg = max_response(np.asarray(E, dtype=np.float64))
    return [
        Detection(t=t, x=x, y=y, theta=DIRECTIONS[int(arg[y, x])], response=float(M[y, x]))
        for y, x in local_maxima(M, nms_radius, beta)
    ]


def match_detections(
    positions: Sequence[Tuple[float, float]], detections: Sequence[Detection], radius: float
) -> Dict[int, int]:
    """
    Greedy nearest pairing of trace positions with detections within `radius`.

    Pairs are accepted in order of (distance, trace index, detection index) while both
    ends are still free, so every accepted pair is mutually nearest among the free items.
    Returns {trace index: detection index}.
    """
    pairs = []
    for ti, (tx, ty) in enumerate(positions):
        for di, det in enumerate(detections):
            dist = math.hypot(det.x - tx, det.y - ty)
            if dist <= radius:
                pairs.append((dist, ti, di))
    pairs.sort()
    assigned: Dict[int, int] = {}
    taken = set()
    for _, ti, di in pairs:
        if ti in assigned or di in taken:
            continue
        assigned[ti] = di
        taken.add(di)
    return assigned


class TraceStore:
    """
    Single-owner set of motion traces, updated strictly in frame order.
    """

    def __init__(self, params: ClassifierParams) -> None:
        self.params = params
        self.live: List[Trace] = []
        self.finished: List[Trace] = []
        self.last_t: Optional[int] = None
        self._next_id = 1

    @property
    def traces(self) -> List[Trace]:
        return sorted(self.finished + self.live, key=lambda tr: tr.trace_id)

    def _retire(self, t: int) -> None:
        still_live = []
        for trace in self.live:
            if t - trace.last_frame > self.params.max_gap:
                trace.finalized = True
                self.finished.append(trace)
            else:
                still_live.append(trace)
        self.live = still_live

    def update(self, detections: Sequence[Detection], t: int) -> List[Trace]:
        """Link this frame's detections; returns the trace each detection joined, in detection order."""
        if self.last_t is not None and t <= self.last_t:
            raise InvalidStateError(f"trace update for frame {t} after frame {self.last_t}")
        for det in detections:
            if det.t != t:
                raise InvalidStateError(f"detection from frame {det.t} passed with frame {t}")
        self._retire(t)
        positions = [(tr.last.x, tr.last.y) for tr in self.live]
        assigned = match_detections(positions, detections, self.params.match_radius)
        owner: Dict[int, Trace] = {di: self.live[ti] for ti, di in assigned.items()}
        joined: List[Trace] = []
        for di, det in enumerate(detections):
            trace = owner.get(di)
            if trace is None:
                trace = Trace(trace_id=self._next_id)
                self._next_id += 1
                self.live.append(trace)
            trace.extend(det)
            joined.append(trace)
        self.last_t = t
        return joined

    def close(self) -> List[Trace]:
        for trace in self.live:
            trace.finalized = True
        self.finished.extend(self.live)
        self.live = []
        return self.traces


def update_traces(store: TraceStore, detections: Sequence[Detection], t: int) -> List[Trace]:
    """Advance `store` to frame t; returns every trace (live and finished) by id."""
    store.update(detections, t)
    return store.traces


def sample_contrast(trace: Trace, source: ContrastSource) -> Trace:
    """Append Q(t, phi) for the trace's newest point."""
    if not trace.points:
        raise InvalidStateError(f"trace {trace.trace_id} has no points to sample")
    point = trace.last
    if source.t != point.t:
        raise InvalidStateError(
            f"contrast field of frame {source.t} does not match trace {trace.trace_id} point at frame {point.t}"
        )
    if len(trace.samples) != len(trace.points) - 1:
        raise InvalidStateError(f"trace {trace.trace_id} already holds a contrast sample for frame {point.t}")
    trace.samples.append(np.asarray(source.value_at(point.x, point.y), dtype=np.float64))
    return trace


def contrast_sd(samples: np.ndarray) -> np.ndarray:
    """Population standard deviation per orientation, two-pass."""
    q = np.asarray(samples, dtype=np.float64)
    if q.ndim != 2 or q.shape[0] == 0:
        raise InvalidParameterError("contrast SD needs a non-empty (samples, orientations) array")
    mean = q.sum(axis=0) / q.shape[0]
    return np.sqrt(((q - mean) ** 2).sum(axis=0) / q.shape[0])


def trace_sd(trace: Trace, m: int) -> Optional[np.ndarray]:
    """
    SD over the last min(m, length) samples, or None when none of them holds contrast.

    Samples taken inside the frame-border margin are NaN and left out.
    """
    if not trace.samples:
        return None
    recent = trace.sample_array()[-m:]
    recent = recent[np.all(np.isfinite(recent), axis=1)]
    if recent.shape[0] == 0:
        return None
    return contrast_sd(recent)


def classify(trace: Trace, params: ClassifierParams) -> str:
    if len(trace) < params.min_trace_length or not trace.samples:
        return LABEL_UNDECIDED
    sd = trace_sd(trace, params.m)
    if sd is None:
        return LABEL_UNDECIDED
    return LABEL_TARGET if float(np.max(sd)) > params.gamma else LABEL_FAKE
