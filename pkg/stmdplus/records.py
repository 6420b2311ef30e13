"""
CSV records: detections, ground truth, ROC points, traces, tuning curves,
direction and layer profiles and stage timings.

Numbers are written as integers when integral and as the shortest round-trip
float text otherwise, so identical inputs give byte-identical files.
"""
import csv
import io
import logging
import math
import os
from pathlib import Path
from typing import Callable, Dict, Iterable, List, NamedTuple, Optional, Sequence, TextIO, Tuple, Type, Union

from .errors import FrameIOError, InvalidParameterError
from .synth import GroundTruth, GroundTruthPoint

logger = logging.getLogger(__name__)

Sink = Union[Path, str, TextIO]


class DetectionRecord(NamedTuple):
    frame: int
    x: int
    y: int
    theta_deg: float
    response: float
    trace_id: int
    label: str


class RocPoint(NamedTuple):
    beta: float
    detection_rate: float
    false_alarm_rate: float


class TraceRecord(NamedTuple):
    trace_id: int
    label: str
    length: int
    first_frame: int
    last_frame: int
    sd: Optional[Tuple[float, float, float, float]]


class TuningPoint(NamedTuple):
    axis: str
    value: float
    mean_response: float


class DirectionRecord(NamedTuple):
    frame: int
    x: int
    y: int
    responses: Tuple[float, ...]
    direction_deg: Optional[float]


class LayerRow(NamedTuple):
    x: int
    input: float
    ommatidia: float
    lmc: float
    tm3: float
    tm2: float
    mi1: float
    tm1_fast: float
    tm1_slow: float
    stmd: float
    inhibited: float


class StageTiming(NamedTuple):
    stage: str
    seconds_per_frame: float


DETECTION_HEADER = ["frame", "x", "y", "theta_deg", "response", "trace_id", "label"]
GROUND_TRUTH_HEADER = ["frame", "x", "y"]
ROC_HEADER = ["beta", "detection_rate", "false_alarm_rate"]
TRACE_HEADER = ["trace_id", "label", "length", "first_frame", "last_frame", "sd_0", "sd_45", "sd_90", "sd_135"]
TUNING_HEADER = ["axis", "value", "mean_response"]
DIRECTION_HEADER = ["frame", "x", "y"] + [f"e_{deg}" for deg in range(0, 360, 45)] + ["direction_deg"]
LAYER_HEADER = list(LayerRow._fields)
BENCH_HEADER = ["stage", "seconds_per_frame"]


def format_number(value: Optional[float]) -> str:
    if value is None:
        return ""
    number = float(value)
    if not math.isfinite(number):
        raise InvalidParameterError(f"cannot write non-finite value {value!r}")
    if number.is_integer() and abs(number) < 2**53:
        return str(int(number))
    return repr(number)


def _detection_row(r: DetectionRecord) -> List[str]:
    return [str(r.frame), str(r.x), str(r.y), format_number(r.theta_deg), format_number(r.response), str(r.trace_id), r.label]


def _ground_truth_row(p: GroundTruthPoint) -> List[str]:
    return [str(p.t), format_number(p.x), format_number(p.y)]


def _roc_row(p: RocPoint) -> List[str]:
    return [format_number(p.beta), format_number(p.detection_rate), format_number(p.false_alarm_rate)]


def _trace_row(r: TraceRecord) -> List[str]:
    sd = [format_number(v) for v in r.sd] if r.sd is not None else [""] * 4
    return [str(r.trace_id), r.label, str(r.length), str(r.first_frame), str(r.last_frame)] + sd


def _tuning_row(p: TuningPoint) -> List[str]:
    return [p.axis, format_number(p.value), format_number(p.mean_response)]


def _direction_row(r: DirectionRecord) -> List[str]:
    return [str(r.frame), str(r.x), str(r.y)] + [format_number(v) for v in r.responses] + [format_number(r.direction_deg)]


def _layer_row(r: LayerRow) -> List[str]:
    return [str(r.x)] + [format_number(v) for v in r[1:]]


def _bench_row(r: StageTiming) -> List[str]:
    return [r.stage, format_number(r.seconds_per_frame)]


_FORMATS: Dict[type, Tuple[List[str], Callable[..., List[str]]]] = {
    DetectionRecord: (DETECTION_HEADER, _detection_row),
    GroundTruthPoint: (GROUND_TRUTH_HEADER, _ground_truth_row),
    RocPoint: (ROC_HEADER, _roc_row),
    TraceRecord: (TRACE_HEADER, _trace_row),
    TuningPoint: (TUNING_HEADER, _tuning_row),
    DirectionRecord: (DIRECTION_HEADER, _direction_row),
    LayerRow: (LAYER_HEADER, _layer_row),
    StageTiming: (BENCH_HEADER, _bench_row),
}


def render_csv(header: Sequence[str], rows: Iterable[Sequence[str]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _atomic_write(target: Path, content: str) -> None:
    tmp = target.with_suffix(f"{target.suffix}.tmp")
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        tmp.write_text(content, encoding="utf-8", newline="")
        os.replace(tmp, target)
    except OSError as exc:
        raise FrameIOError(f"cannot write {target}: {exc}") from None
    finally:
        try:
            if tmp.exists():
                tmp.unlink()
        except OSError:
            pass


def write_records(records: Iterable[NamedTuple], sink: Sink, kind: Optional[Type] = None) -> None:
    """
    Write one homogeneous list of records as CSV to a path (atomically) or an open text stream.

    `kind` selects the header when the list may be empty; otherwise it is taken from the first record.
    """
    items = list(records)
    record_type = kind if kind is not None else (type(items[0]) if items else None)
    if record_type is None:
        raise InvalidParameterError("cannot infer the CSV format of an empty record list; pass kind")
    if record_type not in _FORMATS:
        raise InvalidParameterError(f"no CSV format for {record_type.__name__}")
    header, to_row = _FORMATS[record_type]
    for item in items:
        if not isinstance(item, record_type):
            raise InvalidParameterError(f"mixed record types: {type(item).__name__} among {record_type.__name__}")
    content = render_csv(header, (to_row(item) for item in items))
    if hasattr(sink, "write"):
        sink.write(content)  # type: ignore[union-attr]
        return
    _atomic_write(Path(sink), content)
    logger.debug("[records] wrote %d %s rows to %s", len(items), record_type.__name__, sink)


def write_ground_truth(gt: GroundTruth, sink: Sink) -> None:
    write_records(list(gt), sink, kind=GroundTruthPoint)


def _read_rows(path: Union[Path, str], header: Sequence[str]) -> List[Dict[str, str]]:
    path = Path(path)
    try:
        with path.open("r", encoding="utf-8", newline="") as f:
            reader = csv.DictReader(f)
            fieldnames = reader.fieldnames
            rows = list(reader)
    except (OSError, UnicodeDecodeError) as exc:
        raise FrameIOError(f"cannot read {path}: {exc}") from None
    if fieldnames != list(header):
        raise FrameIOError(f"{path}: expected header {','.join(header)}, got {','.join(fieldnames or [])}")
    return rows


def _parse(path: Union[Path, str], lineno: int, parse: Callable[[], NamedTuple]) -> NamedTuple:
    try:
        return parse()
    except (KeyError, TypeError, ValueError) as exc:
        raise FrameIOError(f"{path}: malformed row {lineno}: {exc}") from None


def _optional_float(text: str) -> Optional[float]:
    return float(text) if text != "" else None


def read_detections(path: Union[Path, str]) -> List[DetectionRecord]:
    rows = _read_rows(path, DETECTION_HEADER)
    return [
        _parse(
            path,
            i + 2,
            lambda r=r: DetectionRecord(
                int(r["frame"]), int(r["x"]), int(r["y"]), float(r["theta_deg"]), float(r["response"]), int(r["trace_id"]), r["label"]
            ),
        )
        for i, r in enumerate(rows)
    ]


def read_ground_truth(path: Union[Path, str]) -> GroundTruth:
    rows = _read_rows(path, GROUND_TRUTH_HEADER)
    points = [
        _parse(path, i + 2, lambda r=r: GroundTruthPoint(int(r["frame"]), float(r["x"]), float(r["y"])))
        for i, r in enumerate(rows)
    ]
    return GroundTruth(points)


def read_roc(path: Union[Path, str]) -> List[RocPoint]:
    rows = _read_rows(path, ROC_HEADER)
    return [
        _parse(
            path,
            i + 2,
            lambda r=r: RocPoint(float(r["beta"]), float(r["detection_rate"]), float(r["false_alarm_rate"])),
        )
        for i, r in enumerate(rows)
    ]


def read_traces(path: Union[Path, str]) -> List[TraceRecord]:
    def build(r: Dict[str, str]) -> TraceRecord:
        sds = [_optional_float(r[k]) for k in TRACE_HEADER[5:]]
        sd = None if any(v is None for v in sds) else tuple(sds)
        return TraceRecord(int(r["trace_id"]), r["label"], int(r["length"]), int(r["first_frame"]), int(r["last_frame"]), sd)

    rows = _read_rows(path, TRACE_HEADER)
    return [_parse(path, i + 2, lambda r=r: build(r)) for i, r in enumerate(rows)]
