import io

import numpy as np
import pytest
from PIL import Image

from stmdplus.errors import FrameIOError, InvalidParameterError
from stmdplus.frames import list_frame_files, load_image, read_frames, write_frames
from stmdplus.records import (
    DETECTION_HEADER,
    DetectionRecord,
    RocPoint,
    TraceRecord,
    format_number,
    read_detections,
    read_ground_truth,
    read_roc,
    read_traces,
    write_ground_truth,
    write_records,
)
from stmdplus.synth import GroundTruth, GroundTruthPoint


def test_write_and_read_frames(tmp_path, rng):
    frames = [rng.integers(0, 256, size=(12, 16)).astype(float) for _ in range(3)]
    paths = write_frames(frames, tmp_path / "frames")
    assert [p.name for p in paths] == ["000000.pgm", "000001.pgm", "000002.pgm"]
    back = list(read_frames(tmp_path / "frames"))
    assert len(back) == 3
    for a, b in zip(frames, back):
        np.testing.assert_array_equal(a, b)


def test_frames_are_read_in_name_order(tmp_path):
    for name, value in [("b.png", 20), ("a.png", 10), ("c.pgm", 30)]:
        Image.fromarray(np.full((4, 4), value, dtype=np.uint8)).save(tmp_path / name)
    (tmp_path / "notes.txt").write_text("ignored")
    values = [frame[0, 0] for frame in read_frames(tmp_path)]
    assert values == [10, 20, 30]


def test_manifest_source(tmp_path):
    Image.fromarray(np.full((4, 4), 5, dtype=np.uint8)).save(tmp_path / "x.png")
    Image.fromarray(np.full((4, 4), 6, dtype=np.uint8)).save(tmp_path / "y.png")
    manifest = tmp_path / "list.txt"
    manifest.write_text("# order\ny.png\nx.png\n")
    assert [f[0, 0] for f in read_frames(manifest)] == [6, 5]


def test_size_mismatch_names_the_file(tmp_path):
    Image.fromarray(np.zeros((4, 4), dtype=np.uint8)).save(tmp_path / "000000.png")
    Image.fromarray(np.zeros((5, 4), dtype=np.uint8)).save(tmp_path / "000001.png")
    with pytest.raises(FrameIOError, match="000001.png"):
        list(read_frames(tmp_path))


def test_unreadable_and_missing_sources(tmp_path):
    (tmp_path / "000000.pgm").write_bytes(b"not an image")
    with pytest.raises(FrameIOError, match="000000.pgm"):
        list(read_frames(tmp_path))
    with pytest.raises(FrameIOError):
        list_frame_files(tmp_path / "missing")
    empty = tmp_path / "empty"
    empty.mkdir()
    with pytest.raises(FrameIOError):
        list_frame_files(empty)


def test_colour_frames_use_rec601_luma(tmp_path):
    rgb = np.zeros((2, 2, 3), dtype=np.uint8)
    rgb[0, 0] = (200, 100, 50)
    Image.fromarray(rgb).save(tmp_path / "c.png")
    lum = load_image(tmp_path / "c.png")
    assert lum[0, 0] == pytest.approx(0.299 * 200 + 0.587 * 100 + 0.114 * 50)
    assert lum[1, 1] == 0


def test_sixteen_bit_frames_are_scaled_to_eight_bit_range(tmp_path):
    wide = np.array([[0, 32768], [65535, 257]], dtype=np.uint16)
    Image.fromarray(wide).save(tmp_path / "w.png")
    lum = load_image(tmp_path / "w.png")
    np.testing.assert_allclose(lum, [[0.0, 32768 * 255 / 65535], [255.0, 1.0]])


def test_format_number():
    assert format_number(3.0) == "3"
    assert format_number(0.85) == "0.85"
    assert format_number(None) == ""
    with pytest.raises(InvalidParameterError):
        format_number(float("nan"))


def test_empty_detection_list_is_header_only(tmp_path):
    path = tmp_path / "det.csv"
    write_records([], path, kind=DetectionRecord)
    assert path.read_text() == ",".join(DETECTION_HEADER) + "\n"
    assert read_detections(path) == []
    with pytest.raises(InvalidParameterError):
        write_records([], tmp_path / "x.csv")


def test_one_detection_is_two_lines(tmp_path):
    path = tmp_path / "det.csv"
    record = DetectionRecord(frame=12, x=40, y=7, theta_deg=45, response=1234.5, trace_id=3, label="target")
    write_records([record], path)
    lines = path.read_text().splitlines()
    assert lines == [",".join(DETECTION_HEADER), "12,40,7,45,1234.5,3,target"]
    assert read_detections(path) == [record]


def test_ground_truth_roc_and_trace_files(tmp_path):
    gt = GroundTruth([GroundTruthPoint(0, 10.0, 5.0), GroundTruthPoint(1, 10.5, 5.0)])
    write_ground_truth(gt, tmp_path / "gt.csv")
    assert (tmp_path / "gt.csv").read_text() == "frame,x,y\n0,10,5\n1,10.5,5\n"
    assert read_ground_truth(tmp_path / "gt.csv").at(1).x == 10.5

    roc = [RocPoint(150, 0.85, 27.7), RocPoint(250, 0.5, 0.0)]
    write_records(roc, tmp_path / "roc.csv")
    assert read_roc(tmp_path / "roc.csv") == roc

    traces = [TraceRecord(1, "fake", 12, 0, 11, (0.5, 1.0, 0.25, 2.0)), TraceRecord(2, "target", 3, 4, 6, None)]
    write_records(traces, tmp_path / "traces.csv")
    assert read_traces(tmp_path / "traces.csv") == traces
    assert not list(tmp_path.glob("*.tmp"))


def test_stream_sink_and_mixed_records():
    buf = io.StringIO()
    write_records([RocPoint(1.0, 1.0, 0.0)], buf)
    assert buf.getvalue() == "beta,detection_rate,false_alarm_rate\n1,1,0\n"
    with pytest.raises(InvalidParameterError):
        write_records([RocPoint(1.0, 1.0, 0.0), GroundTruthPoint(0, 1.0, 1.0)], io.StringIO())


def test_reader_rejects_wrong_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(FrameIOError):
        read_roc(path)
