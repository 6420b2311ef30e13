import numpy as np
import pytest

from stmdplus.errors import InvalidSpecError
from stmdplus.evaluation import weber_contrast
from stmdplus.synth import SequenceSpec, generate_sequence, load_sequence_spec, make_background


def test_static_scene_frames_are_identical(sequence_factory):
    seq = sequence_factory(background="generated", view_w=64, view_h=32, bg_velocity=0, target_velocity=0, frames=6)
    frames = list(seq.frames())
    assert len(frames) == 6
    for frame in frames[1:]:
        np.testing.assert_array_equal(frame, frames[0])


def test_ground_truth_matches_composited_block(sequence_factory):
    seq = sequence_factory(
        background="uniform:200",
        view_w=120,
        view_h=40,
        bg_velocity=0,
        target_w=5,
        target_h=3,
        target_luminance=0,
        target_velocity=250,
        start_x=20,
        start_y=20,
        frames=40,
    )
    assert len(seq.ground_truth) == 40
    for t, frame in enumerate(seq.frames()):
        ys, xs = np.nonzero(frame == 0)
        point = seq.ground_truth.at(t)
        assert xs.size == 15
        assert point.x == pytest.approx(xs.mean())
        assert point.y == pytest.approx(ys.mean())


def test_target_moves_at_requested_velocity(sequence_factory):
    seq = sequence_factory(background="uniform:255", view_w=200, view_h=30, bg_velocity=0, start_x=20, start_y=15, frames=401)
    assert seq.ground_truth.at(0).x == 20
    assert seq.ground_truth.at(400).x == 120


def test_background_pans_with_nearest_pixel_offset(sequence_factory):
    seq = sequence_factory(
        background="generated", view_w=64, view_h=32, bg_velocity=250, target_velocity=0, start_x=50, start_y=16, frames=20
    )
    first, later = seq.frame(0), seq.frame(8)
    assert seq.bg_offset(8) == 2
    # content moved two pixels to the right, away from the target
    np.testing.assert_array_equal(later[:5, 2:40], first[:5, 0:38])


def test_leftward_background_and_wraparound(sequence_factory):
    seq = sequence_factory(
        background="generated", view_w=64, view_h=32, bg_width=70, bg_velocity=-1000, target_velocity=0,
        start_x=50, start_y=16, frames=100,
    )
    width = seq.background.shape[1]
    assert width == 70
    np.testing.assert_array_equal(seq.frame(70)[:5, :20], seq.frame(0)[:5, :20])
    np.testing.assert_array_equal(seq.frame(3)[:5, 0:20], seq.frame(0)[:5, 3:23])


def test_generation_is_deterministic(sequence_factory):
    a = sequence_factory(background="generated", view_w=80, view_h=40, frames=5, seed=3, start_x=20)
    b = sequence_factory(background="generated", view_w=80, view_h=40, frames=5, seed=3, start_x=20)
    c = sequence_factory(background="generated", view_w=80, view_h=40, frames=5, seed=4, start_x=20)
    np.testing.assert_array_equal(a.frame(4), b.frame(4))
    assert not np.array_equal(a.frame(4), c.frame(4))


def test_target_leaving_the_frame_is_rejected():
    spec = SequenceSpec(background="uniform:128", view_w=60, view_h=20, bg_velocity=0, start_x=50, start_y=10, frames=100)
    with pytest.raises(InvalidSpecError, match="frame"):
        generate_sequence(spec)


def test_path_waypoints():
    spec = SequenceSpec(
        background="uniform:128", view_w=100, view_h=100, bg_velocity=0, target_velocity=1000,
        path="10 10; 40 10; 40 50", frames=100,
    )
    seq = generate_sequence(spec)
    assert (seq.ground_truth.at(20).x, seq.ground_truth.at(20).y) == (30, 10)
    assert (seq.ground_truth.at(50).x, seq.ground_truth.at(50).y) == (40, 30)
    # rests at the last waypoint
    assert (seq.ground_truth.at(99).x, seq.ground_truth.at(99).y) == (40, 50)


def test_onset_delays_target_and_ground_truth():
    seq = generate_sequence(
        SequenceSpec(background="uniform:90", view_w=50, view_h=20, bg_velocity=0, start_x=10, start_y=10, frames=10, onset=4)
    )
    assert seq.ground_truth.at(3) is None
    assert seq.ground_truth.at(4).t == 4
    assert np.all(seq.frame(3) == 90)


def test_black_target_on_grey_background_weber_contrast():
    seq = generate_sequence(
        SequenceSpec(background="uniform:128", view_w=60, view_h=40, bg_velocity=0, target_velocity=0, start_x=30, start_y=20, frames=1)
    )
    point = seq.ground_truth.at(0)
    rect = (int(point.x) - 2, int(point.y) - 2, 5, 5)
    assert weber_contrast(seq.frame(0), rect) == pytest.approx(128 / 255)


def test_make_background_features_respect_clear_rows():
    plain = make_background(300, 80, features=0, seed=5)
    cluttered = make_background(300, 80, features=25, seed=5, clear_rows=(30, 50))
    changed = np.nonzero(plain != cluttered)
    assert changed[0].size > 0
    assert not np.any((changed[0] >= 30) & (changed[0] < 50))
    assert cluttered.min() >= 0 and cluttered.max() <= 255
    np.testing.assert_array_equal(cluttered, np.rint(cluttered))
    # features are darker than their surroundings
    assert np.all(cluttered[changed] < plain[changed])


def test_spec_validation_errors():
    with pytest.raises(InvalidSpecError):
        SequenceSpec.from_mapping({"rate": "0"})
    with pytest.raises(InvalidSpecError):
        SequenceSpec.from_mapping({"target_luminance": "300"})
    with pytest.raises(InvalidSpecError):
        SequenceSpec.from_mapping({"colour": "red"})
    with pytest.raises(InvalidSpecError):
        SequenceSpec.from_mapping({"path": "1 2 3"})


def test_load_sequence_spec_file(tmp_path):
    path = tmp_path / "seq.txt"
    path.write_text(
        "# initial sequence\n"
        "background = uniform:255\n"
        "bg_velocity = 0\n"
        "target_w = 3\n"
        "target_velocity = 100\n"
        "frames = 50\n"
        "rate = 1000\n"
        "seed = 9\n"
        "clear_rows = 10:20\n",
        encoding="utf-8",
    )
    spec = load_sequence_spec(path, {"target_h": "7"})
    assert spec.target_w == 3 and spec.target_h == 7
    assert spec.clear_rows == (10, 20)
    assert spec.uniform_level == 255
