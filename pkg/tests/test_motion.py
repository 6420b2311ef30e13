import math

import numpy as np
import pytest

from stmdplus.errors import InvalidParameterError, InvalidStateError, UndefinedDirectionError
from stmdplus.kernels import DIRECTIONS, FrameHistory, bandpass_kernel, inhibition_kernel
from stmdplus.motion import (
    MedullaOutput,
    MedullaState,
    MotionPathway,
    estimate_direction,
    lateral_inhibit,
    lmc,
    medulla,
    ommatidia,
    partner_offset,
    shift_zero,
    stmd_correlate,
)


def test_ommatidia_keeps_uniform_frames():
    out = ommatidia(np.full((20, 30), 90.0))
    np.testing.assert_allclose(out, 90.0, atol=1e-12)


def test_lmc_rejects_constant_input_once_history_is_full(rng):
    kernel = bandpass_kernel(2, 3.0, 6, 9.0)
    history = FrameHistory(kernel.length)
    frame = rng.uniform(0, 255, size=(6, 6))
    for _ in range(kernel.length):
        history.push(frame)
    assert np.abs(lmc(history, kernel)).max() < 1e-9


def test_lmc_sign_follows_luminance_change():
    kernel = bandpass_kernel(2, 3.0, 6, 9.0)
    history = FrameHistory(kernel.length)
    for _ in range(kernel.length):
        history.push(np.full((3, 3), 100.0))
    for _ in range(3):
        history.push(np.full((3, 3), 200.0))
    assert lmc(history, kernel)[1, 1] > 0


def test_lmc_goes_negative_as_a_dark_block_enters():
    kernel = bandpass_kernel(2, 3.0, 6, 9.0)
    history = FrameHistory(kernel.length)
    for _ in range(kernel.length):
        history.push(np.full((20, 20), 255.0))
    # 5x5 black block sliding right one pixel a frame; it has covered column 10 for the last four frames
    for lead in range(7, 14):
        frame = np.full((20, 20), 255.0)
        frame[8:13, lead - 4 : lead + 1] = 0.0
        history.push(frame)
    L = lmc(history, kernel)
    assert L[10, 10] < 0
    assert abs(L[10, 15]) < 1e-9


def test_medulla_rectifies_and_tracks_frames(params):
    state = MedullaState.from_params(params)
    L = np.array([[1.5, -2.0], [0.0, 3.0]])
    out = medulla(L, state, 0)
    np.testing.assert_array_equal(out.tm3, [[1.5, 0.0], [0.0, 3.0]])
    np.testing.assert_array_equal(out.tm2, [[0.0, 2.0], [0.0, 0.0]])
    # the delayed channels have no mass at lag 0
    assert np.all(out.mi1 == 0) and np.all(out.tm1_fast == 0)
    with pytest.raises(InvalidStateError):
        medulla(L, state, 5)
    assert medulla(L, state).t == 1


def test_partner_sits_upstream_of_the_preferred_direction():
    assert partner_offset(0.0, 3) == (-3, 0)
    assert partner_offset(math.pi / 2, 3) == (0, -3)
    assert partner_offset(5 * math.pi / 4, 3) == (2, 2)


def test_shift_zero_reads_offset_pixels_and_zero_fills():
    field = np.arange(12, dtype=float).reshape(3, 4)
    out = shift_zero(field, -1, 0)
    # out[y, x] = field[y, x - 1]
    np.testing.assert_array_equal(out[:, 1:], field[:, :-1])
    np.testing.assert_array_equal(out[:, 0], 0.0)
    assert np.all(shift_zero(field, 4, 0) == 0)


def test_stmd_correlate_combines_channels_at_pixel_and_partner():
    shape = (5, 9)
    tm3 = np.zeros(shape)
    tm3[2, 5] = 2.0
    tm1_fast = np.zeros(shape)
    tm1_fast[2, 5] = 0.5
    mi1 = np.zeros(shape)
    mi1[2, 2] = 1.5
    tm1_slow = np.zeros(shape)
    tm1_slow[2, 2] = 4.0
    med = MedullaOutput(t=0, tm3=tm3, tm2=np.zeros(shape), mi1=mi1, tm1_fast=tm1_fast, tm1_slow=tm1_slow)
    D = stmd_correlate(med, 0.0, 3)
    assert D[2, 5] == pytest.approx(2.0 * (0.5 + 1.5) * 4.0)
    assert np.count_nonzero(D) == 1
    # the opposite direction looks for its partner at x + 3
    assert np.count_nonzero(stmd_correlate(med, math.pi, 3)) == 0


def test_stmd_correlate_rejects_unknown_direction():
    med = MedullaOutput(0, *(np.zeros((4, 4)) for _ in range(5)))
    with pytest.raises(InvalidParameterError):
        stmd_correlate(med, 0.3, 3)


def test_lateral_inhibition_suppresses_wide_responses():
    kernel = inhibition_kernel(1.5, 3.0)
    wide = lateral_inhibit(np.ones((40, 40)), kernel)
    assert np.all(wide == 0)
    point = np.zeros((40, 40))
    point[20, 20] = 1.0
    small = lateral_inhibit(point, kernel)
    assert small[20, 20] > 0
    assert np.all(small >= 0)


def test_stripe_interior_is_inhibited_more_than_a_blob():
    kernel = inhibition_kernel(1.5, 3.0)
    stripe = np.zeros((60, 60))
    stripe[28:33, :] = 1.0
    blob = np.zeros((60, 60))
    blob[28:33, 28:33] = 1.0
    blob_response = lateral_inhibit(blob, kernel)[30, 30]
    assert blob_response > 0
    assert lateral_inhibit(stripe, kernel)[30, 30] < blob_response


@pytest.mark.parametrize("k", range(8))
def test_estimate_direction_of_single_response(k):
    values = np.zeros(8)
    values[k] = 3.0
    assert estimate_direction(values) == pytest.approx(DIRECTIONS[k], abs=1e-12)


def test_estimate_direction_vector_sum():
    assert estimate_direction([1, 0, 1, 0, 0, 0, 0, 0]) == pytest.approx(math.pi / 4)
    angle = estimate_direction([1, 0, 0, 0, 0, 0, 0, 1])
    assert 0 <= angle < 2 * math.pi
    assert angle == pytest.approx(2 * math.pi - math.pi / 8)


def test_estimate_direction_errors():
    with pytest.raises(UndefinedDirectionError):
        estimate_direction(np.zeros(8))
    with pytest.raises(InvalidParameterError):
        estimate_direction([1.0, 2.0])


def test_static_scene_gives_no_response_after_warm_up(params, rng):
    motion = MotionPathway(params)
    frame = rng.integers(0, 256, size=(125, 250)).astype(float)
    peak = 0.0
    for _ in range(200):
        out = motion.step(frame)
        if not out.warm_up:
            peak = max(peak, float(np.abs(out.E).max()))
    assert motion.frames_seen == 200
    assert 0 < motion.warmup_frames < 200
    assert peak < 1e-6


def test_rightward_target_prefers_theta_zero(params, small_target_sequence):
    motion = MotionPathway(params)
    gt = small_target_sequence.ground_truth
    wins = total = 0
    for raw in small_target_sequence.frames():
        out = motion.step(raw)
        if out.warm_up:
            continue
        point = gt.at(out.t)
        x, y = int(round(point.x)), int(round(point.y))
        window = out.E[:, y - 4 : y + 5, x - 4 : x + 5]
        best = np.unravel_index(int(np.argmax(window.max(axis=0))), window.shape[1:])
        values = window[:, best[0], best[1]]
        total += 1
        wins += int(np.argmax(values) == 0)
    assert total > 0
    assert wins >= 0.9 * total


def test_pathway_records_stage_timings(params, rng):
    motion = MotionPathway(params)
    for _ in range(3):
        motion.step(rng.uniform(0, 255, size=(24, 24)))
    assert set(motion.timings) == {"ommatidia", "lmc", "medulla", "stmd", "inhibition"}
