"""
Motion pathway: ommatidia blur, LMC band-pass, medulla channels, directional
STMD correlation over eight directions and lateral inhibition.
"""
import logging
import math
import time
from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from .errors import InvalidParameterError, InvalidStateError, UndefinedDirectionError
from .kernels import (
    DIRECTIONS,
    FrameHistory,
    SpatialKernel,
    TemporalKernel,
    bandpass_kernel,
    conv2,
    gamma_kernel,
    gaussian_kernel,
    grid_offset,
    inhibition_kernel,
    match_angle,
    temporal_conv,
    temporal_conv_many,
)
from .params import PipelineParams

logger = logging.getLogger(__name__)


def ommatidia(raw: np.ndarray, sigma1: float = 1.0, kernel: Optional[SpatialKernel] = None) -> np.ndarray:
    return conv2(raw, kernel if kernel is not None else gaussian_kernel(sigma1))


def lmc(history: FrameHistory, kernel: TemporalKernel) -> np.ndarray:
    """Positive where luminance recently increased, negative where it decreased."""
    return temporal_conv(history, kernel)


@dataclass
class MedullaOutput:
    t: int
    tm3: np.ndarray
    tm2: np.ndarray
    mi1: np.ndarray
    tm1_fast: np.ndarray
    tm1_slow: np.ndarray


class MedullaState:
    """Delay lines of the rectified LMC output feeding Mi1 and the two Tm1 channels."""

    def __init__(self, mi1: TemporalKernel, tm1_fast: TemporalKernel, tm1_slow: TemporalKernel) -> None:
        self.mi1_kernel = mi1
        self.tm1_fast_kernel = tm1_fast
        self.tm1_slow_kernel = tm1_slow
        self.tm3_history = FrameHistory(mi1.length)
        self.tm2_history = FrameHistory(max(tm1_fast.length, tm1_slow.length))
        self.frame_index = -1

    @classmethod
    def from_params(cls, params: PipelineParams) -> "MedullaState":
        return cls(
            gamma_kernel(params.n3, params.tau3, params.mass_eps),
            gamma_kernel(params.n4, params.tau4, params.mass_eps),
            gamma_kernel(params.n5, params.tau5, params.mass_eps),
        )

    @property
    def depth(self) -> int:
        return max(self.tm3_history.depth, self.tm2_history.depth)


def medulla(L: np.ndarray, state: MedullaState, t: Optional[int] = None) -> MedullaOutput:
    """Half-wave rectify L into Tm3/Tm2 and advance the Mi1/Tm1 delay lines by one frame."""
    expected = state.frame_index + 1
    if t is None:
        t = expected
    if t != expected:
        raise InvalidStateError(f"medulla expected frame {expected}, got {t}")
    tm3 = np.maximum(L, 0.0)
    tm2 = np.maximum(-L, 0.0)
    state.tm3_history.push(tm3)
    state.tm2_history.push(tm2)
    mi1 = temporal_conv(state.tm3_history, state.mi1_kernel)
    tm1_fast, tm1_slow = temporal_conv_many(state.tm2_history, [state.tm1_fast_kernel, state.tm1_slow_kernel])
    state.frame_index = t
    return MedullaOutput(t=t, tm3=tm3, tm2=tm2, mi1=mi1, tm1_fast=tm1_fast, tm1_slow=tm1_slow)


def partner_offset(theta: float, alpha1: float) -> Tuple[int, int]:
    """
    Pixel offset of the correlation partner for preferred direction theta.

    The partner sits upstream (against theta): the delayed partner signals line up
    with the undelayed Tm3 signal when motion travels from the partner toward (x, y).
    """
    dx, dy = grid_offset(theta, alpha1)
    return -dx, -dy


def shift_zero(field: np.ndarray, dx: int, dy: int) -> np.ndarray:
    """out[y, x] = field[y + dy, x + dx], zero where that pixel is outside the frame."""
    h, w = field.shape[-2], field.shape[-1]
    out = np.zeros_like(field)
    if abs(dx) >= w or abs(dy) >= h:
        return out
    ys_dst = slice(max(0, -dy), h - max(0, dy))
    xs_dst = slice(max(0, -dx), w - max(0, dx))
    ys_src = slice(max(0, dy), h - max(0, -dy))
    xs_src = slice(max(0, dx), w - max(0, -dx))
    out[..., ys_dst, xs_dst] = field[..., ys_src, xs_src]
    return out


def stmd_correlate(med: MedullaOutput, theta: float, alpha1: int) -> np.ndarray:
    match_angle(theta, DIRECTIONS, "theta")
    dx, dy = partner_offset(theta, alpha1)
    mi1_partner = shift_zero(med.mi1, dx, dy)
    tm1_slow_partner = shift_zero(med.tm1_slow, dx, dy)
    return med.tm3 * (med.tm1_fast + mi1_partner) * tm1_slow_partner


def lateral_inhibit(D: np.ndarray, w_s: SpatialKernel) -> np.ndarray:
    """Inhibit each direction plane independently; accepts (H, W) or (directions, H, W)."""
    return np.maximum(conv2(D, w_s), 0.0)


def estimate_direction(values: Sequence[float]) -> float:
    """Angle in [0, 2*pi) of the vector sum of the eight directional responses."""
    responses = np.asarray(values, dtype=np.float64)
    if responses.shape != (len(DIRECTIONS),):
        raise InvalidParameterError(f"expected {len(DIRECTIONS)} directional responses, got shape {responses.shape}")
    if not np.any(responses > 0):
        raise UndefinedDirectionError("all directional responses are zero")
    angles = np.asarray(DIRECTIONS)
    angle = math.atan2(float(np.sum(responses * np.sin(angles))), float(np.sum(responses * np.cos(angles))))
    angle %= 2.0 * math.pi
    return 0.0 if angle >= 2.0 * math.pi else angle


@dataclass
class MotionOutput:
    t: int
    raw: np.ndarray
    P: np.ndarray
    L: np.ndarray
    medulla: MedullaOutput
    D: np.ndarray  # (directions, H, W)
    E: np.ndarray  # (directions, H, W)
    warm_up: bool


class MotionPathway:
    """
    Streaming motion pathway; frames must arrive strictly in order.
    """

    def __init__(self, params: PipelineParams) -> None:
        self.params = params
        self.blur = gaussian_kernel(params.sigma1)
        self.bandpass = bandpass_kernel(params.n1, params.tau1, params.n2, params.tau2, params.mass_eps)
        self.inhibition = inhibition_kernel(params.sigma2, params.sigma3, params.e, params.rho, params.A, params.B)
        self.p_history = FrameHistory(self.bandpass.length)
        self.state = MedullaState.from_params(params)
        self.timings: Dict[str, float] = defaultdict(float)
        self.frames_seen = 0

    @property
    def warmup_frames(self) -> int:
        return self.bandpass.length + self.state.depth

    def step(self, raw: np.ndarray) -> MotionOutput:
        t = self.frames_seen
        clock = time.perf_counter()
        P = ommatidia(raw, kernel=self.blur)
        clock = self._tick("ommatidia", clock)

        self.p_history.push(P)
        L = lmc(self.p_history, self.bandpass)
        clock = self._tick("lmc", clock)

        med = medulla(L, self.state, t)
        clock = self._tick("medulla", clock)

        D = np.stack([stmd_correlate(med, theta, self.params.alpha1) for theta in DIRECTIONS])
        clock = self._tick("stmd", clock)

        E = lateral_inhibit(D, self.inhibition)
        self._tick("inhibition", clock)

        self.frames_seen += 1
        if t == 0:
            logger.debug("[motion] warm-up spans %d frames", self.warmup_frames)
        return MotionOutput(
            t=t,
            raw=np.asarray(raw, dtype=np.float64),
            P=P,
            L=L,
            medulla=med,
            D=D,
            E=E,
            warm_up=t < self.warmup_frames,
        )

    def _tick(self, stage: str, since: float) -> float:
        now = time.perf_counter()
        self.timings[stage] += now - since
        return now
