"""
Discrete spatial and temporal kernels of the model plus the convolution engine.

Spatial arrays are indexed [row, column] = [y, x]; x grows rightward, y downward.
A direction angle maps to the displacement (cos, sin) in (x, y).
"""
import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage, signal, special

from .app_settings import app_settings
from .errors import InvalidParameterError, InvalidStateError

logger = logging.getLogger(__name__)

DIRECTIONS: Tuple[float, ...] = tuple(k * math.pi / 4 for k in range(8))
ORIENTATIONS: Tuple[float, ...] = tuple(k * math.pi / 4 for k in range(4))

DEFAULT_MASS_EPS = 1e-3


def _require_positive(name: str, value: float) -> float:
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise InvalidParameterError(f"{name} must be a number, got {value!r}") from None
    if not math.isfinite(value) or value <= 0:
        raise InvalidParameterError(f"{name} must be finite and > 0, got {value}")
    return value


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=np.float64, copy=True)
    out.setflags(write=False)
    return out


def grid_offset(angle: float, alpha: float) -> Tuple[int, int]:
    """Integer pixel displacement (dx, dy) of length alpha along angle."""
    return int(round(alpha * math.cos(angle))), int(round(alpha * math.sin(angle)))


def disk_footprint(radius: int) -> np.ndarray:
    r = int(radius)
    yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
    return (xx ** 2 + yy ** 2) <= r * r


def match_angle(angle: float, allowed: Sequence[float], name: str) -> int:
    """Index of `angle` within `allowed` (tolerance 1e-9), else InvalidParameterError."""
    for idx, candidate in enumerate(allowed):
        if abs(float(angle) - candidate) <= 1e-9:
            return idx
    allowed_deg = ", ".join(f"{math.degrees(a):g}" for a in allowed)
    raise InvalidParameterError(f"{name} must be one of {{{allowed_deg}}} degrees, got {math.degrees(angle):g}")


@dataclass(frozen=True, eq=False)
class SpatialKernel:
    taps: np.ndarray
    # (column factor, row factor) when taps == outer(column, row)
    separable: Optional[Tuple[np.ndarray, np.ndarray]] = None

    def __post_init__(self) -> None:
        taps = _freeze(self.taps)
        if taps.ndim != 2 or taps.shape[0] % 2 == 0 or taps.shape[1] % 2 == 0:
            raise InvalidParameterError(f"spatial kernel must be 2-D with odd sides, got shape {taps.shape}")
        object.__setattr__(self, "taps", taps)
        if self.separable is not None:
            col, row = self.separable
            object.__setattr__(self, "separable", (_freeze(col), _freeze(row)))

    @property
    def radius(self) -> int:
        return max(self.taps.shape) // 2


@dataclass(frozen=True, eq=False)
class TemporalKernel:
    """Causal kernel; taps[k] weighs the frame k steps in the past."""

    taps: np.ndarray
    specs: Tuple[Tuple[int, float], ...] = ()

    def __post_init__(self) -> None:
        taps = _freeze(self.taps)
        if taps.ndim != 1 or taps.size == 0:
            raise InvalidParameterError("temporal kernel needs a non-empty 1-D tap array")
        object.__setattr__(self, "taps", taps)

    @property
    def length(self) -> int:
        return int(self.taps.size)

    def __len__(self) -> int:
        return self.length


def sample_gaussian(sigma: float, radius: int) -> np.ndarray:
    """2-D isotropic Gaussian density sampled at integer offsets, not renormalized."""
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    g = np.exp(-(x ** 2) / (2.0 * sigma ** 2))
    return np.outer(g, g) / (2.0 * math.pi * sigma ** 2)


def gaussian_kernel(sigma: float) -> SpatialKernel:
    sigma = _require_positive("sigma", sigma)
    radius = int(math.ceil(3.0 * sigma))
    taps = sample_gaussian(sigma, radius)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    g = np.exp(-(x ** 2) / (2.0 * sigma ** 2))
    factor = g / g.sum()
    return SpatialKernel(taps / taps.sum(), separable=(factor, factor))


def _gamma_density(n: int, tau: float, lags: np.ndarray) -> np.ndarray:
    out = np.zeros(lags.shape, dtype=np.float64)
    positive = lags > 0
    t = lags[positive]
    log_val = n * np.log(n * t) - n * t / tau - special.gammaln(n) - (n + 1) * math.log(tau)
    out[positive] = np.exp(log_val)
    return out


def gamma_tail_mass(n: int, tau: float, lag: float) -> float:
    """Continuous mass of the Gamma kernel beyond `lag` frames."""
    # the kernel is a Gamma density with shape n + 1 and scale tau / n
    return float(special.gammaincc(n + 1, n * lag / tau))


def gamma_kernel(n: int, tau: float, mass_eps: float = DEFAULT_MASS_EPS) -> TemporalKernel:
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise InvalidParameterError(f"Gamma order n must be an integer >= 1, got {n!r}")
    n = int(n)
    tau = _require_positive("tau", tau)
    mass_eps = float(mass_eps)
    if not 0.0 < mass_eps <= 0.01:
        raise InvalidParameterError(f"mass_eps must lie in (0, 0.01], got {mass_eps}")

    length = 1
    while gamma_tail_mass(n, tau, length) >= mass_eps:
        length += 1
    length = max(length, 2)
    taps = _gamma_density(n, tau, np.arange(length, dtype=np.float64))
    return TemporalKernel(taps / taps.sum(), specs=((n, tau),))


def bandpass_kernel(
    n1: int, tau1: float, n2: int, tau2: float, mass_eps: float = DEFAULT_MASS_EPS
) -> TemporalKernel:
    fast = gamma_kernel(n1, tau1, mass_eps)
    slow = gamma_kernel(n2, tau2, mass_eps)
    length = max(fast.length, slow.length)
    taps = np.zeros(length, dtype=np.float64)
    taps[: fast.length] += fast.taps
    taps[: slow.length] -= slow.taps
    return TemporalKernel(taps, specs=fast.specs + slow.specs)


def inhibition_kernel(
    sigma2: float, sigma3: float, e: float = 1.0, rho: float = 0.0, A: float = 1.0, B: float = 3.0
) -> SpatialKernel:
    sigma2 = _require_positive("sigma2", sigma2)
    sigma3 = _require_positive("sigma3", sigma3)
    if sigma3 <= sigma2:
        raise InvalidParameterError(f"sigma3 must exceed sigma2, got sigma2={sigma2}, sigma3={sigma3}")
    radius = int(math.ceil(3.0 * sigma3))
    g = sample_gaussian(sigma2, radius) - e * sample_gaussian(sigma3, radius) - rho
    return SpatialKernel(A * np.maximum(g, 0.0) + B * np.minimum(g, 0.0))


def _place(taps: np.ndarray, radius: int, cx: int, cy: int) -> np.ndarray:
    out = np.zeros((2 * radius + 1, 2 * radius + 1), dtype=np.float64)
    r = taps.shape[0] // 2
    out[radius + cy - r : radius + cy + r + 1, radius + cx - r : radius + cx + r + 1] = taps
    return out


def t1_kernel(eta: float, alpha2: float, phi: float) -> SpatialKernel:
    """Directional-derivative kernel W_A(s + a) - W_A(s - a), a = alpha2 along phi."""
    match_angle(phi, ORIENTATIONS, "phi")
    alpha2 = _require_positive("alpha2", alpha2)
    amc = gaussian_kernel(eta)
    dx, dy = grid_offset(phi, alpha2)
    radius = max(int(math.ceil(3.0 * float(eta) + alpha2)), amc.radius + max(abs(dx), abs(dy)))
    taps = _place(amc.taps, radius, -dx, -dy) - _place(amc.taps, radius, dx, dy)
    return SpatialKernel(taps)


def _check_frame(frame: np.ndarray, kernel: SpatialKernel) -> np.ndarray:
    arr = np.asarray(frame, dtype=np.float64)
    if arr.ndim < 2 or arr.shape[-1] == 0 or arr.shape[-2] == 0:
        raise InvalidParameterError(f"conv2 needs a non-empty frame, got shape {arr.shape}")
    kh, kw = kernel.taps.shape
    if kh > arr.shape[-2] or kw > arr.shape[-1]:
        raise InvalidParameterError(
            f"kernel {kh}x{kw} is larger than frame {arr.shape[-2]}x{arr.shape[-1]}"
        )
    return arr


def _edge_pad(arr: np.ndarray, ry: int, rx: int) -> np.ndarray:
    pad = [(0, 0)] * (arr.ndim - 2) + [(ry, ry), (rx, rx)]
    return np.pad(arr, pad, mode="edge")


def conv2(frame: np.ndarray, kernel: SpatialKernel, fft_min_taps: Optional[int] = None) -> np.ndarray:
    """
    2-D convolution over the last two axes with edge-replicate padding.

    Leading axes are treated as a stack of frames. The path is chosen per kernel:
    separable kernels run as two 1-D passes, large kernels through the FFT,
    everything else through scipy's direct convolution. All paths match conv2_naive.
    """
    arr = _check_frame(frame, kernel)
    if fft_min_taps is None:
        fft_min_taps = app_settings.fft_min_taps

    if kernel.separable is not None:
        col, row = kernel.separable
        out = ndimage.convolve1d(arr, col, axis=-2, mode="nearest")
        return ndimage.convolve1d(out, row, axis=-1, mode="nearest")

    taps = kernel.taps
    ry, rx = taps.shape[0] // 2, taps.shape[1] // 2
    if taps.size >= fft_min_taps:
        padded = _edge_pad(arr, ry, rx)
        full_kernel = taps.reshape((1,) * (arr.ndim - 2) + taps.shape)
        return signal.fftconvolve(padded, full_kernel, mode="valid", axes=(-2, -1))

    full_kernel = taps.reshape((1,) * (arr.ndim - 2) + taps.shape)
    return ndimage.convolve(arr, full_kernel, mode="nearest")


def conv2_naive(frame: np.ndarray, kernel: SpatialKernel) -> np.ndarray:
    """Direct O(k^2 mn) convolution; reference for the optimized paths."""
    arr = _check_frame(frame, kernel)
    taps = kernel.taps
    kh, kw = taps.shape
    ry, rx = kh // 2, kw // 2
    h, w = arr.shape[-2], arr.shape[-1]
    padded = _edge_pad(arr, ry, rx)
    out = np.zeros(arr.shape, dtype=np.float64)
    for i in range(kh):
        for j in range(kw):
            weight = taps[i, j]
            if weight == 0.0:
                continue
            # out(y, x) += K(u, v) * I(y - u, x - v), u = i - ry, v = j - rx
            out += weight * padded[..., 2 * ry - i : 2 * ry - i + h, 2 * rx - j : 2 * rx - j + w]
    return out


class FrameHistory:
    """
    Ring buffer of the most recent `depth` per-pixel frames.

    Frame index 0 is the first frame pushed; `latest` is the newest index (-1 when empty).
    """

    def __init__(self, depth: int) -> None:
        if depth < 1:
            raise InvalidParameterError(f"history depth must be >= 1, got {depth}")
        self.depth = int(depth)
        self._buffer: Optional[np.ndarray] = None
        self._count = 0

    def __len__(self) -> int:
        return min(self._count, self.depth)

    @property
    def latest(self) -> int:
        return self._count - 1

    @property
    def shape(self) -> Optional[Tuple[int, int]]:
        return None if self._buffer is None else self._buffer.shape[1:]

    def push(self, frame: np.ndarray) -> None:
        arr = np.asarray(frame, dtype=np.float64)
        if self._buffer is None:
            self._buffer = np.zeros((self.depth,) + arr.shape, dtype=np.float64)
        elif arr.shape != self._buffer.shape[1:]:
            raise InvalidStateError(
                f"frame shape {arr.shape} differs from history shape {self._buffer.shape[1:]}"
            )
        self._buffer[self._count % self.depth] = arr
        self._count += 1

    def lag(self, k: int) -> np.ndarray:
        """Frame stored k steps before the newest one."""
        if self._buffer is None or not 0 <= k < len(self):
            raise InvalidStateError(f"lag {k} not available (history holds {len(self)} frames)")
        return self._buffer[(self._count - 1 - k) % self.depth]

    def slot_weights(self, taps: np.ndarray) -> np.ndarray:
        """Per-slot weights so that weights . buffer == sum_k taps[k] * lag(k)."""
        weights = np.zeros(self.depth, dtype=np.float64)
        usable = min(len(taps), len(self))
        for k in range(usable):
            weights[(self._count - 1 - k) % self.depth] = taps[k]
        return weights

    def weighted_sum(self, weights: np.ndarray) -> np.ndarray:
        """Contract a (kernels, depth) weight matrix against the stored frames."""
        assert self._buffer is not None
        flat = self._buffer.reshape(self.depth, -1)
        out = np.asarray(weights, dtype=np.float64) @ flat
        return out.reshape(weights.shape[:-1] + self._buffer.shape[1:])


def temporal_conv(history: FrameHistory, kernel: TemporalKernel) -> np.ndarray:
    return temporal_conv_many(history, [kernel])[0]


def temporal_conv_many(history: FrameHistory, kernels: Sequence[TemporalKernel]) -> np.ndarray:
    """
    Causal convolution of the stored signal with several kernels at once.

    output(x, y) = sum_k history(x, y, now - k) * taps[k]; lags not yet stored count as 0.
    Returns an array of shape (len(kernels), H, W).
    """
    if len(history) == 0:
        raise InvalidStateError("temporal convolution on an empty history")
    weights = np.stack([history.slot_weights(kernel.taps) for kernel in kernels])
    return history.weighted_sum(weights)
