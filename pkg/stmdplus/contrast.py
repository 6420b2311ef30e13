"""
Contrast pathway: AMC pooling and the four T1 directional-contrast fields.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage

from .errors import InvalidParameterError
from .kernels import (
    ORIENTATIONS,
    SpatialKernel,
    conv2,
    disk_footprint,
    gaussian_kernel,
    grid_offset,
    match_angle,
    t1_kernel,
)

logger = logging.getLogger(__name__)


def amc(P: np.ndarray, eta: float = 1.5, kernel: Optional[SpatialKernel] = None) -> np.ndarray:
    return conv2(P, kernel if kernel is not None else gaussian_kernel(eta))


def t1(
    P: np.ndarray,
    eta: float = 1.5,
    alpha2: int = 3,
    phi: float = 0.0,
    kernel: Optional[SpatialKernel] = None,
) -> np.ndarray:
    """Directional contrast A(s + a) - A(s - a) via the fused derivative kernel."""
    return conv2(P, kernel if kernel is not None else t1_kernel(eta, alpha2, phi))


def t1_bank(
    P: np.ndarray,
    eta: float = 1.5,
    alpha2: int = 3,
    phis: Sequence[float] = ORIENTATIONS,
    pool: Optional[SpatialKernel] = None,
) -> np.ndarray:
    """
    T1 fields for several orientations from one AMC pass, shape (len(phis), H, W).

    Each field is the difference of two shifted windows of the pooled frame.
    """
    arr = np.asarray(P, dtype=np.float64)
    for phi in phis:
        match_angle(phi, ORIENTATIONS, "phi")
    offsets = [grid_offset(phi, alpha2) for phi in phis]
    pad = max(max(abs(dx), abs(dy)) for dx, dy in offsets)
    h, w = arr.shape
    # pooling the replicated frame keeps the border identical to the fused path
    pooled = amc(np.pad(arr, pad, mode="edge"), eta, pool)
    out = np.empty((len(offsets), h, w), dtype=np.float64)
    for i, (dx, dy) in enumerate(offsets):
        ahead = pooled[pad + dy : pad + dy + h, pad + dx : pad + dx + w]
        behind = pooled[pad - dy : pad - dy + h, pad - dx : pad - dx + w]
        np.subtract(ahead, behind, out=out[i])
    return out


def t1_explicit(P: np.ndarray, eta: float = 1.5, alpha2: int = 3, phi: float = 0.0) -> np.ndarray:
    """Same field as t1, computed as the difference of two offset AMC samples."""
    return t1_bank(P, eta, alpha2, (phi,))[0]


def support_radius(eta: float = 1.5, alpha2: int = 3) -> int:
    """Distance from a pixel to the farthest input pixel its T1 values depend on."""
    reach = max(max(abs(dx), abs(dy)) for dx, dy in (grid_offset(phi, alpha2) for phi in ORIENTATIONS))
    return gaussian_kernel(eta).radius + reach


def window_max(fields: np.ndarray, radius: int) -> np.ndarray:
    """Per-orientation maximum over a disk of `radius`; radius 0 returns the fields unchanged."""
    if radius < 0:
        raise InvalidParameterError(f"window radius must be >= 0, got {radius}")
    arr = np.asarray(fields, dtype=np.float64)
    if radius == 0:
        return arr
    footprint = disk_footprint(radius)
    return np.stack([ndimage.maximum_filter(f, footprint=footprint, mode="nearest") for f in arr])


@dataclass
class ContrastField:
    """
    Contrast samples of one frame, shape (orientations, H, W).

    Pixels closer than `margin` to the frame border have no sample: their
    pooling support reaches into replicated border values, so lookups there
    return NaN.
    """

    t: int
    values: np.ndarray
    margin: int = 0

    def sample(self, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        """(len(xs), orientations) samples; rows inside the border margin are NaN."""
        xs = np.asarray(xs, dtype=np.int64)
        ys = np.asarray(ys, dtype=np.int64)
        h, w = self.values.shape[1:]
        out = self.values[:, ys, xs].T.copy()
        m = self.margin
        near_border = (xs < m) | (ys < m) | (xs >= w - m) | (ys >= h - m)
        out[near_border] = np.nan
        return out

    def value_at(self, x: int, y: int) -> np.ndarray:
        h, w = self.values.shape[1:]
        if not (0 <= x < w and 0 <= y < h):
            raise InvalidParameterError(f"pixel ({x}, {y}) outside {w}x{h} contrast field")
        return self.sample(np.array([x]), np.array([y]))[0]


class ContrastPathway:
    """
    T1 bank followed by a max over a disk of `window` pixels per orientation.

    The window keeps a feature's sample fixed while its detection point moves by
    a pixel or two; `window=0` samples T1 at the pixel itself.
    """

    def __init__(self, eta: float = 1.5, alpha2: int = 3, window: int = 0) -> None:
        self.eta = eta
        self.alpha2 = alpha2
        self.window = int(window)
        if self.window < 0:
            raise InvalidParameterError(f"contrast window must be >= 0, got {window}")
        self.pool = gaussian_kernel(eta)
        self.margin = support_radius(eta, alpha2) + self.window

    def compute(self, P: np.ndarray, t: int) -> ContrastField:
        fields = t1_bank(P, self.eta, self.alpha2, ORIENTATIONS, self.pool)
        return ContrastField(t=t, values=window_max(fields, self.window), margin=self.margin)
