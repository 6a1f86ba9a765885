"""Immutable float images plus the smoothing, resampling and gradient kernels
everything else is built from.

All operations are pure: they take images, return new images, and never
mutate their inputs, so they are safe to call from any number of threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConfigError, ShapeError

LUMA_WEIGHTS = (0.2126, 0.7152, 0.0722)


class BoundaryMode(Enum):
    """How convolution and finite differences index past the border.

    CIRCULAR wraps around. The induced smoothing matrix is then symmetric and
    doubly stochastic (all rows and columns sum to 1), which the consistency
    machinery relies on, so it is the default everywhere. REFLECT mirrors
    without repeating the edge sample; rows still sum to 1 (constants are
    preserved) but column sums near the border do not, so it is offered only
    for visual editing paths where wraparound artifacts are unacceptable.
    """

    CIRCULAR = "circular"
    REFLECT = "reflect"


def _border_indices(idx: np.ndarray, n: int, boundary: BoundaryMode) -> np.ndarray:
    """Map possibly out-of-range indices into [0, n) per the boundary mode."""
    if boundary is BoundaryMode.CIRCULAR:
        return np.mod(idx, n)
    if n == 1:
        return np.zeros_like(idx)
    # mirror without repeating the edge sample, period 2(n-1)
    period = 2 * (n - 1)
    k = np.mod(idx, period)
    return np.minimum(k, period - k)


@dataclass(frozen=True, eq=False)
class Image:
    """An H x W x C grid of float64 samples, nominally in [0, 1].

    Values outside [0, 1] are permitted mid-pipeline (high-frequency
    residuals are signed); NaN and Inf never are. The backing array is
    marked read-only, so instances behave as values.
    """

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64, copy=True)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3:
            raise ShapeError(f"image data must be HxW or HxWxC, got shape {arr.shape}")
        if arr.shape[2] not in (1, 3):
            raise ShapeError(f"images carry 1 or 3 channels, got {arr.shape[2]}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ShapeError(f"empty image of shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ShapeError("image contains NaN or Inf samples")
        arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    @classmethod
    def constant(cls, height: int, width: int, value=0.0, channels: int = 1) -> "Image":
        value = np.broadcast_to(np.asarray(value, dtype=np.float64), (channels,))
        return cls(np.tile(value, (height, width, 1)))

    def plane(self, index: int = 0) -> np.ndarray:
        """One channel as a 2-D array view."""
        return self.data[:, :, index]

    def mean(self) -> float:
        return float(self.data.mean())

    def luminance(self) -> "Image":
        """Weighted RGB-to-gray reduction; single-channel images pass through."""
        if self.channels == 1:
            return self
        w = np.asarray(LUMA_WEIGHTS)
        return Image(self.data @ w)

    def clamped(self) -> "Image":
        return Image(np.clip(self.data, 0.0, 1.0))

    def same_shape(self, other: "Image") -> bool:
        return self.shape == other.shape

    def __add__(self, other: "Image") -> "Image":
        if not isinstance(other, Image):
            return NotImplemented
        if not self.same_shape(other):
            raise ShapeError(f"shape mismatch: {self.shape} vs {other.shape}")
        return Image(self.data + other.data)

    def __sub__(self, other: "Image") -> "Image":
        if not isinstance(other, Image):
            return NotImplemented
        if not self.same_shape(other):
            raise ShapeError(f"shape mismatch: {self.shape} vs {other.shape}")
        return Image(self.data - other.data)

    def __mul__(self, factor) -> "Image":
        if not np.isscalar(factor):
            return NotImplemented
        return Image(self.data * float(factor))

    __rmul__ = __mul__


def gaussian_kernel(sigma: float, radius: int | None = None) -> np.ndarray:
    """Normalized discrete Gaussian taps over [-radius, radius]."""
    if not (sigma > 0) or not math.isfinite(sigma):
        raise ConfigError(f"sigma must be positive and finite, got {sigma}")
    if radius is None:
        radius = math.ceil(3.0 * sigma)
    if radius < 0:
        raise ConfigError(f"kernel radius must be >= 0, got {radius}")
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    w = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return w / w.sum()


@dataclass(frozen=True)
class LowpassConfig:
    """Parameters of the separable Gaussian low-pass step.

    downscale is the resolution reduction applied by the decomposition
    pipeline (1/4 balances edit strength against artifacts); operations
    that only smooth ignore it. The default sigma of 2.0 at full
    resolution is a documented choice, not a calibrated constant.
    """

    sigma: float = 2.0
    kernel_radius: int | None = None
    downscale: int = 4
    boundary: BoundaryMode = BoundaryMode.CIRCULAR

    def __post_init__(self):
        if not (self.sigma > 0) or not math.isfinite(self.sigma):
            raise ConfigError(f"sigma must be positive and finite, got {self.sigma}")
        if self.kernel_radius is not None and int(self.kernel_radius) < 0:
            raise ConfigError(f"kernel_radius must be >= 0, got {self.kernel_radius}")
        if int(self.downscale) != self.downscale or self.downscale < 1:
            raise ConfigError(f"downscale must be an integer >= 1, got {self.downscale}")

    @property
    def radius(self) -> int:
        if self.kernel_radius is None:
            return math.ceil(3.0 * self.sigma)
        return int(self.kernel_radius)

    def kernel(self) -> np.ndarray:
        return gaussian_kernel(self.sigma, self.radius)


def _convolve_axis(data: np.ndarray, kernel: np.ndarray, axis: int,
                   boundary: BoundaryMode) -> np.ndarray:
    n = data.shape[axis]
    radius = len(kernel) // 2
    base = np.arange(n)
    out = np.zeros_like(data)
    for tap, weight in enumerate(kernel):
        idx = _border_indices(base + (tap - radius), n, boundary)
        out += weight * np.take(data, idx, axis=axis)
    return out


def gaussian_lowpass(img: Image, cfg: LowpassConfig) -> Image:
    """Separable Gaussian smoothing at the image's own resolution.

    With CIRCULAR boundary the induced linear operator is symmetric and
    doubly stochastic, hence it preserves the image mean and strictly
    contracts any mean-zero non-constant component.
    """
    kernel = cfg.kernel()
    if len(kernel) == 1:
        return img
    smoothed = _convolve_axis(img.data, kernel, 0, cfg.boundary)
    smoothed = _convolve_axis(smoothed, kernel, 1, cfg.boundary)
    return Image(smoothed)


def _sample_axis(n_src: int, n_dst: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Half-pixel-centered linear sampling: lower index, upper index, fraction."""
    coords = (np.arange(n_dst) + 0.5) * (n_src / n_dst) - 0.5
    coords = np.clip(coords, 0.0, n_src - 1.0)
    if n_src == 1:
        lo = np.zeros(n_dst, dtype=np.int64)
        return lo, lo, np.zeros(n_dst)
    lo = np.minimum(np.floor(coords).astype(np.int64), n_src - 2)
    return lo, lo + 1, coords - lo


def resample(img: Image, new_h: int, new_w: int) -> Image:
    """Bilinear resampling with half-pixel-centered coordinates.

    Constants are preserved exactly in both directions, and resampling to
    the input size returns the input itself.
    """
    if new_h < 1 or new_w < 1:
        raise ConfigError(f"target size must be at least 1x1, got {new_h}x{new_w}")
    if (new_h, new_w) == (img.height, img.width):
        return img
    y0, y1, fy = _sample_axis(img.height, new_h)
    x0, x1, fx = _sample_axis(img.width, new_w)
    data = img.data
    v00 = data[np.ix_(y0, x0)]
    v01 = data[np.ix_(y0, x1)]
    v10 = data[np.ix_(y1, x0)]
    v11 = data[np.ix_(y1, x1)]
    fx = fx[None, :, None]
    fy = fy[:, None, None]
    # lerp form keeps constants bit-exact
    top = v00 + fx * (v01 - v00)
    bottom = v10 + fx * (v11 - v10)
    return Image(top + fy * (bottom - top))


def gradient(img: Image, boundary: BoundaryMode = BoundaryMode.CIRCULAR) -> tuple[Image, Image]:
    """Central-difference gradients of a single-channel image.

    Matches the plain first-order model used by the flow solver, so no
    Sobel-style smoothing is folded in.
    """
    if img.channels != 1:
        raise ShapeError(f"gradient needs a single-channel image, got {img.channels} channels")
    if img.height < 3 or img.width < 3:
        raise ShapeError(f"gradient needs at least 3x3 pixels, got {img.height}x{img.width}")
    plane = img.plane()
    h, w = plane.shape
    xs = np.arange(w)
    ys = np.arange(h)
    gx = 0.5 * (plane[:, _border_indices(xs + 1, w, boundary)]
                - plane[:, _border_indices(xs - 1, w, boundary)])
    gy = 0.5 * (plane[_border_indices(ys + 1, h, boundary), :]
                - plane[_border_indices(ys - 1, h, boundary), :])
    return Image(gx), Image(gy)


def bilinear_sample(data: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Sample an (H, W, C) array at float pixel coordinates, clamped to the frame.

    Returns an array shaped like x with a trailing channel axis.
    """
    h, w = data.shape[:2]
    x = np.clip(x, 0.0, w - 1.0)
    y = np.clip(y, 0.0, h - 1.0)
    x0 = np.minimum(np.floor(x).astype(np.int64), max(w - 2, 0))
    y0 = np.minimum(np.floor(y).astype(np.int64), max(h - 2, 0))
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (x - x0)[..., None]
    fy = (y - y0)[..., None]
    v00 = data[y0, x0]
    v01 = data[y0, x1]
    v10 = data[y1, x0]
    v11 = data[y1, x1]
    top = v00 + fx * (v01 - v00)
    bottom = v10 + fx * (v11 - v10)
    return top + fy * (bottom - top)
