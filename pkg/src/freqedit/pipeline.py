"""Frequency-split editing: decompose, restyle the low band, blend detail back.

The low band is the Gaussian-smoothed, bilinearly downscaled image; the high
band is the residual against its upsampled version, so the two always sum
back to the source exactly. Editing happens on the low band only and the
original high band is re-added afterwards, scaled by a blend weight.

The learned feature encoder/decoder pair this design mirrors is replaced by
the identity: the "feature map" is the downscaled low-pass image itself.
Every blending formula keeps its exact algebraic shape under that stand-in.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .image import Image, LowpassConfig, gaussian_lowpass, resample


@dataclass(frozen=True)
class Decomposition:
    """Low/high split of one image.

    low_ds is the smoothed image at reduced resolution, low_full its
    bilinear upsampling back to full size, and high the signed residual
    source - low_full. low_full + high reconstructs the source by
    construction.
    """

    low_ds: Image
    low_full: Image
    high: Image

    @property
    def source(self) -> Image:
        return self.low_full + self.high


@dataclass(frozen=True)
class BlendParams:
    """Weights for detail re-blending: alpha scales the high band, lambda1
    and lambda2 weigh edited versus original detail in masked enhancement."""

    alpha: float = 1.0
    lambda1: float = 1.0
    lambda2: float = 1.0

    def __post_init__(self):
        for name in ("alpha", "lambda1", "lambda2"):
            value = getattr(self, name)
            if not (0.0 <= value <= 1.0):
                raise ConfigError(f"{name} must be in [0, 1], got {value}")


def decompose(img: Image, cfg: LowpassConfig) -> Decomposition:
    """Split an image into a downscaled low band and a full-size high band."""
    ds = cfg.downscale
    low_h, low_w = img.height // ds, img.width // ds
    if low_h < 1 or low_w < 1:
        raise ShapeError(
            f"image {img.height}x{img.width} is smaller than the downscale factor {ds}")
    low_ds = resample(gaussian_lowpass(img, cfg), low_h, low_w)
    low_full = resample(low_ds, img.height, img.width)
    return Decomposition(low_ds=low_ds, low_full=low_full, high=img - low_full)


def blend_detail(styled_low_ds: Image, dec: Decomposition, alpha: float) -> Image:
    """Upsample an edited low band and add back alpha times the original detail.

    Output is left unclamped; only PNG export clamps.
    """
    if not (0.0 <= alpha <= 1.0):
        raise ConfigError(f"alpha must be in [0, 1], got {alpha}")
    if styled_low_ds.shape != dec.low_ds.shape:
        raise ShapeError(
            f"edited low band {styled_low_ds.shape} does not match decomposition {dec.low_ds.shape}")
    up = resample(styled_low_ds, dec.high.height, dec.high.width)
    return up + alpha * dec.high


def intensity_mix(low_ds: Image, styled_low_ds: Image, level: float) -> Image:
    """Interpolate between the original and edited low band.

    level 0 returns the original low band (no edit), level 1 the edited one.
    """
    if not (0.0 <= level <= 1.0):
        raise ConfigError(f"intensity level must be in [0, 1], got {level}")
    if low_ds.shape != styled_low_ds.shape:
        raise ShapeError(f"shape mismatch: {low_ds.shape} vs {styled_low_ds.shape}")
    return Image(level * styled_low_ds.data + (1.0 - level) * low_ds.data)


def enhance_simple(edited: Image, original: Image, cfg: LowpassConfig) -> Image:
    """Replace the edited image's high band with the original's.

    Both images are smoothed at full resolution (the downscale factor is
    ignored here): output = low(edited) + (original - low(original)).
    """
    if edited.shape != original.shape:
        raise ShapeError(f"shape mismatch: {edited.shape} vs {original.shape}")
    edited_low = gaussian_lowpass(edited, cfg)
    original_low = gaussian_lowpass(original, cfg)
    return edited_low + (original - original_low)


def enhance_masked(edited: Image, original: Image, params: BlendParams,
                   cfg: LowpassConfig) -> Image:
    """Detail re-blending gated by how much the low bands differ.

    The gate is the per-channel absolute low-band difference clamped to
    [0, 1] and max-reduced to one channel, then:
    output = low(edited) + lambda1 * gate * high(edited)
           + lambda2 * (1 - gate) * high(original).
    The gate is applied raw; no blurring or thresholding.
    """
    if edited.shape != original.shape:
        raise ShapeError(f"shape mismatch: {edited.shape} vs {original.shape}")
    edited_low = gaussian_lowpass(edited, cfg)
    original_low = gaussian_lowpass(original, cfg)
    gate = np.clip(np.abs(edited_low.data - original_low.data), 0.0, 1.0)
    gate = gate.max(axis=2, keepdims=True)
    edited_high = edited.data - edited_low.data
    original_high = original.data - original_low.data
    out = (edited_low.data
           + params.lambda1 * gate * edited_high
           + params.lambda2 * (1.0 - gate) * original_high)
    return Image(out)


def mask_recompose(edited: Image, original: Image, mask: Image) -> Image:
    """Per-pixel convex combination: mask * edited + (1 - mask) * original."""
    if edited.shape != original.shape:
        raise ShapeError(f"shape mismatch: {edited.shape} vs {original.shape}")
    if mask.channels != 1:
        raise ShapeError(f"mask must be single-channel, got {mask.channels} channels")
    if (mask.height, mask.width) != (edited.height, edited.width):
        raise ShapeError(
            f"mask size {mask.height}x{mask.width} does not match images "
            f"{edited.height}x{edited.width}")
    m = mask.data
    if m.min() < 0.0 or m.max() > 1.0:
        raise ConfigError(f"mask values must lie in [0, 1], got [{m.min()}, {m.max()}]")
    return Image(m * edited.data + (1.0 - m) * original.data)
