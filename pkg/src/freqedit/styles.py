"""Parametric photometric edits standing in for a learned style module.

Affine color maps commute exactly with Gaussian smoothing (smoothing rows
sum to 1, and an affine map commutes with convex averaging), so they are the
family the consistency harness uses. The tone curve and palette shift exist
for qualitative demos; commute_error measures how far any operator is from
commuting on a given image.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .image import Image, LowpassConfig, gaussian_lowpass


@dataclass(frozen=True, eq=False)
class AffineColor:
    """Per-pixel affine map on RGB: out = matrix @ rgb + offset."""

    matrix: np.ndarray
    offset: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=np.float64, copy=True)
        o = np.array(self.offset, dtype=np.float64, copy=True)
        if m.shape != (3, 3):
            raise ConfigError(f"color matrix must be 3x3, got shape {m.shape}")
        if o.shape != (3,):
            raise ConfigError(f"color offset must be a 3-vector, got shape {o.shape}")
        if not (np.all(np.isfinite(m)) and np.all(np.isfinite(o))):
            raise ConfigError("color matrix and offset must be finite")
        m.flags.writeable = False
        o.flags.writeable = False
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "offset", o)

    @classmethod
    def identity(cls) -> "AffineColor":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def channel_gains(cls, gains, offset=(0.0, 0.0, 0.0)) -> "AffineColor":
        return cls(np.diag(np.asarray(gains, dtype=np.float64)), np.asarray(offset))


@dataclass(frozen=True)
class ToneCurve:
    """Power-law tone adjustment applied per channel; gamma 1 is the identity.

    Negative mid-pipeline values are floored at zero before the power.
    """

    gamma: float

    def __post_init__(self):
        if not (0.0 < self.gamma <= 8.0) or not math.isfinite(self.gamma):
            raise ConfigError(f"gamma must be in (0, 8], got {self.gamma}")


@dataclass(frozen=True)
class PaletteShift:
    """Hue rotation about the gray axis plus chroma scaling.

    Both are linear, so the whole edit reduces to a 3x3 matrix and stays in
    the exactly-commuting affine family.
    """

    hue_rotation: float = 0.0
    saturation_scale: float = 1.0

    def __post_init__(self):
        if not math.isfinite(self.hue_rotation) or not math.isfinite(self.saturation_scale):
            raise ConfigError("palette parameters must be finite")

    def as_affine(self) -> AffineColor:
        theta = math.radians(self.hue_rotation)
        axis = np.ones(3) / math.sqrt(3.0)
        cross = np.array([[0.0, -axis[2], axis[1]],
                          [axis[2], 0.0, -axis[0]],
                          [-axis[1], axis[0], 0.0]])
        rotation = (math.cos(theta) * np.eye(3)
                    + math.sin(theta) * cross
                    + (1.0 - math.cos(theta)) * np.outer(axis, axis))
        gray = np.full((3, 3), 1.0 / 3.0)
        matrix = gray + self.saturation_scale * (rotation - gray)
        return AffineColor(matrix, np.zeros(3))


StyleOp = AffineColor | ToneCurve | PaletteShift


def apply_style(op: StyleOp, img: Image) -> Image:
    """Apply a photometric edit per pixel. Deterministic and pixelwise."""
    if isinstance(op, ToneCurve):
        return Image(np.power(np.clip(img.data, 0.0, None), op.gamma))
    if isinstance(op, PaletteShift):
        op = op.as_affine()
    if isinstance(op, AffineColor):
        if img.channels != 3:
            raise ShapeError(f"color styles need a 3-channel image, got {img.channels} channels")
        return Image(img.data @ op.matrix.T + op.offset)
    raise ConfigError(f"unknown style operator {op!r}")


def commute_error(op: StyleOp, img: Image, cfg: LowpassConfig) -> float:
    """RMSE between style-then-smooth and smooth-then-style.

    Zero (to rounding) for affine styles under a normalized kernel; strictly
    positive for genuinely nonlinear edits on non-constant images. Used to
    pick styles that are honest about commuting with the low-pass step.
    """
    styled_then_smoothed = gaussian_lowpass(apply_style(op, img), cfg)
    smoothed_then_styled = apply_style(op, gaussian_lowpass(img, cfg))
    diff = styled_then_smoothed.data - smoothed_then_styled.data
    return float(np.sqrt(np.mean(diff * diff)))


def style_to_json(op: StyleOp) -> dict:
    if isinstance(op, AffineColor):
        return {"variant": "affine_color",
                "matrix": op.matrix.tolist(),
                "offset": op.offset.tolist()}
    if isinstance(op, ToneCurve):
        return {"variant": "tone_curve", "gamma": op.gamma}
    if isinstance(op, PaletteShift):
        return {"variant": "palette_shift",
                "hue_rotation": op.hue_rotation,
                "saturation_scale": op.saturation_scale}
    raise ConfigError(f"unknown style operator {op!r}")


def style_from_json(obj: dict) -> StyleOp:
    if not isinstance(obj, dict) or "variant" not in obj:
        raise ConfigError("style description must be an object with a 'variant' field")
    variant = obj["variant"]
    try:
        if variant == "affine_color":
            return AffineColor(np.asarray(obj["matrix"], dtype=np.float64),
                               np.asarray(obj["offset"], dtype=np.float64))
        if variant == "tone_curve":
            return ToneCurve(float(obj["gamma"]))
        if variant == "palette_shift":
            return PaletteShift(float(obj.get("hue_rotation", 0.0)),
                                float(obj.get("saturation_scale", 1.0)))
    except KeyError as exc:
        raise ConfigError(f"style description missing field {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"malformed style description: {exc}") from exc
    raise ConfigError(f"unknown style variant '{variant}'")
