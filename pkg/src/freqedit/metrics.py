"""Reference-free and warp-based quality measures.

warped_rmse quantifies multi-view agreement: sample one view along a flow
field and compare against the other over the valid mask. sharpness is the
variance of the 4-neighbor Laplacian response on the 0-255 intensity scale,
the usual no-reference focus measure; smoothing an image always lowers it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MetricError, ShapeError
from .flow import FlowField
from .image import Image, bilinear_sample


@dataclass(frozen=True)
class PairScore:
    """Masked RMSE between a warped view and its target."""

    rmse: float
    valid_fraction: float
    n_pixels: int

    def to_json_dict(self) -> dict:
        return {"rmse": self.rmse, "valid_fraction": self.valid_fraction,
                "n_pixels": self.n_pixels}


def warped_rmse(i1: Image, i2: Image, flow: FlowField, valid: Image) -> PairScore:
    """RMSE between i1 sampled at p + u(p) and i2 at p, over valid pixels.

    Raises when the valid mask is empty since no overlap means nothing to
    compare.
    """
    if i1.shape != i2.shape:
        raise ShapeError(f"image shapes differ: {i1.shape} vs {i2.shape}")
    if flow.u_x.shape != (i1.height, i1.width):
        raise ShapeError(f"flow {flow.u_x.shape} does not match images "
                         f"{(i1.height, i1.width)}")
    if (valid.height, valid.width) != (i1.height, i1.width) or valid.channels != 1:
        raise ShapeError("valid mask must be a single-channel image of matching size")
    mask = valid.plane() > 0.5
    n_valid = int(mask.sum())
    if n_valid == 0:
        raise MetricError("no overlap: the valid mask is empty")
    grid_x, grid_y = np.meshgrid(np.arange(i1.width), np.arange(i1.height))
    warped = bilinear_sample(i1.data, grid_x + flow.u_x, grid_y + flow.u_y)
    diff = (warped - i2.data)[mask]
    return PairScore(
        rmse=float(np.sqrt(np.mean(diff * diff))),
        valid_fraction=n_valid / mask.size,
        n_pixels=n_valid,
    )


def sharpness(img: Image) -> float:
    """Variance of the 4-neighbor Laplacian on the 0-255 luminance scale.

    Circular neighbor indexing keeps the measure invariant under circular
    shifts; constants score exactly zero.
    """
    plane = img.luminance().plane() * 255.0
    lap = (np.roll(plane, 1, axis=0) + np.roll(plane, -1, axis=0)
           + np.roll(plane, 1, axis=1) + np.roll(plane, -1, axis=1)
           - 4.0 * plane)
    return float(lap.var())
