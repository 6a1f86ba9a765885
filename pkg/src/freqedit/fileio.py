"""File formats: 8-bit PNG for display images, PFM for 1- or 3-channel float
maps, and a small self-describing raw-float32 container for feature maps of
arbitrary channel count.

PNG samples are treated as raw intensities in [0, 1]; no gamma or color
management is applied anywhere.
"""

from __future__ import annotations

import os

import numpy as np
from PIL import Image as PILImage
from PIL import UnidentifiedImageError

from .errors import ImageIOError
from .image import Image

RAW_MAGIC = b"RAWF"


def read_image(path) -> Image:
    """Load an 8-bit PNG (gray or RGB) as floats in [0, 1]."""
    try:
        with PILImage.open(path) as pil:
            if pil.mode == "L":
                arr = np.asarray(pil, dtype=np.uint8)[:, :, None]
            elif pil.mode == "RGB":
                arr = np.asarray(pil, dtype=np.uint8)
            elif pil.mode in ("P", "RGBA", "LA", "1"):
                arr = np.asarray(pil.convert("RGB"), dtype=np.uint8)
            else:
                raise ImageIOError(
                    f"unsupported image mode '{pil.mode}' in '{path}' (8-bit gray or RGB expected)")
    except FileNotFoundError:
        raise ImageIOError(f"no such image file: '{path}'") from None
    except (UnidentifiedImageError, OSError) as exc:
        raise ImageIOError(f"cannot read image '{path}': {exc}") from exc
    return Image(arr.astype(np.float64) / 255.0)


def write_image(img: Image, path) -> None:
    """Write as 8-bit PNG, clamping to [0, 1] and rounding to the nearest level.

    This is the only place the toolkit clamps; intermediate results stay
    unclamped so the blending identities hold exactly.
    """
    quantized = np.rint(np.clip(img.data, 0.0, 1.0) * 255.0).astype(np.uint8)
    if img.channels == 1:
        pil = PILImage.fromarray(quantized[:, :, 0], mode="L")
    else:
        pil = PILImage.fromarray(quantized, mode="RGB")
    try:
        pil.save(os.fspath(path), format="PNG")
    except OSError as exc:
        raise ImageIOError(f"cannot write image '{path}': {exc}") from exc


def write_pfm(path, array: np.ndarray) -> None:
    """Write a (H, W) or (H, W, 3) float map as little-endian PFM.

    Scanlines are stored bottom-up per the format; data is cast to float32.
    """
    arr = np.asarray(array, dtype="<f4")
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3 or arr.shape[2] not in (1, 3):
        raise ImageIOError(
            f"PFM stores 1- or 3-channel maps, got shape {np.asarray(array).shape} for '{path}'")
    magic = b"Pf\n" if arr.shape[2] == 1 else b"PF\n"
    h, w = arr.shape[:2]
    try:
        with open(path, "wb") as fh:
            fh.write(magic)
            fh.write(f"{w} {h}\n".encode("ascii"))
            fh.write(b"-1.0\n")
            fh.write(np.ascontiguousarray(arr[::-1]).tobytes())
    except OSError as exc:
        raise ImageIOError(f"cannot write float map '{path}': {exc}") from exc


def _read_token(fh, path):
    token = b""
    while True:
        ch = fh.read(1)
        if not ch:
            raise ImageIOError(f"truncated PFM header in '{path}'")
        if ch.isspace():
            if token:
                return token
            continue
        token += ch


def read_pfm(path) -> np.ndarray:
    """Read a PFM file back as float32, shape (H, W) or (H, W, 3)."""
    try:
        with open(path, "rb") as fh:
            magic = _read_token(fh, path)
            if magic not in (b"Pf", b"PF"):
                raise ImageIOError(f"'{path}' is not a PFM file (bad magic {magic!r})")
            channels = 1 if magic == b"Pf" else 3
            w = int(_read_token(fh, path))
            h = int(_read_token(fh, path))
            scale = float(_read_token(fh, path))
            dtype = "<f4" if scale < 0 else ">f4"
            count = h * w * channels
            raw = fh.read(count * 4)
            if len(raw) != count * 4:
                raise ImageIOError(f"truncated PFM payload in '{path}'")
    except FileNotFoundError:
        raise ImageIOError(f"no such float map: '{path}'") from None
    except (OSError, ValueError) as exc:
        raise ImageIOError(f"cannot read float map '{path}': {exc}") from exc
    arr = np.frombuffer(raw, dtype=dtype).reshape(h, w, channels)[::-1]
    arr = arr.astype(np.float32, copy=True)
    return arr[:, :, 0] if channels == 1 else arr


def write_float_map(path, array: np.ndarray) -> None:
    """Write an (H, W, C) float32 map with a one-line self-describing header.

    Used for maps PFM cannot hold, for example 8-channel feature images.
    """
    arr = np.asarray(array, dtype="<f4")
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise ImageIOError(f"float map must be HxWxC, got shape {np.asarray(array).shape}")
    h, w, c = arr.shape
    try:
        with open(path, "wb") as fh:
            fh.write(RAW_MAGIC + f" {h} {w} {c}\n".encode("ascii"))
            fh.write(np.ascontiguousarray(arr).tobytes())
    except OSError as exc:
        raise ImageIOError(f"cannot write float map '{path}': {exc}") from exc


def read_float_map(path) -> np.ndarray:
    try:
        with open(path, "rb") as fh:
            header = fh.readline()
            parts = header.split()
            if len(parts) != 4 or parts[0] != RAW_MAGIC:
                raise ImageIOError(f"'{path}' is not a raw float map (bad header {header!r})")
            h, w, c = (int(p) for p in parts[1:])
            raw = fh.read(h * w * c * 4)
            if len(raw) != h * w * c * 4:
                raise ImageIOError(f"truncated float map payload in '{path}'")
    except FileNotFoundError:
        raise ImageIOError(f"no such float map: '{path}'") from None
    except (OSError, ValueError) as exc:
        raise ImageIOError(f"cannot read float map '{path}': {exc}") from exc
    return np.frombuffer(raw, dtype="<f4").reshape(h, w, c).astype(np.float32, copy=True)


def write_flow_pfm(path, u_x: np.ndarray, u_y: np.ndarray, valid: np.ndarray) -> None:
    """Pack a flow field and its validity mask into one 3-channel PFM."""
    stacked = np.stack([u_x, u_y, valid.astype(np.float64)], axis=-1)
    write_pfm(path, stacked)


def read_flow_pfm(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    arr = read_pfm(path)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ImageIOError(f"'{path}' does not hold a packed flow field (3 channels expected)")
    return arr[:, :, 0].astype(np.float64), arr[:, :, 1].astype(np.float64), arr[:, :, 2] > 0.5
