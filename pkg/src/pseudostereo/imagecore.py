"""Raster conventions and file I/O.

Images are ``float64`` arrays of shape ``(H, W, 3)`` with values in ``[0, 1]``.
Scalar maps (inverse depth, disparity, confidence) are ``(H, W)`` floating
arrays. Binary masks are ``(H, W)`` ``uint8`` arrays holding 0 or 1.
"""

from __future__ import annotations

import os
import re
from pathlib import Path

import cv2
import numpy as np

PathLike = str | os.PathLike

_PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"
_PNG_GRAY, _PNG_RGB, _PNG_PALETTE, _PNG_GRAY_ALPHA, _PNG_RGBA = 0, 2, 3, 4, 6


class PfmError(ValueError):
    """Malformed PFM file. ``offset`` is the byte position of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class ImageFormatError(ValueError):
    pass


def check_image(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected an HxWx3 image, got shape {image.shape}")
    if image.shape[0] < 1 or image.shape[1] < 1:
        raise ValueError("image must be at least 1x1")
    if not np.all((image >= 0.0) & (image <= 1.0)):
        raise ValueError("image values must lie in [0, 1]")
    return image


def check_map(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values)
    if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
        raise ValueError(f"expected a non-empty HxW map, got shape {values.shape}")
    return values


def check_mask(mask: np.ndarray) -> np.ndarray:
    mask = check_map(mask)
    if not np.all((mask == 0) | (mask == 1)):
        raise ValueError("mask values must be exactly 0 or 1")
    return mask.astype(np.uint8)


def check_same_shape(*arrays: np.ndarray) -> tuple[int, int]:
    shapes = {np.shape(a)[:2] for a in arrays}
    if len(shapes) != 1:
        raise ValueError(f"dimension mismatch: {sorted(shapes)}")
    return shapes.pop()


def hflip(x: np.ndarray) -> np.ndarray:
    """Mirror columns: column ``j`` goes to ``W - 1 - j``."""
    return np.ascontiguousarray(np.asarray(x)[:, ::-1])


# PFM ---------------------------------------------------------------------


def _read_header_line(data: bytes, pos: int) -> tuple[str, int]:
    end = data.find(b"\n", pos)
    if end < 0:
        raise PfmError("truncated header", pos)
    try:
        line = data[pos:end].decode("ascii")
    except UnicodeDecodeError:
        raise PfmError("non-ASCII header", pos) from None
    return line.strip(), end + 1


def decode_pfm(data: bytes) -> np.ndarray:
    """Decode single-channel PFM bytes into a top-down ``float32`` map."""
    kind, pos = _read_header_line(data, 0)
    if kind == "PF":
        raise PfmError("unsupported channel count: 3-channel PFM", 0)
    if kind != "Pf":
        raise PfmError(f"bad magic {kind!r}", 0)

    dims_at = pos
    dims, pos = _read_header_line(data, pos)
    match = re.fullmatch(r"(\d+)\s+(\d+)", dims)
    if not match:
        raise PfmError(f"malformed dimensions {dims!r}", dims_at)
    width, height = int(match.group(1)), int(match.group(2))
    if width < 1 or height < 1:
        raise PfmError("dimensions must be positive", dims_at)
    if width * height > 2**31:
        raise PfmError("dimension overflow", dims_at)

    scale_at = pos
    scale_text, pos = _read_header_line(data, pos)
    try:
        scale = float(scale_text)
    except ValueError:
        raise PfmError(f"malformed scale {scale_text!r}", scale_at) from None
    if scale == 0.0 or not np.isfinite(scale):
        raise PfmError("scale must be finite and nonzero", scale_at)

    expected = 4 * width * height
    if len(data) - pos < expected:
        raise PfmError(
            f"truncated payload: need {expected} bytes, have {len(data) - pos}", pos
        )
    dtype = np.dtype("<f4" if scale < 0 else ">f4")
    values = np.frombuffer(data, dtype=dtype, count=width * height, offset=pos)
    # disk rows run bottom-up
    return np.flipud(values.reshape(height, width)).astype(np.float32)


def encode_pfm(values: np.ndarray) -> bytes:
    values = check_map(values)
    as_f32 = values.astype(np.float32)
    if not np.all(np.isfinite(as_f32)):
        raise ValueError("PFM payload must be finite (float32)")
    height, width = as_f32.shape
    header = f"Pf\n{width} {height}\n-1.0\n".encode("ascii")
    return header + np.flipud(as_f32).astype("<f4").tobytes()


def read_pfm(path: PathLike) -> np.ndarray:
    return decode_pfm(Path(path).read_bytes())


def write_pfm(values: np.ndarray, path: PathLike) -> None:
    """Write a little-endian single-channel PFM (scale -1.0).

    Values are stored as float32; maps already in float32 round-trip bit-exactly.
    Validation happens before the file is opened.
    """
    payload = encode_pfm(values)
    Path(path).write_bytes(payload)


# PNG ---------------------------------------------------------------------


def _png_header(path: PathLike) -> tuple[int, int]:
    with open(path, "rb") as fh:
        head = fh.read(33)
    if len(head) < 33 or head[:8] != _PNG_SIGNATURE or head[12:16] != b"IHDR":
        raise ImageFormatError(f"{path}: not a PNG file")
    return head[24], head[25]


def _quantize(values: np.ndarray, peak: int) -> np.ndarray:
    # round half up
    return np.floor(np.clip(values, 0.0, 1.0) * peak + 0.5)


def read_image(path: PathLike) -> np.ndarray:
    """Load an 8- or 16-bit PNG as an RGB float image in ``[0, 1]``.

    Grayscale inputs are replicated to three channels and alpha is dropped.
    Palette images are rejected.
    """
    bit_depth, color_type = _png_header(path)
    if color_type == _PNG_PALETTE:
        raise ImageFormatError(f"{path}: palette PNGs are not supported")
    if bit_depth not in (8, 16):
        raise ImageFormatError(f"{path}: unsupported bit depth {bit_depth}")
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise ImageFormatError(f"{path}: could not decode PNG")
    peak = 255.0 if bit_depth == 8 else 65535.0
    if raw.ndim == 2:
        raw = np.repeat(raw[:, :, None], 3, axis=2)
    elif raw.shape[2] == 4:
        raw = raw[:, :, :3]
    if raw.shape[2] == 3 and color_type in (_PNG_RGB, _PNG_RGBA):
        raw = raw[:, :, ::-1]
    elif raw.shape[2] == 2:
        raw = np.repeat(raw[:, :, :1], 3, axis=2)
    return raw.astype(np.float64) / peak


def write_image(image: np.ndarray, path: PathLike, bit_depth: int = 8) -> None:
    image = check_image(image)
    if bit_depth == 8:
        raw = _quantize(image, 255).astype(np.uint8)
    elif bit_depth == 16:
        raw = _quantize(image, 65535).astype(np.uint16)
    else:
        raise ValueError(f"unsupported bit depth {bit_depth}")
    if not cv2.imwrite(str(path), np.ascontiguousarray(raw[:, :, ::-1])):
        raise OSError(f"could not write {path}")


def read_mask(path: PathLike) -> np.ndarray:
    """Read an 8-bit grayscale mask PNG: 0 -> 0, anything else -> 1."""
    bit_depth, color_type = _png_header(path)
    if color_type != _PNG_GRAY or bit_depth != 8:
        raise ImageFormatError(f"{path}: masks must be 8-bit grayscale PNG")
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise ImageFormatError(f"{path}: could not decode PNG")
    return (raw > 0).astype(np.uint8)


def write_mask(mask: np.ndarray, path: PathLike) -> None:
    mask = check_mask(mask)
    if not cv2.imwrite(str(path), mask * np.uint8(255)):
        raise OSError(f"could not write {path}")


def read_scalar_map(path: PathLike) -> np.ndarray:
    """Read a scalar map from ``.pfm`` or ``.npy``."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".pfm":
        return read_pfm(path).astype(np.float64)
    if suffix == ".npy":
        values = np.load(path, allow_pickle=False)
        if values.ndim == 3 and values.shape[2] == 1:
            values = values[:, :, 0]
        return check_map(values).astype(np.float64)
    raise ValueError(f"{path}: unsupported scalar map format {suffix!r}")
