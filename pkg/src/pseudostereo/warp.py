"""Disparity cleanup, forward splatting with occlusion masks, backward sampling.

Geometry: a left pixel at column ``x`` with disparity ``d`` lands at column
``x - d`` in the right view.
"""

from __future__ import annotations

import logging
from typing import NamedTuple

import cv2
import numpy as np

from .imagecore import check_image, check_map, check_same_shape

logger = logging.getLogger(__name__)

DEFAULT_SHARPEN_THRESHOLD = 3.0
DEFAULT_DILATE_KERNEL = 3
MASK_EPS = 1e-6

_SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64) / 8.0


def horizontal_gradient(d: np.ndarray) -> np.ndarray:
    """Horizontal Sobel response normalized to px/px, replicated borders."""
    padded = np.pad(np.asarray(d, np.float64), 1, mode="edge")
    h, w = d.shape
    out = np.zeros((h, w))
    for dy in range(3):
        for dx in range(3):
            if _SOBEL_X[dy, dx]:
                out += _SOBEL_X[dy, dx] * padded[dy : dy + h, dx : dx + w]
    return out


def sharpen_disparity(d: np.ndarray, grad_thresh: float = DEFAULT_SHARPEN_THRESHOLD) -> np.ndarray:
    """Snap "flying" ramp pixels at depth edges to the nearest stable value.

    A pixel is flying when its horizontal gradient magnitude exceeds
    ``grad_thresh``. It takes the disparity of the nearest non-flying pixel in
    its row; on equal distance the left one wins. Rows that are entirely flying
    are left unchanged.
    """
    d = check_map(d).astype(np.float64)
    flying = np.abs(horizontal_gradient(d)) > grad_thresh
    out = d.copy()
    cols = np.arange(d.shape[1])
    for y in np.flatnonzero(flying.any(axis=1)):
        stable = np.flatnonzero(~flying[y])
        if stable.size == 0:
            logger.warning("row %d is entirely flying; left unsharpened", y)
            continue
        targets = cols[flying[y]]
        right = np.searchsorted(stable, targets)
        left = np.clip(right - 1, 0, stable.size - 1)
        right = np.clip(right, 0, stable.size - 1)
        left_dist = np.abs(targets - stable[left])
        right_dist = np.abs(stable[right] - targets)
        nearest = np.where(left_dist <= right_dist, stable[left], stable[right])
        out[y, targets] = d[y, nearest]
    return out


def dilate_disparity(d: np.ndarray, kernel: int = DEFAULT_DILATE_KERNEL) -> np.ndarray:
    """Grayscale dilation (windowed max) with a ``kernel x kernel`` square."""
    d = check_map(d).astype(np.float64)
    if kernel < 1 or kernel % 2 == 0:
        raise ValueError(f"dilation kernel must be odd and >= 1, got {kernel}")
    if kernel == 1:
        return d.copy()
    # cv2's default dilation border ignores out-of-image samples
    return cv2.dilate(d, np.ones((kernel, kernel), np.uint8))


class ForwardWarp(NamedTuple):
    warped: np.ndarray
    m_noc: np.ndarray
    m_inp: np.ndarray


def target_columns(d: np.ndarray) -> np.ndarray:
    """Destination column of every source pixel, ``x - d`` rounded half up."""
    cols = np.arange(d.shape[1], dtype=np.float64)
    return np.floor(cols[None, :] - d + 0.5).astype(np.int64)


def forward_warp(image: np.ndarray, d: np.ndarray) -> ForwardWarp:
    """Splat the left image into the right view.

    On collisions the larger disparity (nearer surface) wins; equal disparities
    resolve to the rightmost source. ``m_noc`` is in left coordinates and marks
    sources that won an in-bounds target. ``m_inp`` is in right coordinates and
    marks targets nobody landed on; those pixels are black in ``warped``.
    """
    image = check_image(image)
    d = check_map(d).astype(np.float64)
    h, w = check_same_shape(image, d)
    if np.any(d < 0) or not np.all(np.isfinite(d)):
        raise ValueError("disparity must be finite and non-negative")

    tx = target_columns(d)
    ys, xs = np.indices((h, w))
    inside = (tx >= 0) & (tx < w)
    src_y, src_x = ys[inside], xs[inside]
    cell = src_y * w + tx[inside]
    # sort by target cell, then disparity, then source column; the last
    # entry of each cell group is the winner
    order = np.lexsort((src_x, d[inside], cell))
    cell_sorted = cell[order]
    last = np.ones(cell_sorted.size, dtype=bool)
    last[:-1] = cell_sorted[1:] != cell_sorted[:-1]
    win = order[last]

    m_noc = np.zeros((h, w), np.uint8)
    m_noc[src_y[win], src_x[win]] = 1
    warped = np.zeros_like(image, dtype=np.float64)
    m_inp = np.ones((h, w), np.uint8)
    wy, wx = src_y[win], tx[inside][win]
    warped[wy, wx] = image[src_y[win], src_x[win]]
    m_inp[wy, wx] = 0
    return ForwardWarp(warped, m_noc, m_inp)


def _sample_rows(values: np.ndarray, d_hat: np.ndarray):
    """Linear interpolation of ``values`` at ``(x - d_hat, y)`` along rows."""
    h, w = d_hat.shape
    xs = np.arange(w, dtype=np.float64)[None, :] - d_hat
    x0 = np.floor(xs)
    frac = xs - x0
    x0 = x0.astype(np.int64)
    x1 = np.where(frac > 0, x0 + 1, x0)
    valid = (x0 >= 0) & (x1 <= w - 1)
    c0 = np.clip(x0, 0, w - 1)
    c1 = np.clip(x1, 0, w - 1)
    rows = np.arange(h)[:, None]
    if values.ndim == 3:
        frac = frac[:, :, None]
    a = values[rows, c0]
    b = values[rows, c1]
    out = (1.0 - frac) * a + frac * b
    return out, valid


class BackwardWarp(NamedTuple):
    image: np.ndarray
    valid: np.ndarray


def backward_warp(image_r: np.ndarray, d_hat: np.ndarray) -> BackwardWarp:
    """Reconstruct the left view by sampling the right image at ``x - d_hat``.

    A pixel is valid when every column with nonzero interpolation weight lies
    inside the image; invalid pixels are black.
    """
    image_r = check_image(image_r)
    d_hat = check_map(d_hat).astype(np.float64)
    check_same_shape(image_r, d_hat)
    sampled, valid = _sample_rows(image_r.astype(np.float64), d_hat)
    sampled[~valid] = 0.0
    return BackwardWarp(sampled, valid.astype(np.uint8))


def backward_warp_mask(mask: np.ndarray, d_hat: np.ndarray) -> np.ndarray:
    """Backward-warp a binary mask; a pixel stays 1 only if its whole
    interpolation support is 1 and inside the image."""
    mask = np.asarray(mask)
    d_hat = check_map(d_hat).astype(np.float64)
    check_same_shape(mask, d_hat)
    sampled, valid = _sample_rows(mask.astype(np.float64), d_hat)
    return ((sampled >= 1.0 - MASK_EPS) & valid).astype(np.uint8)
