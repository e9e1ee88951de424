"""Hole filling for warped right views.

Two heuristic backends and the composite used to merge an externally
inpainted image back into the warped view.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .imagecore import check_image, check_mask, check_same_shape

logger = logging.getLogger(__name__)

BACKENDS = ("neighbor_fill", "random_background", "external")

# on-disk naming for the out-of-process inpainting round trip
WARPED_SUFFIX = ".warped.png"
MASK_SUFFIX = ".minp.png"
INPAINTED_SUFFIX = ".inpainted.png"


@dataclass
class InpaintRequest:
    warped: np.ndarray
    m_inp: np.ndarray
    backend: str = "neighbor_fill"
    seed: int = 0
    texture: np.ndarray | None = None
    external_image: np.ndarray | None = None

    def __post_init__(self):
        if self.backend not in BACKENDS:
            raise ValueError(f"unknown inpaint backend {self.backend!r}")
        check_same_shape(self.warped, self.m_inp)
        if self.backend == "external":
            if self.external_image is None:
                raise ValueError("external backend needs external_image")
            check_same_shape(self.warped, self.external_image)

    def run(self) -> np.ndarray:
        if self.backend == "neighbor_fill":
            return neighbor_fill(self.warped, self.m_inp)
        if self.backend == "random_background":
            texture = self.texture if self.texture is not None else self.warped
            return random_background_fill(
                self.warped, self.m_inp, texture, np.random.default_rng(self.seed)
            )
        return composite_external(self.warped, self.m_inp, self.external_image)


def neighbor_fill(warped: np.ndarray, m_inp: np.ndarray) -> np.ndarray:
    """Copy each hole from the nearest non-hole pixel to its left in the row,
    falling back to the nearest one on the right. Rows with no valid pixel
    become black."""
    warped = check_image(warped)
    m_inp = check_mask(m_inp)
    h, w = check_same_shape(warped, m_inp)
    known = m_inp == 0
    cols = np.broadcast_to(np.arange(w), (h, w))

    left_idx = np.maximum.accumulate(np.where(known, cols, -1), axis=1)
    right_idx = np.minimum.accumulate(np.where(known, cols, w)[:, ::-1], axis=1)[:, ::-1]
    src = np.where(left_idx >= 0, left_idx, right_idx)
    empty_rows = ~known.any(axis=1)
    if empty_rows.any():
        logger.warning("%d rows are entirely holes; filled with 0", int(empty_rows.sum()))
    src = np.clip(src, 0, w - 1)

    out = warped.astype(np.float64, copy=True)
    rows = np.arange(h)[:, None]
    filled = warped[rows, src]
    holes = ~known
    out[holes] = filled[holes]
    out[empty_rows] = 0.0
    return out


def random_background_fill(
    warped: np.ndarray,
    m_inp: np.ndarray,
    texture: np.ndarray,
    rng: np.random.Generator,
) -> np.ndarray:
    """Fill holes from one randomly offset crop of a (tiled) texture."""
    warped = check_image(warped)
    m_inp = check_mask(m_inp)
    h, w = check_same_shape(warped, m_inp)
    texture = np.asarray(texture)
    if texture.size == 0:
        raise ValueError("texture is empty")
    texture = check_image(texture)
    th, tw = texture.shape[:2]
    oy = int(rng.integers(th))
    ox = int(rng.integers(tw))
    reps_y = -(-(oy + h) // th)
    reps_x = -(-(ox + w) // tw)
    crop = np.tile(texture, (reps_y, reps_x, 1))[oy : oy + h, ox : ox + w]
    return np.where(m_inp[:, :, None] == 1, crop, warped).astype(np.float64)


def composite_external(warped: np.ndarray, m_inp: np.ndarray, inpainted: np.ndarray) -> np.ndarray:
    """``M * I_d + (1 - M) * warped`` for a binary ``M``; kept pixels are
    copied bit-for-bit from ``warped``."""
    warped = np.asarray(warped)
    inpainted = np.asarray(inpainted)
    m_inp = check_mask(m_inp)
    check_same_shape(warped, m_inp, inpainted)
    if warped.shape != inpainted.shape:
        raise ValueError(f"dimension mismatch: {warped.shape} vs {inpainted.shape}")
    return np.where(m_inp[:, :, None] == 1, inpainted, warped)
