"""Inverse-depth normalization and flip-consistency confidence."""

from __future__ import annotations

import logging

import numpy as np

from .imagecore import check_map, check_same_shape, hflip

logger = logging.getLogger(__name__)


def normalize_inverse_depth(raw: np.ndarray) -> np.ndarray:
    """Min-max normalize a relative inverse-depth prediction to ``[0, 1]``.

    A constant map carries no parallax and normalizes to all zeros.
    """
    raw = check_map(raw).astype(np.float64)
    if not np.all(np.isfinite(raw)):
        raise ValueError("inverse depth contains non-finite values")
    lo, hi = raw.min(), raw.max()
    if hi == lo:
        logger.warning("constant inverse-depth map; normalizing to zeros")
        return np.zeros_like(raw)
    return (raw - lo) / (hi - lo)


def flip_consistency(depth: np.ndarray, depth_of_flipped: np.ndarray) -> np.ndarray:
    """Per-pixel agreement ``1 - |D - H^-1(D')|`` before normalization."""
    check_same_shape(depth, depth_of_flipped)
    return 1.0 - np.abs(np.asarray(depth, np.float64) - hflip(depth_of_flipped))


def tcg_confidence(depth: np.ndarray, depth_of_flipped: np.ndarray) -> np.ndarray:
    """Training-free confidence from flip consistency of a depth model.

    Args:
        depth: normalized inverse depth predicted on the image.
        depth_of_flipped: normalized inverse depth predicted on the horizontally
            flipped image, in the flipped frame (not a flip of ``depth``).

    Returns:
        Confidence in ``[0, 1]``; all ones when the agreement map is constant.
    """
    depth = check_map(depth)
    depth_of_flipped = check_map(depth_of_flipped)
    u = flip_consistency(depth, depth_of_flipped)
    lo, hi = u.min(), u.max()
    if hi == lo:
        return np.ones_like(u)
    return (u - lo) / (hi - lo)
