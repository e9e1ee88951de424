"""Stereo evaluation metrics: end-point error and bad-pixel rate."""

from __future__ import annotations

import math

import numpy as np

from .imagecore import check_same_shape


def _valid_errors(d_hat, d_gt, valid) -> np.ndarray:
    check_same_shape(d_hat, d_gt, valid)
    keep = np.asarray(valid).astype(bool)
    if not keep.any():
        raise ValueError("valid mask is empty")
    return np.abs(np.asarray(d_hat, np.float64)[keep] - np.asarray(d_gt, np.float64)[keep])


def epe(d_hat, d_gt, valid) -> float:
    # correctly rounded sum, so the result does not depend on pixel order
    err = _valid_errors(d_hat, d_gt, valid)
    return math.fsum(err.tolist()) / err.size


def bad_tau(d_hat, d_gt, valid, tau: float) -> float:
    """Percentage of valid pixels whose error is strictly greater than ``tau``."""
    err = _valid_errors(d_hat, d_gt, valid)
    return 100.0 * np.count_nonzero(err > tau) / err.size


def disparity_cap_mask(d_gt, cap: float = np.inf) -> np.ndarray:
    return (np.asarray(d_gt) < cap).astype(np.uint8)


def default_valid_mask(d_gt) -> np.ndarray:
    """Finite, positive ground truth (0 and inf mark missing GT in common benchmarks)."""
    d_gt = np.asarray(d_gt)
    return (np.isfinite(d_gt) & (d_gt > 0)).astype(np.uint8)


def evaluate_pair(d_hat, d_gt, valid=None, taus=(1.0, 2.0, 3.0), cap: float = np.inf) -> dict:
    if valid is None:
        valid = default_valid_mask(d_gt)
    valid = np.asarray(valid).astype(bool) & disparity_cap_mask(d_gt, cap).astype(bool)
    d_gt = np.where(valid, d_gt, 0.0)
    record = {"epe": epe(d_hat, d_gt, valid), "valid_pixels": int(valid.sum())}
    for tau in taus:
        record[f"bad_{tau:g}"] = bad_tau(d_hat, d_gt, valid, tau)
    return record
