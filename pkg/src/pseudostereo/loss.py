"""Masked stereo supervision losses, evaluated per pixel (no autodiff).

The combined loss weights the disparity term by confidence and the
non-occlusion photometric term by ``mu * (1 - confidence)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .imagecore import check_image, check_map, check_mask, check_same_shape
from .warp import backward_warp, backward_warp_mask

SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2
REDUCTIONS = ("all", "contributing")


@dataclass(frozen=True)
class LossConfig:
    beta: float = 0.85
    mu: float = 0.1
    ssim_window: int = 3
    reduction: str = "all"
    # ablation switches
    use_noc_mask: bool = True
    use_inp_mask: bool = True
    use_confidence: bool = True

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must lie in [0, 1], got {self.beta}")
        if self.mu < 0:
            raise ValueError(f"mu must be non-negative, got {self.mu}")
        if self.ssim_window < 1 or self.ssim_window % 2 == 0:
            raise ValueError(f"ssim_window must be odd and >= 1, got {self.ssim_window}")
        if self.reduction not in REDUCTIONS:
            raise ValueError(f"reduction must be one of {REDUCTIONS}")


@dataclass
class LossReport:
    l_d_map: np.ndarray
    l_p_map: np.ndarray
    l_np_map: np.ndarray
    l_zero_map: np.ndarray
    l_zero_mean: float
    counts: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "l_zero_mean": self.l_zero_mean,
            "l_d_mean": float(self.l_d_map.mean()),
            "l_p_mean": float(self.l_p_map.mean()),
            "l_np_mean": float(self.l_np_map.mean()),
            "counts": dict(self.counts),
        }


def l1_disparity(d_hat: np.ndarray, d: np.ndarray) -> np.ndarray:
    check_same_shape(d_hat, d)
    return np.abs(np.asarray(d_hat, np.float64) - np.asarray(d, np.float64))


def _box_mean(x: np.ndarray, window: int) -> np.ndarray:
    r = window // 2
    h, w = x.shape[:2]
    pad = [(r, r), (r, r)] + [(0, 0)] * (x.ndim - 2)
    padded = np.pad(x, pad, mode="reflect")
    acc = np.zeros_like(x, dtype=np.float64)
    for dy in range(window):
        for dx in range(window):
            acc += padded[dy : dy + h, dx : dx + w]
    return acc / (window * window)


def ssim(a: np.ndarray, b: np.ndarray, window: int = 3) -> np.ndarray:
    """Per-pixel SSIM with box-filtered local statistics (mirror borders),
    averaged over channels and clamped to ``[-1, 1]``."""
    a = np.asarray(a, np.float64)
    b = np.asarray(b, np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if window < 1 or window % 2 == 0:
        raise ValueError(f"window must be odd and >= 1, got {window}")
    if window > a.shape[0] or window > a.shape[1]:
        raise ValueError(f"window {window} larger than image {a.shape[:2]}")
    mu_a = _box_mean(a, window)
    mu_b = _box_mean(b, window)
    var_a = _box_mean(a * a, window) - mu_a * mu_a
    var_b = _box_mean(b * b, window) - mu_b * mu_b
    cov = _box_mean(a * b, window) - mu_a * mu_b
    num = (2 * mu_a * mu_b + SSIM_C1) * (2 * cov + SSIM_C2)
    den = (mu_a * mu_a + mu_b * mu_b + SSIM_C1) * (var_a + var_b + SSIM_C2)
    s = num / den
    if s.ndim == 3:
        s = s.mean(axis=2)
    return np.clip(s, -1.0, 1.0)


def photometric(a: np.ndarray, b: np.ndarray, cfg: LossConfig = LossConfig()) -> np.ndarray:
    a = np.asarray(a, np.float64)
    b = np.asarray(b, np.float64)
    dssim = (1.0 - ssim(a, b, cfg.ssim_window)) / 2.0
    l1 = np.abs(a - b)
    if l1.ndim == 3:
        l1 = l1.mean(axis=2)
    return cfg.beta * dssim + (1.0 - cfg.beta) * l1


def photometric_mask(d_hat, m_noc, m_inp, valid, cfg: LossConfig = LossConfig()) -> np.ndarray:
    """Pixels kept by the non-occlusion photometric term."""
    keep = np.asarray(valid, np.uint8).copy()
    if cfg.use_noc_mask:
        keep &= check_mask(m_noc)
    if cfg.use_inp_mask:
        keep &= backward_warp_mask(1 - check_mask(m_inp), d_hat)
    return keep


def non_occlusion_photometric(
    image_l, image_r, d_hat, m_noc, m_inp, cfg: LossConfig = LossConfig()
) -> np.ndarray:
    """Photometric loss against the backward-warped right view, zeroed on
    occluded, inpainted and out-of-view pixels."""
    return _non_occlusion_terms(image_l, image_r, d_hat, m_noc, m_inp, cfg)[1]


def _non_occlusion_terms(image_l, image_r, d_hat, m_noc, m_inp, cfg):
    image_l = check_image(image_l)
    image_r = check_image(image_r)
    d_hat = check_map(d_hat).astype(np.float64)
    check_same_shape(image_l, image_r, d_hat, m_noc, m_inp)
    recon, valid = backward_warp(image_r, d_hat)
    l_p = photometric(image_l, recon, cfg)
    keep = photometric_mask(d_hat, m_noc, m_inp, valid, cfg)
    return l_p, keep * l_p, keep


def combined_loss(
    d_hat, d, confidence, image_l, image_r, m_noc, m_inp, cfg: LossConfig = LossConfig()
) -> LossReport:
    """``C * L_d + mu * (1 - C) * L_np`` per pixel, plus a scalar reduction.

    With ``reduction="all"`` the scalar is the mean over every pixel; with
    ``"contributing"`` only pixels with nonzero weight in either term count.
    """
    confidence = check_map(confidence).astype(np.float64)
    if not np.all((confidence >= 0.0) & (confidence <= 1.0)):
        raise ValueError("confidence must lie in [0, 1]")
    check_same_shape(d_hat, d, confidence, image_l)
    l_d = l1_disparity(d_hat, d)
    l_p, l_np, keep = _non_occlusion_terms(image_l, image_r, d_hat, m_noc, m_inp, cfg)

    if cfg.use_confidence:
        w_d, w_p = confidence, 1.0 - confidence
    else:
        w_d, w_p = np.ones_like(confidence), np.ones_like(confidence)
    l_zero = w_d * l_d + cfg.mu * w_p * l_np

    if cfg.reduction == "all":
        contributing = np.ones(l_zero.shape, dtype=bool)
    else:
        contributing = (w_d > 0) | ((cfg.mu * w_p > 0) & (keep == 1))
    n = int(contributing.sum())
    mean = float(l_zero[contributing].sum() / n) if n else 0.0
    counts = {
        "pixels": int(l_zero.size),
        "photometric_kept": int(keep.sum()),
        "m_noc": int(np.sum(m_noc)),
        "m_inp": int(np.sum(m_inp)),
        "contributing": n,
    }
    return LossReport(l_d, l_p, l_np, l_zero, mean, counts)
