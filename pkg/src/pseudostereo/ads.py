"""Adaptive disparity selection: sample a width-relative scale, build disparity."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .imagecore import check_map, read_scalar_map


@dataclass(frozen=True)
class AdsConfig:
    """Three-band scale distribution.

    The scale is drawn from ``[c-2r, c-r)`` with probability ``p_s``,
    ``[c-r, c+r)`` with ``p_c`` and ``[c+r, c+2r)`` with ``p_l``.
    """

    c: float = 0.1
    r: float = 0.05
    p_s: float = 0.1
    p_c: float = 0.8
    p_l: float = 0.1
    seed: int = 0

    def __post_init__(self):
        probs = (self.p_s, self.p_c, self.p_l)
        if any(p < 0 for p in probs):
            raise ValueError(f"band probabilities must be non-negative: {probs}")
        if not math.isclose(sum(probs), 1.0, abs_tol=1e-9):
            raise ValueError(f"band probabilities must sum to 1, got {sum(probs)}")
        if self.r < 0:
            raise ValueError(f"radius must be non-negative, got {self.r}")
        if self.c - 2 * self.r < 0:
            raise ValueError("c - 2r must be non-negative so scales stay >= 0")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")

    @property
    def bands(self) -> tuple[tuple[float, float], ...]:
        c, r = self.c, self.r
        return ((c - 2 * r, c - r), (c - r, c + r), (c + r, c + 2 * r))

    @classmethod
    def from_dict(cls, data: Mapping) -> "AdsConfig":
        return cls(**{k: data[k] for k in cls.__dataclass_fields__ if k in data})

    def to_dict(self) -> dict:
        return asdict(self)


def sample_scale(cfg: AdsConfig, rng: np.random.Generator, size: int | None = None):
    """Draw one scale (``size=None``) or an array of ``size`` scales.

    Each draw consumes one uniform for the band choice and one for the position
    inside the band, so results depend only on the generator state.
    """
    pick = rng.random(size)
    pos = rng.random(size)
    cuts = np.array([cfg.p_s, cfg.p_s + cfg.p_c])
    band = np.searchsorted(cuts, pick, side="right")
    lows = np.array([b[0] for b in cfg.bands])
    highs = np.array([b[1] for b in cfg.bands])
    lo, hi = lows[band], highs[band]
    s = lo + (hi - lo) * pos
    # keep the half-open convention when rounding lands on the upper edge
    s = np.where((s >= hi) & (hi > lo), np.nextafter(hi, lo), s)
    if size is None:
        return float(s)
    return s


def build_disparity(depth: np.ndarray, scale: float, width: int | None = None) -> np.ndarray:
    """Pseudo disparity ``d = D * s * w`` in pixels."""
    depth = check_map(depth).astype(np.float64)
    if scale < 0:
        raise ValueError(f"scale must be non-negative, got {scale}")
    if width is None:
        width = depth.shape[1]
    return depth * (scale * width)


def disparity_stats(records: Iterable[Mapping], root: str | Path = ".") -> dict:
    """Pooled per-dataset mean and global max of the disparity maps in a manifest.

    Records without a disparity output (failed samples) are skipped.
    """
    root = Path(root)
    totals: dict[str, list] = {}
    seen = 0
    for record in records:
        outputs = record.get("outputs") or {}
        rel = outputs.get("disparity_pfm")
        if not rel:
            continue
        seen += 1
        path = Path(rel)
        if not path.is_absolute():
            path = root / path
        disp = read_scalar_map(path)
        acc = totals.setdefault(record.get("dataset") or "default", [0.0, 0, -np.inf, 0])
        acc[0] += float(disp.sum())
        acc[1] += disp.size
        acc[2] = max(acc[2], float(disp.max()))
        acc[3] += 1
    if not seen:
        raise ValueError("no records")
    return {
        name: {"mean": s / n, "max": mx, "maps": count}
        for name, (s, n, mx, count) in sorted(totals.items())
    }


def load_config_file(path: str | Path) -> dict:
    """Read a JSON run configuration (sections: ads, warp, inpaint, loss)."""
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    return data
