"""Per-sample generation, the parallel batch runner and the JSONL manifest."""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterable, Iterator, Mapping

import cv2
import numpy as np

from . import __version__
from .ads import AdsConfig, build_disparity, sample_scale
from .depthproc import normalize_inverse_depth, tcg_confidence
from .imagecore import (
    read_image,
    read_mask,
    read_scalar_map,
    write_image,
    write_mask,
    write_pfm,
)
from .inpaint import BACKENDS, MASK_SUFFIX, WARPED_SUFFIX, InpaintRequest
from .loss import LossConfig
from .warp import (
    DEFAULT_DILATE_KERNEL,
    DEFAULT_SHARPEN_THRESHOLD,
    dilate_disparity,
    forward_warp,
    sharpen_disparity,
)

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.jsonl"
OUTPUT_SUFFIXES = {
    "right_image": ".right.png",
    "warped_image": WARPED_SUFFIX,
    "disparity_pfm": ".disp.pfm",
    "confidence_pfm": ".conf.pfm",
    "m_noc_png": ".mnoc.png",
    "m_inp_png": MASK_SUFFIX,
}


@dataclass(frozen=True)
class WarpConfig:
    sharpen_threshold: float = DEFAULT_SHARPEN_THRESHOLD
    dilate_kernel: int = DEFAULT_DILATE_KERNEL

    def __post_init__(self):
        if self.dilate_kernel < 1 or self.dilate_kernel % 2 == 0:
            raise ValueError(f"dilate_kernel must be odd and >= 1, got {self.dilate_kernel}")


@dataclass(frozen=True)
class RunConfig:
    ads: AdsConfig = field(default_factory=AdsConfig)
    warp: WarpConfig = field(default_factory=WarpConfig)
    backend: str = "neighbor_fill"
    texture: str | None = None
    loss: LossConfig = field(default_factory=LossConfig)

    def __post_init__(self):
        if self.backend not in BACKENDS:
            raise ValueError(f"unknown inpaint backend {self.backend!r}")

    @classmethod
    def from_dict(cls, data: Mapping) -> "RunConfig":
        """Build from the JSON config layout::

            {"seed": 0,
             "ads": {"c": 0.1, "r": 0.05, "p_s": 0.1, "p_c": 0.8, "p_l": 0.1},
             "warp": {"sharpen_threshold": 3.0, "dilate_kernel": 3},
             "inpaint": {"backend": "neighbor_fill", "texture": null},
             "loss": {"beta": 0.85, "mu": 0.1, "ssim_window": 3}}
        """
        ads = dict(data.get("ads", {}))
        if "seed" in data:
            ads.setdefault("seed", data["seed"])
        inpaint = data.get("inpaint", {})
        return cls(
            ads=AdsConfig.from_dict(ads),
            warp=_from_mapping(WarpConfig, data.get("warp", {})),
            backend=inpaint.get("backend", "neighbor_fill"),
            texture=inpaint.get("texture"),
            loss=_from_mapping(LossConfig, data.get("loss", {})),
        )

    def to_dict(self) -> dict:
        return {
            "seed": self.ads.seed,
            "ads": self.ads.to_dict(),
            "warp": asdict(self.warp),
            "inpaint": {"backend": self.backend, "texture": self.texture},
            "loss": asdict(self.loss),
        }


def _from_mapping(cls, data: Mapping):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**data)


@dataclass
class GenerationRecord:
    index: int
    stem: str
    left_image: str
    depth: str
    depth_flipped: str | None = None
    dataset: str = "default"
    sampled_s: float | None = None
    seed: int = 0
    outputs: dict = field(default_factory=dict)
    backend: str = "neighbor_fill"
    tool_version: str = __version__
    status: str = "ok"
    error: str | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "GenerationRecord":
        return cls(**json.loads(line))

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def derive_seed(global_seed: int, index: int) -> int:
    """Independent 64-bit stream seed for sample ``index``."""
    ss = np.random.SeedSequence(global_seed, spawn_key=(index,))
    return int(ss.generate_state(1, np.uint64)[0])


def sample_stem(index: int, left: str | Path) -> str:
    return f"{index:06d}_{Path(left).stem}"


def load_depth(path: str | Path, shape: tuple[int, int]) -> np.ndarray:
    """Read a raw inverse-depth map and bilinearly resize it to ``shape``."""
    raw = read_scalar_map(path)
    if raw.shape != shape:
        raw = cv2.resize(raw, (shape[1], shape[0]), interpolation=cv2.INTER_LINEAR)
    return raw


def synthesize(left, depth_raw, depth_flipped_raw, cfg: RunConfig, rng, texture=None,
               external_image=None) -> dict:
    """Run the in-memory chain and return every intermediate product."""
    h, w = left.shape[:2]
    depth = normalize_inverse_depth(depth_raw)
    if depth_flipped_raw is not None:
        confidence = tcg_confidence(depth, normalize_inverse_depth(depth_flipped_raw))
    else:
        confidence = np.ones((h, w))
    s = sample_scale(cfg.ads, rng)
    disp = build_disparity(depth, s, w)
    disp = sharpen_disparity(disp, cfg.warp.sharpen_threshold)
    disp = dilate_disparity(disp, cfg.warp.dilate_kernel)
    fw = forward_warp(left, disp)
    inpaint_seed = int(rng.integers(2**63))
    right = None
    if cfg.backend != "external" or external_image is not None:
        right = InpaintRequest(
            fw.warped, fw.m_inp, cfg.backend, seed=inpaint_seed,
            texture=texture if texture is not None else left,
            external_image=external_image,
        ).run()
    return {
        "scale": s,
        "depth": depth,
        "confidence": confidence,
        "disparity": disp,
        "warped": fw.warped,
        "m_noc": fw.m_noc,
        "m_inp": fw.m_inp,
        "right": right,
    }


def generate(
    left: str | Path,
    depth: str | Path,
    depth_flipped: str | Path | None,
    cfg: RunConfig,
    out_dir: str | Path,
    index: int = 0,
    dataset: str = "default",
    base_dir: str | Path | None = None,
) -> GenerationRecord:
    """Generate one stereo sample and its labels under ``out_dir``.

    The sample seed derives from ``(cfg.ads.seed, index)``. Output paths in the
    record are relative to ``out_dir``; input paths are kept as given and
    resolved against ``base_dir`` when relative. Nothing is left on disk if a
    stage fails.
    """
    out_dir = Path(out_dir)
    base = Path(base_dir) if base_dir is not None else Path(".")
    seed = derive_seed(cfg.ads.seed, index)
    stem = sample_stem(index, left)
    record = GenerationRecord(
        index=index, stem=stem, left_image=str(left), depth=str(depth),
        depth_flipped=str(depth_flipped) if depth_flipped else None,
        dataset=dataset, seed=seed, backend=cfg.backend,
    )

    left_img = read_image(base / left)
    shape = left_img.shape[:2]
    raw = load_depth(base / depth, shape)
    raw_f = load_depth(base / depth_flipped, shape) if depth_flipped else None
    texture = read_image(cfg.texture) if cfg.texture else None
    result = synthesize(left_img, raw, raw_f, cfg, np.random.default_rng(seed), texture)
    record.sampled_s = result["scale"]

    writers = {
        "warped_image": lambda p: write_image(result["warped"], p),
        "disparity_pfm": lambda p: write_pfm(result["disparity"].astype(np.float32), p),
        "confidence_pfm": lambda p: write_pfm(result["confidence"].astype(np.float32), p),
        "m_noc_png": lambda p: write_mask(result["m_noc"], p),
        "m_inp_png": lambda p: write_mask(result["m_inp"], p),
    }
    if result["right"] is not None:
        writers["right_image"] = lambda p: write_image(result["right"], p)

    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    try:
        for key in sorted(writers):
            name = stem + OUTPUT_SUFFIXES[key]
            writers[key](out_dir / name)
            written.append(out_dir / name)
            record.outputs[key] = name
    except Exception:
        for path in written:
            path.unlink(missing_ok=True)
        raise
    return record


# batch -------------------------------------------------------------------


def read_sample_list(path: str | Path) -> list[dict]:
    """Samples as JSON lines: ``{"left", "depth", ["depth_flipped"], ["dataset"]}``."""
    samples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            entry = json.loads(line)
            if "left" not in entry or "depth" not in entry:
                raise ValueError(f"{path}:{lineno}: sample needs 'left' and 'depth'")
            samples.append(entry)
    return samples


def _run_sample(job) -> GenerationRecord:
    index, sample, cfg, out_dir, base_dir = job
    try:
        return generate(
            sample["left"], sample["depth"], sample.get("depth_flipped"), cfg, out_dir,
            index=index, dataset=sample.get("dataset", "default"), base_dir=base_dir,
        )
    except Exception as exc:  # one bad sample must not sink the batch
        logger.error("sample %d failed: %s", index, exc)
        return GenerationRecord(
            index=index, stem=sample_stem(index, sample["left"]),
            left_image=str(sample["left"]), depth=str(sample["depth"]),
            depth_flipped=sample.get("depth_flipped"),
            dataset=sample.get("dataset", "default"),
            seed=derive_seed(cfg.ads.seed, index), backend=cfg.backend,
            status="error", error=f"{type(exc).__name__}: {exc}",
        )


def batch(
    samples: list[Mapping],
    cfg: RunConfig,
    out_dir: str | Path,
    workers: int = 1,
    base_dir: str | Path | None = None,
) -> list[GenerationRecord]:
    """Generate every sample and write ``manifest.jsonl`` in index order.

    Results do not depend on ``workers``: each sample has its own RNG stream
    and records are written in input order.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if not os.access(out_dir, os.W_OK):
        raise PermissionError(f"output directory {out_dir} is not writable")
    jobs = [(i, dict(s), cfg, out_dir, base_dir) for i, s in enumerate(samples)]
    records = []
    with open(out_dir / MANIFEST_NAME, "w", encoding="utf-8") as manifest:
        if workers <= 1 or len(jobs) <= 1:
            results: Iterable[GenerationRecord] = map(_run_sample, jobs)
            for record in results:
                manifest.write(record.to_json() + "\n")
                records.append(record)
        else:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                for record in pool.map(_run_sample, jobs):
                    manifest.write(record.to_json() + "\n")
                    manifest.flush()
                    records.append(record)
    return records


def read_manifest(path: str | Path) -> list[GenerationRecord]:
    with open(path, encoding="utf-8") as fh:
        return [GenerationRecord.from_json(line) for line in fh if line.strip()]


def write_manifest(records: Iterable[GenerationRecord], path: str | Path) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(record.to_json() + "\n")
    tmp.replace(path)


def iter_records(path: str | Path) -> Iterator[dict]:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                yield json.loads(line)


# preview -----------------------------------------------------------------


def colorize_disparity(disp: np.ndarray, max_disp: float | None = None) -> np.ndarray:
    """Turbo colormap; 0 maps to the low end and ``max_disp`` to the high end."""
    if max_disp is None:
        max_disp = float(disp.max())
    scaled = np.zeros_like(disp) if max_disp <= 0 else np.clip(disp / max_disp, 0, 1)
    idx = np.floor(scaled * 255 + 0.5).astype(np.uint8)
    bgr = cv2.applyColorMap(idx, cv2.COLORMAP_TURBO)
    return bgr[:, :, ::-1].astype(np.float64) / 255.0


def placeholder_panel(h: int, w: int, text: str = "absent") -> np.ndarray:
    # drawing needs 8-bit
    panel = np.full((h, w, 3), 128, np.uint8)
    cv2.line(panel, (0, 0), (w - 1, h - 1), (64, 64, 64), 1)
    cv2.line(panel, (0, h - 1), (w - 1, 0), (64, 64, 64), 1)
    scale = max(0.3, min(h, w) / 200)
    cv2.putText(panel, text, (2, max(12, h // 2)), cv2.FONT_HERSHEY_SIMPLEX, scale,
                (255, 255, 255), 1, cv2.LINE_AA)
    return panel.astype(np.float64) / 255.0


def preview(record: GenerationRecord | Mapping, root: str | Path,
            base_dir: str | Path | None = None) -> np.ndarray:
    """3x2 collage: left | warped | right over disparity | confidence | masks.

    The left image is required; any other missing output gets a placeholder.
    Masks are drawn with non-occlusion in red and holes in blue.
    """
    if isinstance(record, GenerationRecord):
        record = asdict(record)
    root = Path(root)
    base = Path(base_dir) if base_dir is not None else Path(".")
    left_path = base / record["left_image"]
    if not left_path.exists():
        raise FileNotFoundError(f"missing left image {left_path}")
    left = read_image(left_path)
    h, w = left.shape[:2]
    outputs = record.get("outputs") or {}

    def load(key, reader):
        rel = outputs.get(key)
        if not rel or not (root / rel).exists():
            return None
        return reader(root / rel)

    def fit(panel):
        return panel if panel is not None and panel.shape[:2] == (h, w) else None

    warped = fit(load("warped_image", read_image))
    right = fit(load("right_image", read_image))
    disp = load("disparity_pfm", read_scalar_map)
    conf = load("confidence_pfm", read_scalar_map)
    m_noc = load("m_noc_png", read_mask)
    m_inp = load("m_inp_png", read_mask)

    disp_panel = fit(colorize_disparity(disp)) if disp is not None else None
    conf_panel = fit(np.repeat(np.clip(conf, 0, 1)[:, :, None], 3, axis=2)) if conf is not None else None
    mask_panel = None
    if m_noc is not None or m_inp is not None:
        mask_panel = np.zeros((h, w, 3))
        if m_noc is not None and m_noc.shape == (h, w):
            mask_panel[:, :, 0] = m_noc
        if m_inp is not None and m_inp.shape == (h, w):
            mask_panel[:, :, 2] = m_inp

    panels = [left, warped, right, disp_panel, conf_panel, mask_panel]
    panels = [p if p is not None else placeholder_panel(h, w) for p in panels]
    top = np.concatenate(panels[:3], axis=1)
    bottom = np.concatenate(panels[3:], axis=1)
    return np.clip(np.concatenate([top, bottom], axis=0), 0.0, 1.0)
