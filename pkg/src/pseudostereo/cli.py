"""Command-line entry point.

Exit codes: 0 when every sample succeeded, 2 when some samples failed,
1 on fatal errors (bad config, unreadable inputs, unwritable output).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import shutil
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .ads import disparity_stats, load_config_file
from .depthproc import normalize_inverse_depth, tcg_confidence
from .imagecore import (
    read_image,
    read_mask,
    read_scalar_map,
    write_image,
    write_pfm,
)
from .inpaint import INPAINTED_SUFFIX, MASK_SUFFIX, WARPED_SUFFIX, composite_external
from .loss import combined_loss
from .metrics import evaluate_pair
from .pipeline import (
    MANIFEST_NAME,
    OUTPUT_SUFFIXES,
    RunConfig,
    batch,
    load_depth,
    preview,
    read_manifest,
    read_sample_list,
    write_manifest,
)

logger = logging.getLogger("pseudostereo")

EXIT_OK, EXIT_FATAL, EXIT_PARTIAL = 0, 1, 2


class FatalError(Exception):
    pass


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None, help="global RNG seed")
    parser.add_argument("--config", type=Path, default=None, help="JSON run configuration")
    parser.add_argument("--out", type=Path, default=None, help="output directory")
    parser.add_argument("-v", "--verbose", action="store_true")


def _generation_flags(parser: argparse.ArgumentParser) -> None:
    g = parser.add_argument_group("disparity selection")
    g.add_argument("--c", type=float, dest="ads_c")
    g.add_argument("--r", type=float, dest="ads_r")
    g.add_argument("--p-s", type=float, dest="ads_p_s")
    g.add_argument("--p-c", type=float, dest="ads_p_c")
    g.add_argument("--p-l", type=float, dest="ads_p_l")
    w = parser.add_argument_group("warping")
    w.add_argument("--sharpen-threshold", type=float)
    w.add_argument("--dilate-kernel", type=int)
    i = parser.add_argument_group("inpainting")
    i.add_argument("--backend", choices=["neighbor_fill", "random_background", "external"])
    i.add_argument("--texture", type=str, help="texture image for random_background")


def _loss_flags(parser: argparse.ArgumentParser) -> None:
    g = parser.add_argument_group("loss")
    g.add_argument("--beta", type=float)
    g.add_argument("--mu", type=float)
    g.add_argument("--ssim-window", type=int)
    g.add_argument("--reduction", choices=["all", "contributing"])
    g.add_argument("--no-noc-mask", action="store_true")
    g.add_argument("--no-inp-mask", action="store_true")
    g.add_argument("--no-confidence", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pseudostereo",
        description="Synthesize pseudo stereo pairs and supervision from single images.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="synthesize one stereo sample")
    _common(p)
    _generation_flags(p)
    p.add_argument("--left", required=True)
    p.add_argument("--depth", required=True, help="raw inverse depth (.pfm or .npy)")
    p.add_argument("--depth-flipped", help="depth predicted on the flipped image")
    p.add_argument("--dataset", default="default")

    p = sub.add_parser("batch", help="synthesize every sample of a JSONL list")
    _common(p)
    _generation_flags(p)
    p.add_argument("--samples", type=Path, required=True)
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("confidence", help="flip-consistency confidence map")
    _common(p)
    p.add_argument("--depth", required=True)
    p.add_argument("--depth-flipped", required=True)

    p = sub.add_parser("stats", help="per-dataset disparity mean/max of a manifest")
    _common(p)
    p.add_argument("--manifest", type=Path, required=True)

    p = sub.add_parser("inpaint-export", help="export warped views and hole masks")
    _common(p)
    p.add_argument("--manifest", type=Path, required=True)

    p = sub.add_parser("inpaint-apply", help="composite external inpainting results")
    _common(p)
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--inpainted-dir", type=Path, required=True)

    p = sub.add_parser("loss", help="evaluate the masked loss stack on one sample")
    _common(p)
    _loss_flags(p)
    p.add_argument("--left", required=True)
    p.add_argument("--right", required=True)
    p.add_argument("--disp-est", required=True)
    p.add_argument("--disp", required=True)
    p.add_argument("--conf", help="confidence PFM (default: all ones)")
    p.add_argument("--mnoc", required=True)
    p.add_argument("--minp", required=True)

    p = sub.add_parser("eval", help="EPE and bad-pixel rates")
    _common(p)
    p.add_argument("--pair", nargs="+", action="append", required=True,
                   metavar="PATH", help="EST.pfm GT.pfm [MASK.png]; repeatable")
    p.add_argument("--tau", type=float, action="append")
    p.add_argument("--max-disp", type=float, default=float("inf"))

    p = sub.add_parser("preview", help="render collages for manifest records")
    _common(p)
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--index", type=int, action="append")
    p.add_argument("--base-dir", type=Path, default=None,
                   help="directory input paths in the manifest are relative to "
                        "(the sample list's directory for batch runs)")
    return parser


def run_config(args) -> RunConfig:
    data = load_config_file(args.config) if args.config else {}
    cfg = RunConfig.from_dict(data)
    ads = {k: getattr(args, f"ads_{k}", None) for k in ("c", "r", "p_s", "p_c", "p_l")}
    ads = {k: v for k, v in ads.items() if v is not None}
    if args.seed is not None:
        ads["seed"] = args.seed
    warp = {k: getattr(args, k, None) for k in ("sharpen_threshold", "dilate_kernel")}
    warp = {k: v for k, v in warp.items() if v is not None}
    top = {}
    if getattr(args, "backend", None):
        top["backend"] = args.backend
    if getattr(args, "texture", None):
        top["texture"] = args.texture
    loss = {k: getattr(args, k, None) for k in ("beta", "mu", "ssim_window", "reduction")}
    loss = {k: v for k, v in loss.items() if v is not None}
    for flag, key in (("no_noc_mask", "use_noc_mask"), ("no_inp_mask", "use_inp_mask"),
                      ("no_confidence", "use_confidence")):
        if getattr(args, flag, False):
            loss[key] = False
    return dataclasses.replace(
        cfg,
        ads=dataclasses.replace(cfg.ads, **ads),
        warp=dataclasses.replace(cfg.warp, **warp),
        loss=dataclasses.replace(cfg.loss, **loss),
        **top,
    )


def _require_out(args) -> Path:
    if args.out is None:
        raise FatalError("--out is required for this command")
    try:
        args.out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise FatalError(f"cannot create output directory {args.out}: {exc}") from exc
    return args.out


def _emit(obj) -> None:
    print(json.dumps(obj, sort_keys=True))


def cmd_generate(args) -> int:
    cfg = run_config(args)
    out = _require_out(args)
    sample = {"left": args.left, "depth": args.depth, "dataset": args.dataset}
    if args.depth_flipped:
        sample["depth_flipped"] = args.depth_flipped
    (record,) = batch([sample], cfg, out)
    _emit(json.loads(record.to_json()))
    return EXIT_OK if record.ok else EXIT_PARTIAL


def cmd_batch(args) -> int:
    cfg = run_config(args)
    out = _require_out(args)
    try:
        samples = read_sample_list(args.samples)
    except (OSError, ValueError) as exc:
        raise FatalError(f"cannot read sample list: {exc}") from exc
    try:
        records = batch(samples, cfg, out, workers=args.workers, base_dir=args.samples.parent)
    except PermissionError as exc:
        raise FatalError(str(exc)) from exc
    failed = sum(not r.ok for r in records)
    _emit({"samples": len(records), "failed": failed, "manifest": str(out / MANIFEST_NAME)})
    return EXIT_PARTIAL if failed else EXIT_OK


def cmd_confidence(args) -> int:
    out = _require_out(args)
    raw = read_scalar_map(args.depth)
    raw_f = load_depth(args.depth_flipped, raw.shape)
    conf = tcg_confidence(normalize_inverse_depth(raw), normalize_inverse_depth(raw_f))
    path = out / f"{Path(args.depth).stem}.conf.pfm"
    write_pfm(conf.astype(np.float32), path)
    _emit({"confidence_pfm": str(path), "min": float(conf.min()), "max": float(conf.max()),
           "mean": float(conf.mean())})
    return EXIT_OK


def cmd_stats(args) -> int:
    records = [dataclasses.asdict(r) for r in read_manifest(args.manifest)]
    report = disparity_stats(records, root=args.manifest.parent)
    if args.out is not None:
        out = _require_out(args)
        (out / "disparity_stats.json").write_text(json.dumps(report, indent=2, sort_keys=True))
    _emit(report)
    return EXIT_OK


def cmd_inpaint_export(args) -> int:
    out = _require_out(args)
    root = args.manifest.parent
    exported = 0
    for record in read_manifest(args.manifest):
        if not record.ok:
            continue
        shutil.copyfile(root / record.outputs["warped_image"], out / (record.stem + WARPED_SUFFIX))
        shutil.copyfile(root / record.outputs["m_inp_png"], out / (record.stem + MASK_SUFFIX))
        exported += 1
    _emit({"exported": exported, "dir": str(out),
           "expects": f"<stem>{INPAINTED_SUFFIX} per exported stem"})
    return EXIT_OK


def cmd_inpaint_apply(args) -> int:
    root = args.out or args.manifest.parent
    records = read_manifest(args.manifest)
    applied = missing = 0
    for record in records:
        if not record.ok:
            continue
        source = args.inpainted_dir / (record.stem + INPAINTED_SUFFIX)
        if not source.exists():
            logger.warning("no inpainted image for %s", record.stem)
            missing += 1
            continue
        warped = read_image(root / record.outputs["warped_image"])
        m_inp = read_mask(root / record.outputs["m_inp_png"])
        right = composite_external(warped, m_inp, read_image(source))
        name = record.stem + OUTPUT_SUFFIXES["right_image"]
        write_image(right, root / name)
        record.outputs["right_image"] = name
        record.backend = "external"
        applied += 1
    write_manifest(records, root / MANIFEST_NAME)
    _emit({"applied": applied, "missing": missing})
    return EXIT_PARTIAL if missing else EXIT_OK


def cmd_loss(args) -> int:
    cfg = run_config(args).loss
    left = read_image(args.left)
    right = read_image(args.right)
    d_hat = read_scalar_map(args.disp_est)
    d = read_scalar_map(args.disp)
    conf = read_scalar_map(args.conf) if args.conf else np.ones_like(d)
    report = combined_loss(d_hat, d, conf, left, right, read_mask(args.mnoc),
                           read_mask(args.minp), cfg)
    summary = report.summary()
    summary["config"] = dataclasses.asdict(cfg)
    if args.out is not None:
        out = _require_out(args)
        for name in ("l_d_map", "l_p_map", "l_np_map", "l_zero_map"):
            write_pfm(getattr(report, name).astype(np.float32), out / f"{name[:-4]}.pfm")
        (out / "loss_report.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    _emit(summary)
    return EXIT_OK


def cmd_eval(args) -> int:
    taus = args.tau or [1.0, 2.0, 3.0]
    rows = []
    for pair in args.pair:
        if len(pair) not in (2, 3):
            raise FatalError("--pair takes EST GT [MASK]")
        est, gt = read_scalar_map(pair[0]), read_scalar_map(pair[1])
        valid = read_mask(pair[2]) if len(pair) == 3 else None
        row = {"est": pair[0], "gt": pair[1]}
        row.update(evaluate_pair(est, gt, valid, taus, args.max_disp))
        rows.append(row)
        _emit(row)
    keys = [k for k in rows[0] if k not in ("est", "gt", "valid_pixels")]
    aggregate = {"pairs": len(rows), "aggregate": True}
    aggregate.update({k: float(np.mean([r[k] for r in rows])) for k in keys})
    _emit(aggregate)
    if args.out is not None:
        out = _require_out(args)
        with open(out / "eval.jsonl", "w", encoding="utf-8") as fh:
            for row in rows + [aggregate]:
                fh.write(json.dumps(row, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_preview(args) -> int:
    out = _require_out(args)
    root = args.manifest.parent
    wanted = set(args.index) if args.index else None
    written = []
    for record in read_manifest(args.manifest):
        if wanted is not None and record.index not in wanted:
            continue
        if not record.ok:
            continue
        collage = preview(record, root, args.base_dir)
        path = out / f"{record.stem}.preview.png"
        write_image(collage, path)
        written.append(str(path))
    _emit({"previews": written})
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "batch": cmd_batch,
    "confidence": cmd_confidence,
    "stats": cmd_stats,
    "inpaint-export": cmd_inpaint_export,
    "inpaint-apply": cmd_inpaint_apply,
    "loss": cmd_loss,
    "eval": cmd_eval,
    "preview": cmd_preview,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except FatalError as exc:
        logger.error("%s", exc)
    except (OSError, ValueError) as exc:
        logger.error("%s: %s", type(exc).__name__, exc)
    return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
