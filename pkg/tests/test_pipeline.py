import json

import numpy as np
import pytest

from conftest import make_fixture_set
from pseudostereo import pipeline
from pseudostereo.ads import AdsConfig, disparity_stats
from pseudostereo.imagecore import read_image, read_mask, read_pfm, write_image, write_pfm
from pseudostereo.pipeline import (
    MANIFEST_NAME,
    GenerationRecord,
    RunConfig,
    batch,
    colorize_disparity,
    derive_seed,
    generate,
    placeholder_panel,
    preview,
    read_manifest,
    synthesize,
)


def snapshot(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir()) if p.is_file()}


def test_config_round_trip():
    cfg = RunConfig.from_dict({"seed": 9, "ads": {"c": 0.2, "r": 0.05},
                               "warp": {"dilate_kernel": 5},
                               "inpaint": {"backend": "random_background"},
                               "loss": {"mu": 0.3}})
    assert cfg.ads.seed == 9 and cfg.ads.c == 0.2
    assert cfg.warp.dilate_kernel == 5 and cfg.loss.mu == 0.3
    assert RunConfig.from_dict(cfg.to_dict()) == cfg


def test_config_rejects_unknown_keys():
    with pytest.raises(ValueError):
        RunConfig.from_dict({"warp": {"kernel": 3}})
    with pytest.raises(ValueError):
        RunConfig.from_dict({"inpaint": {"backend": "magic"}})


def test_derive_seed_distinct():
    seeds = {derive_seed(0, i) for i in range(100)}
    assert len(seeds) == 100
    assert derive_seed(5, 3) == derive_seed(5, 3) != derive_seed(6, 3)


def test_record_json_round_trip():
    record = GenerationRecord(index=2, stem="000002_x", left_image="x.png", depth="x.pfm",
                              sampled_s=0.1, outputs={"right_image": "r.png"})
    line = record.to_json()
    assert list(json.loads(line)) == sorted(json.loads(line))
    assert GenerationRecord.from_json(line) == record


def test_constant_depth_gives_identity(tmp_path):
    left = np.random.default_rng(0).random((6, 9, 3))
    write_image(left, tmp_path / "l.png")
    write_pfm(np.full((6, 9), 0.7, np.float32), tmp_path / "d.pfm")
    record = generate("l.png", "d.pfm", None, RunConfig(), tmp_path / "out", base_dir=tmp_path)
    out = tmp_path / "out"
    np.testing.assert_array_equal(read_pfm(out / record.outputs["disparity_pfm"]), 0)
    np.testing.assert_array_equal(read_image(out / record.outputs["right_image"]),
                                  read_image(tmp_path / "l.png"))
    np.testing.assert_array_equal(read_mask(out / record.outputs["m_inp_png"]), 0)


def test_missing_flipped_depth_gives_unit_confidence(tmp_path):
    make_fixture_set(tmp_path, 1, flipped=False)
    record = generate("img0.png", "img0.depth.pfm", None, RunConfig(), tmp_path / "out",
                      base_dir=tmp_path)
    np.testing.assert_array_equal(read_pfm(tmp_path / "out" / record.outputs["confidence_pfm"]), 1)


def test_generate_outputs_and_scale(tmp_path):
    make_fixture_set(tmp_path, 1)
    cfg = RunConfig()
    record = generate("img0.png", "img0.depth.pfm", "img0.flip.npy", cfg, tmp_path / "out",
                      base_dir=tmp_path)
    assert set(record.outputs) == set(pipeline.OUTPUT_SUFFIXES)
    for rel in record.outputs.values():
        assert (tmp_path / "out" / rel).exists()
    assert 0 < record.sampled_s < 2 * cfg.ads.c
    disp = read_pfm(tmp_path / "out" / record.outputs["disparity_pfm"])
    assert disp.max() <= record.sampled_s * 20 + 1e-4


def test_same_seed_byte_identical(tmp_path):
    make_fixture_set(tmp_path, 1)
    for name in ("a", "b"):
        generate("img0.png", "img0.depth.pfm", "img0.flip.npy", RunConfig(), tmp_path / name,
                 base_dir=tmp_path)
    assert snapshot(tmp_path / "a") == snapshot(tmp_path / "b")


def test_external_backend_writes_no_right_image(tmp_path):
    make_fixture_set(tmp_path, 1)
    record = generate("img0.png", "img0.depth.pfm", None, RunConfig(backend="external"),
                      tmp_path / "out", base_dir=tmp_path)
    assert "right_image" not in record.outputs
    assert "warped_image" in record.outputs and "m_inp_png" in record.outputs


def test_failed_write_leaves_nothing(tmp_path, monkeypatch):
    make_fixture_set(tmp_path, 1)
    (tmp_path / "out").mkdir()

    def broken(*_):
        raise OSError("disk full")

    monkeypatch.setattr(pipeline, "write_mask", broken)
    with pytest.raises(OSError):
        generate("img0.png", "img0.depth.pfm", None, RunConfig(), tmp_path / "out",
                 base_dir=tmp_path)
    assert list((tmp_path / "out").iterdir()) == []


def test_synthesize_holes_match_masks():
    rng = np.random.default_rng(0)
    left = rng.random((10, 16, 3))
    depth = np.ones((10, 16))
    depth[:, 8:] = 3.0
    result = synthesize(left, depth, None, RunConfig(), np.random.default_rng(1))
    assert result["m_inp"].sum() > 0
    np.testing.assert_array_equal(result["warped"][result["m_inp"] == 1], 0)
    assert np.all(result["right"][result["m_inp"] == 0] == result["warped"][result["m_inp"] == 0])


# batch -------------------------------------------------------------------


def test_batch_empty(tmp_path):
    assert batch([], RunConfig(), tmp_path / "out") == []
    assert (tmp_path / "out" / MANIFEST_NAME).read_text() == ""


def test_batch_manifest_complete(tmp_path):
    samples = make_fixture_set(tmp_path, 5)
    cfg = RunConfig(ads=AdsConfig(seed=3))
    records = batch(samples, cfg, tmp_path / "out", base_dir=tmp_path)
    on_disk = read_manifest(tmp_path / "out" / MANIFEST_NAME)
    assert on_disk == records
    assert [r.index for r in records] == list(range(5))
    for r in records:
        assert r.ok and r.seed == derive_seed(3, r.index)
        low, high = cfg.ads.bands[0][0], cfg.ads.bands[2][1]
        assert low <= r.sampled_s < high
        for rel in r.outputs.values():
            assert (tmp_path / "out" / rel).exists()


def test_batch_sample_zero_equals_generate(tmp_path):
    samples = make_fixture_set(tmp_path, 2)
    batch(samples, RunConfig(), tmp_path / "b", base_dir=tmp_path)
    generate(samples[0]["left"], samples[0]["depth"], samples[0]["depth_flipped"], RunConfig(),
             tmp_path / "g", base_dir=tmp_path)
    b, g = snapshot(tmp_path / "b"), snapshot(tmp_path / "g")
    for name, data in g.items():
        assert b[name] == data


def test_batch_corrupt_depth_isolated(tmp_path):
    samples = make_fixture_set(tmp_path, 4)
    (tmp_path / samples[2]["depth"]).write_bytes(b"PF\n1 1\n-1.0\n")
    records = batch(samples, RunConfig(), tmp_path / "out", base_dir=tmp_path)
    assert [r.ok for r in records] == [True, True, False, True]
    assert "PfmError" in records[2].error
    assert records[2].outputs == {}
    assert not list((tmp_path / "out").glob("000002_*"))


def test_batch_workers_identical(tmp_path):
    samples = make_fixture_set(tmp_path, 6)
    batch(samples, RunConfig(), tmp_path / "w1", workers=1, base_dir=tmp_path)
    batch(samples, RunConfig(), tmp_path / "w3", workers=3, base_dir=tmp_path)
    assert snapshot(tmp_path / "w1") == snapshot(tmp_path / "w3")


def test_stats_per_dataset(tmp_path):
    samples = make_fixture_set(tmp_path, 4)
    records = batch(samples, RunConfig(), tmp_path / "out", base_dir=tmp_path)
    report = disparity_stats([json.loads(r.to_json()) for r in records], tmp_path / "out")
    assert sorted(report) == ["a", "b"]
    maps = [read_pfm(tmp_path / "out" / r.outputs["disparity_pfm"]).astype(np.float64)
            for r in records if r.dataset == "a"]
    assert report["a"]["maps"] == 2
    assert report["a"]["mean"] == pytest.approx(np.mean(np.stack(maps)))
    assert report["a"]["max"] == pytest.approx(max(m.max() for m in maps))


def test_stats_empty():
    with pytest.raises(ValueError, match="no records"):
        disparity_stats([])


# preview -----------------------------------------------------------------


def test_preview_layout(tmp_path):
    samples = make_fixture_set(tmp_path, 1, h=12, w=20)
    (record,) = batch(samples, RunConfig(), tmp_path / "out", base_dir=tmp_path)
    collage = preview(record, tmp_path / "out", base_dir=tmp_path)
    assert collage.shape == (24, 60, 3)
    np.testing.assert_array_equal(collage[:12, :20], read_image(tmp_path / "img0.png"))


def test_preview_missing_confidence_placeholder(tmp_path):
    samples = make_fixture_set(tmp_path, 1)
    (record,) = batch(samples, RunConfig(), tmp_path / "out", base_dir=tmp_path)
    (tmp_path / "out" / record.outputs["confidence_pfm"]).unlink()
    collage = preview(record, tmp_path / "out", base_dir=tmp_path)
    np.testing.assert_array_equal(collage[12:, 20:40], placeholder_panel(12, 20))


def test_preview_requires_left(tmp_path):
    record = GenerationRecord(index=0, stem="s", left_image="nope.png", depth="d.pfm")
    with pytest.raises(FileNotFoundError):
        preview(record, tmp_path)


def test_colormap_endpoints():
    out = colorize_disparity(np.array([[0.0, 5.0, 10.0]]))
    # turbo runs from dark purple to dark red
    assert out[0, 0, 2] > out[0, 0, 0] and out[0, 0].max() < 0.3
    assert out[0, 2, 0] > 0.4 and out[0, 2, 1] < 0.05 and out[0, 2, 2] < 0.05
    np.testing.assert_array_equal(colorize_disparity(np.zeros((1, 2)))[0, 0], out[0, 0])
