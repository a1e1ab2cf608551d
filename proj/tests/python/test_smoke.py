import math

import numpy as np
import pytest

import textsplat


def tiny_config(tmp_path):
    cfg = textsplat.Config()
    cfg["grid.n_side"] = 2
    cfg["triplane.base_res"] = 4
    cfg["triplane.upsamples"] = 1
    cfg["render.width"] = 16
    cfg["render.height"] = 16
    cfg["train.checkpoint"] = str(tmp_path / "m.ckpt")
    return cfg


def test_generate_shapes_ranges_and_determinism():
    gen = textsplat.Generator()
    a = gen.generate("a red apple")
    assert a["centers"].shape == (512, 3)
    assert a["rotation"].shape == (512, 4)
    assert a["latency_ms"] > 0
    assert np.all((a["opacity"] > 0) & (a["opacity"] < 1))
    assert np.all((a["scaling_raw"] > -9) & (a["scaling_raw"] < -3))
    np.testing.assert_allclose(np.linalg.norm(a["rotation"], axis=1), 1.0, atol=1e-6)
    b = gen.generate("a red apple")
    for key in ("centers", "scaling_raw", "rotation", "opacity", "sh_dc"):
        assert np.array_equal(a[key], b[key])
    c = gen.generate("a blue whale")
    assert not np.array_equal(a["centers"], c["centers"])


def test_ply_round_trip(tmp_path):
    g = textsplat.Generator().generate("a wooden chair")
    path = tmp_path / "chair.ply"
    textsplat.export_ply(g, path)
    back = textsplat.import_ply(path)
    for key in ("centers", "scaling_raw", "rotation", "opacity", "opacity_raw", "sh_dc"):
        assert np.array_equal(g[key], back[key])


def test_render_and_turntable():
    g = textsplat.Generator().generate("a glass vase")
    img = textsplat.render(g, azimuth=30, width=24, height=20, background=(0.2, 0.2, 0.2))
    assert img.shape == (20, 24, 3)
    assert np.all((img >= 0) & (img <= 1))
    tt = textsplat.render_turntable(g, frames=4)
    assert tt["azimuths"] == [0.0, 90.0, 180.0, 270.0]
    assert len(tt["frames"]) == 4
    assert tt["fps"] > 0


def test_config_keys_and_errors():
    cfg = textsplat.Config()
    assert "train.lr" in textsplat.Config.keys()
    cfg["train.lr"] = 1e-3
    assert float(cfg["train.lr"]) == pytest.approx(1e-3)
    assert textsplat.Config.parse(cfg.to_string())["train.lr"] == cfg["train.lr"]
    with pytest.raises(textsplat.ConfigError):
        cfg["no.such.key"] = 1
    with pytest.raises(textsplat.CheckpointError, match="missing.ckpt"):
        textsplat.Generator(checkpoint="missing.ckpt")


def test_train_then_load(tmp_path):
    cfg = tiny_config(tmp_path)
    cfg["train.max_iter"] = 2
    trace = textsplat.train(cfg)
    assert [s["iter"] for s in trace] == [0, 1]
    assert all(math.isfinite(s["loss"]) and s["grad_norm"] > 0 for s in trace)
    gen = textsplat.Generator(cfg, checkpoint=tmp_path / "m.ckpt")
    assert gen.generate("a small owl")["centers"].shape == (8, 3)


def test_interpolate_endpoints_and_embed():
    gen = textsplat.Generator()
    seq = gen.interpolate("a cat", "a dog", steps=3)
    assert len(seq) == 3
    assert np.array_equal(seq[0]["centers"], gen.generate("a cat")["centers"])
    assert np.array_equal(seq[-1]["centers"], gen.generate("a dog")["centers"])
    e = textsplat.embed("a cat")
    assert e.shape == (16, 32)


def test_checks_pass():
    results = textsplat.check()
    assert results and all(passed for _, passed, _ in results), results
