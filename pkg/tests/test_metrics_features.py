"""Patch feature maps: pooling rules, file format, validation."""

import numpy as np
import pytest

from logsplat.errors import (
    CorruptHeader,
    MissingFile,
    NoForegroundPatches,
    ShapeMismatch,
    TruncatedPayload,
)
from logsplat.metrics import (
    FeatureMap,
    color_patch_features,
    downsample_mask,
    load_features,
    pooled_embedding,
    save_features,
)


def test_feature_map_validation():
    FeatureMap(np.zeros((1, 2, 2), dtype=np.float32), patch_size=4)
    with pytest.raises(ShapeMismatch):
        FeatureMap(np.zeros((2, 2), dtype=np.float32), patch_size=4)
    with pytest.raises(ShapeMismatch):
        FeatureMap(np.full((1, 2, 2), np.nan, dtype=np.float32), patch_size=4)
    with pytest.raises(ShapeMismatch):
        FeatureMap(np.zeros((1, 2, 2), dtype=np.float32), patch_size=0)


def test_color_patch_features_matches_loop():
    rng = np.random.default_rng(7)
    img = rng.random((24, 32, 3))
    p = 8
    fm = color_patch_features(img, p)
    assert fm.grid_shape == (3, 4)
    assert fm.channels == 3
    for i in range(3):
        for j in range(4):
            block = img[i * p:(i + 1) * p, j * p:(j + 1) * p]
            expected = block.reshape(-1, 3).mean(axis=0)
            np.testing.assert_allclose(fm.values[:, i, j], expected, atol=1e-6)


def test_color_patch_features_rejects_partial_patches():
    with pytest.raises(ShapeMismatch):
        color_patch_features(np.zeros((30, 32, 3)), 8)
    with pytest.raises(ShapeMismatch):
        color_patch_features(np.zeros((24, 32)), 8)


def test_downsample_mask_coverage_rule():
    mask = np.zeros((4, 6), dtype=bool)
    mask[0:2, 0:2] = True        # patch (0,0): 4/4 covered
    mask[0, 2] = True            # patch (0,1): 1/4 covered
    mask[2, 0] = mask[2, 1] = True  # patch (1,0): 2/4, exactly at threshold
    small = downsample_mask(mask, 2)
    assert small.shape == (2, 3)
    assert small[0, 0]
    assert not small[0, 1]
    assert small[1, 0]  # >= 50% counts as foreground
    assert not small[1, 1] and not small[0, 2] and not small[1, 2]


def test_pooled_embedding_constant_features():
    vals = np.ones((4, 3, 3), dtype=np.float32) * np.array([1, 2, 3, 4], dtype=np.float32).reshape(4, 1, 1)
    fm = FeatureMap(vals, patch_size=2)
    mask = np.ones((3, 3), dtype=bool)
    np.testing.assert_allclose(pooled_embedding(fm, mask), [1, 2, 3, 4])


def test_pooled_embedding_single_patch():
    rng = np.random.default_rng(3)
    fm = FeatureMap(rng.random((5, 4, 4)).astype(np.float32), patch_size=2)
    mask = np.zeros((4, 4), dtype=bool)
    mask[1, 2] = True
    np.testing.assert_allclose(pooled_embedding(fm, mask), fm.values[:, 1, 2])


def test_pooled_embedding_matches_brute_force():
    rng = np.random.default_rng(11)
    fm = FeatureMap(rng.random((6, 5, 7)).astype(np.float32), patch_size=3)
    mask = rng.random((5, 7)) > 0.5
    mask[0, 0] = True
    got = pooled_embedding(fm, mask)
    acc = []
    for i in range(5):
        for j in range(7):
            if mask[i, j]:
                acc.append(fm.values[:, i, j].astype(np.float64))
    np.testing.assert_allclose(got, np.mean(acc, axis=0), atol=1e-12)


def test_pooled_embedding_accepts_pixel_mask():
    rng = np.random.default_rng(5)
    img = rng.random((12, 12, 3))
    fm = color_patch_features(img, 4)
    pixel_mask = np.zeros((12, 12), dtype=bool)
    pixel_mask[0:4, 0:4] = True    # fully covers patch (0,0)
    pixel_mask[4, 4] = True        # 1/16 of patch (1,1), below threshold
    got = pooled_embedding(fm, pixel_mask)
    np.testing.assert_allclose(got, fm.values[:, 0, 0], atol=1e-7)


def test_pooled_embedding_errors():
    fm = FeatureMap(np.ones((2, 3, 3), dtype=np.float32), patch_size=2)
    with pytest.raises(NoForegroundPatches):
        pooled_embedding(fm, np.zeros((3, 3), dtype=bool))
    with pytest.raises(ShapeMismatch):
        pooled_embedding(fm, np.zeros((4, 4), dtype=bool))


def test_feature_file_round_trip(tmp_path):
    rng = np.random.default_rng(17)
    fm = FeatureMap(rng.standard_normal((8, 6, 9)).astype(np.float32), patch_size=16)
    path = tmp_path / "gt.fmap"
    save_features(path, fm)
    back = load_features(path)
    assert back.patch_size == 16
    np.testing.assert_array_equal(back.values, fm.values)


def test_feature_file_header_layout(tmp_path):
    fm = FeatureMap(np.zeros((2, 3, 4), dtype=np.float32), patch_size=8)
    path = tmp_path / "x.fmap"
    save_features(path, fm)
    raw = path.read_bytes()
    assert raw.startswith(b"FMAP 1\nchannels 2\ngrid 3 4\npatch 8\nend_header\n")
    assert len(raw) == len(b"FMAP 1\nchannels 2\ngrid 3 4\npatch 8\nend_header\n") + 2 * 3 * 4 * 4


def test_feature_file_errors(tmp_path):
    with pytest.raises(MissingFile):
        load_features(tmp_path / "absent.fmap")
    bad = tmp_path / "bad.fmap"
    bad.write_bytes(b"WHAT 1\nend_header\n")
    with pytest.raises(CorruptHeader):
        load_features(bad)
    noend = tmp_path / "noend.fmap"
    noend.write_bytes(b"FMAP 1\nchannels 2\n")
    with pytest.raises(CorruptHeader):
        load_features(noend)
    fm = FeatureMap(np.zeros((2, 3, 4), dtype=np.float32), patch_size=8)
    good = tmp_path / "good.fmap"
    save_features(good, fm)
    trunc = tmp_path / "trunc.fmap"
    trunc.write_bytes(good.read_bytes()[:-5])
    with pytest.raises(TruncatedPayload):
        load_features(trunc)
