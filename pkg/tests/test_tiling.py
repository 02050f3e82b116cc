import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from biopsyseg.errors import ConfigError, DataError
from biopsyseg.netgraph import build_model, preset
from biopsyseg.segment import segment_roi, softmax
from biopsyseg.tiling import (
    PatchGrid,
    coverage,
    downscale,
    extract_patches,
    grid_origins,
    make_context,
    mirror_index,
    read_window,
    stitch,
)


def one_hot_blocks(mask, grid, c=8):
    for i, (r, col) in enumerate(grid.origins):
        patch = read_window(mask, r, col, grid.patch, grid.patch)
        yield i, np.eye(c)[patch].transpose(2, 0, 1)


def test_grid_example_400x600():
    grid = PatchGrid(400, 600)
    assert grid.shape == (2, 3)
    assert grid.origins[:3] == [(0, 0), (0, 200), (0, 400)]
    assert grid.padding(5) == (0, 0, 56, 56)


def test_roi_smaller_than_patch_is_single_mirror_padded_cell():
    grid = PatchGrid(100, 100)
    assert len(grid) == 1 and grid.padding(0) == (0, 0, 156, 156)


def test_grid_covers_every_pixel():
    for h, w in [(256, 256), (257, 1000), (913, 450)]:
        assert coverage(PatchGrid(h, w)).min() >= 1


def test_stride_scales_with_patch_and_is_bounded():
    assert PatchGrid(10, 10).stride == 200
    assert PatchGrid(10, 10, patch=64).stride == 50
    with pytest.raises(ConfigError):
        PatchGrid(10, 10, patch=64, stride=65)


def test_grid_origins_stride():
    assert grid_origins(256) == [0]
    assert grid_origins(457) == [0, 200, 400]


def test_mirror_index_is_symmetric_reflection():
    np.testing.assert_array_equal(mirror_index(np.arange(-3, 8), 5), [2, 1, 0, 0, 1, 2, 3, 4, 4, 3, 2])


def test_read_window_inside_is_plain_slice():
    img = np.arange(100).reshape(10, 10)
    np.testing.assert_array_equal(read_window(img, 2, 3, 4, 5), img[2:6, 3:8])


def test_windows_agree_on_shared_pixels():
    img = np.random.default_rng(0).integers(0, 255, (30, 20))
    a = read_window(img, -12, -7, 40, 40)
    b = read_window(img, -2, 3, 40, 40)
    np.testing.assert_array_equal(a[10:, 10:], b[:30, :30])


def test_round_trip_one_hot_is_bit_exact_50_sizes():
    rng = np.random.default_rng(0)
    for _ in range(50):
        h, w = (int(v) for v in rng.integers(256, 1201, 2))
        mask = rng.integers(0, 8, (h, w)).astype(np.uint8)
        grid = PatchGrid(h, w)
        labels, probs = stitch(one_hot_blocks(mask, grid), grid)
        assert np.array_equal(labels, mask)
        assert probs.shape == (8, h, w)


def test_context_center_crop_equals_inner_patch():
    img = np.random.default_rng(1).integers(0, 255, (700, 530, 3), dtype=np.uint8)
    grid = PatchGrid(700, 530)
    for i in range(len(grid)):
        pair = make_context(img, grid, i)
        assert pair.context.shape == (384, 384, 3)
        np.testing.assert_array_equal(pair.context[64:320, 64:320], pair.inner)


def test_extract_patches_stream_is_lazy_and_ordered():
    img = np.zeros((500, 500, 3), np.uint8)
    grid, stream = extract_patches(img, np.zeros((500, 500), np.uint8))
    first = next(stream)
    assert first[0] == 0 and first[1].shape == (256, 256, 3) and first[2].shape == (256, 256)
    assert sum(1 for _ in stream) == len(grid) - 1


def test_extract_patches_rejects_mismatched_mask():
    with pytest.raises(DataError):
        extract_patches(np.zeros((10, 10, 3)), np.zeros((9, 10)))


def test_stitch_missing_block_is_data_error():
    grid = PatchGrid(500, 500)
    with pytest.raises(DataError, match="missing"):
        stitch(((0, np.zeros((2, 256, 256))),), grid)


def test_stitch_averages_overlaps():
    grid = PatchGrid(300, 256)
    blocks = [np.full((1, 256, 256), 1.0), np.full((1, 256, 256), 3.0)]
    _, avg = stitch(blocks, grid)
    assert avg[0, 100, 0] == 1.0 and avg[0, 250, 0] == 2.0 and avg[0, 299, 0] == 3.0


def test_manifest_round_trip():
    grid = PatchGrid(640, 480)
    back = PatchGrid.from_manifest(grid.manifest(), 640, 480)
    assert back.origins == grid.origins


def test_downscale_box_filter():
    img = np.arange(16, dtype=np.uint8).reshape(4, 4)
    np.testing.assert_array_equal(downscale(img, 2), [[2, 4], [10, 12]])
    with pytest.raises(DataError):
        downscale(img, 0)


@settings(max_examples=20, deadline=None)
@given(h=st.integers(1, 600), w=st.integers(1, 600))
def test_grid_invariants(h, w):
    grid = PatchGrid(h, w)
    assert coverage(grid).min() >= 1
    for r, c in grid.origins:
        assert r < h and c < w


def test_segment_roi_shapes_and_probabilities():
    cfg = preset("full", multi=True, num_levels=3, channel_scale="1/16", patch_size=64, context_border=16)
    img = np.random.default_rng(2).integers(0, 255, (100, 90, 3), dtype=np.uint8)
    mask, probs = segment_roi(build_model(cfg), img, batch_size=3)
    assert mask.shape == (100, 90) and probs.shape == (8, 100, 90)
    np.testing.assert_allclose(probs.sum(axis=0), 1.0, atol=1e-6)
    np.testing.assert_array_equal(mask, probs.argmax(axis=0))


def test_segment_roi_rejects_grayscale():
    cfg = preset("plain", num_levels=2, channel_scale="1/16", patch_size=64)
    with pytest.raises(DataError):
        segment_roi(build_model(cfg), np.zeros((64, 64)))


def test_softmax_rows_sum_to_one():
    p = softmax(np.array([[1000.0, 0.0], [0.0, 0.0]]).reshape(1, 2, 2, 1))
    np.testing.assert_allclose(p.sum(axis=1), 1.0)
