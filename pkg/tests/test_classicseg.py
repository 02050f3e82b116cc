import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from biopsyseg.classicseg import (
    DEFAULT_STAINS,
    FEATURE_DIM,
    BaselineConfig,
    LinearSVM,
    SuperpixelMap,
    balanced_subsample,
    color_deconvolution,
    default_radii,
    enforce_connectivity,
    lbp_map,
    linear_svm_predict,
    linear_svm_train,
    load_features,
    majority_labels,
    neighborhood_features,
    optical_density,
    predict_baseline,
    remix,
    save_features,
    slic,
    stain_matrix,
    superpixel_accuracy,
    train_baseline,
)
from biopsyseg.classicseg.color import EOSIN, HEMATOXYLIN, od_to_rgb
from biopsyseg.classicseg.features import BLOCKS, REGION_DIM
from biopsyseg.errors import ConfigError, DataError
from biopsyseg.labels import IGNORE
from biopsyseg.synth import synth_dataset


def random_image(seed, h=80, w=90):
    return np.random.default_rng(seed).integers(0, 256, (h, w, 3), dtype=np.uint8)


# -- superpixels --------------------------------------------------------------


@pytest.mark.parametrize("seed", range(5))
def test_slic_partition_and_connectivity(seed):
    img, _ = synth_dataset(1, 96, 8, seed=seed)[0]
    sp = slic(img, target_area=300)
    sp.validate()
    assert sp.labels.shape == (96, 96)
    assert sp.counts.sum() == 96 * 96
    assert 0.5 * 96 * 96 / 300 <= sp.num_superpixels <= 2 * 96 * 96 / 300


def test_slic_uniform_image_gives_grid_of_target_area():
    sp = slic(np.full((60, 60, 3), 128, np.uint8), target_area=400)
    assert sp.num_superpixels == 9
    np.testing.assert_array_equal(sp.counts, 400)


def test_slic_rejects_tiny_images():
    with pytest.raises(DataError):
        slic(np.zeros((1, 1, 3), np.uint8), target_area=1)
    with pytest.raises(DataError):
        slic(np.zeros((10, 10, 3), np.uint8), target_area=3000)


def test_enforce_connectivity_merges_fragments():
    assign = np.array([[0, 0, 1, 1], [0, 0, 1, 0], [2, 2, 2, 2]])
    out = enforce_connectivity(assign)
    sp = SuperpixelMap.from_labels(out)
    sp.validate()
    assert sp.num_superpixels == 3


def test_from_labels_renumbers_and_finds_edges():
    sp = SuperpixelMap.from_labels(np.array([[7, 7, 3], [5, 5, 3]]))
    np.testing.assert_array_equal(sp.labels, [[0, 0, 1], [2, 2, 1]])
    np.testing.assert_array_equal(sp.edges, [[0, 1], [0, 2], [1, 2]])
    np.testing.assert_array_equal(sp.neighbors(1), [0, 2])
    np.testing.assert_allclose(sp.centroids[1], [0.5, 2.0])


def test_validate_detects_disconnected_superpixel():
    sp = SuperpixelMap.from_labels(np.array([[0, 1, 0]]))
    with pytest.raises(DataError, match="disconnected"):
        sp.validate()


def test_majority_labels_ties_and_ignore():
    sp = SuperpixelMap.from_labels(np.array([[0, 0, 1, 1], [0, 0, 1, 1], [2, 2, 2, 2]]))
    mask = np.array([[3, 3, 2, 5], [1, 1, 5, 2], [IGNORE] * 4])
    np.testing.assert_array_equal(majority_labels(mask, sp, 8), [1, 2, IGNORE])


def test_majority_labels_agrees_with_counter():
    rng = np.random.default_rng(0)
    img, _ = synth_dataset(1, 64, 8, seed=1)[0]
    sp = slic(img, target_area=200)
    mask = rng.integers(0, 8, (64, 64))
    out = majority_labels(mask, sp, 8)
    for i in range(sp.num_superpixels):
        votes = np.bincount(mask[sp.labels == i], minlength=8)
        assert out[i] == int(np.argmax(votes))


def test_majority_labels_bad_label_reports_coordinate():
    sp = SuperpixelMap.from_labels(np.zeros((2, 2), int))
    with pytest.raises(DataError, match=r"\(1, 0\)"):
        majority_labels(np.array([[0, 0], [9, 0]]), sp, 8)


# -- color deconvolution -------------------------------------------------------


def test_stain_matrix_rows_are_unit_and_independent():
    m = stain_matrix()
    np.testing.assert_allclose(np.linalg.norm(m, axis=1), 1.0)
    assert abs(np.linalg.det(m)) > 0.1
    np.testing.assert_allclose(m[0], np.array(HEMATOXYLIN) / np.linalg.norm(HEMATOXYLIN))
    np.testing.assert_allclose(m[1], np.array(EOSIN) / np.linalg.norm(EOSIN))


def test_parallel_stains_are_rejected():
    with pytest.raises(ConfigError):
        stain_matrix((1, 0, 0), (2, 0, 0))
    with pytest.raises(ConfigError):
        color_deconvolution(np.zeros((2, 2, 3)), np.ones((3, 3)))


@pytest.mark.parametrize("seed", range(5))
def test_od_round_trip(seed):
    img = random_image(seed)
    stains = color_deconvolution(img, clamp=False)
    err = np.abs(remix(stains) - optical_density(img)).max()
    assert err < 1e-6
    np.testing.assert_allclose(od_to_rgb(remix(stains)), img, atol=1e-6)


def test_pure_hematoxylin_pixel():
    od = 0.8 * DEFAULT_STAINS[0]
    rgb = od_to_rgb(od)[None, None]
    stains = color_deconvolution(rgb)
    assert stains.hematoxylin[0, 0] == pytest.approx(0.8)
    assert stains.eosin[0, 0] == pytest.approx(0.0, abs=1e-12)


def test_white_is_zero_density():
    stains = color_deconvolution(np.full((1, 1, 3), 255, np.uint8))
    np.testing.assert_allclose(stains.concentrations, 0.0, atol=1e-15)


# -- LBP ---------------------------------------------------------------------


def test_lbp_hand_example():
    x = np.array([[1, 2, 3], [4, 5, 6], [7, 8, 9]])
    # neighbors >= 5: right (bit 3), bottom-right (4), bottom (5), bottom-left (6)
    assert lbp_map(x)[1, 1] == 8 + 16 + 32 + 64


def test_lbp_constant_image_is_all_ones():
    assert np.all(lbp_map(np.full((5, 6), 3.0)) == 255)


def test_lbp_invariant_under_monotone_maps():
    rng = np.random.default_rng(0)
    x = rng.integers(0, 256, (40, 40))
    base = lbp_map(x)
    for _ in range(10):
        table = np.cumsum(rng.random(256) + 1e-3) * rng.uniform(0.1, 10)
        np.testing.assert_array_equal(lbp_map(table[x]), base)


def test_lbp_rejects_color_input():
    with pytest.raises(DataError):
        lbp_map(np.zeros((3, 3, 3)))


# -- features ----------------------------------------------------------------


def test_feature_layout_and_normalization():
    img, _ = synth_dataset(1, 64, 8, seed=2)[0]
    sp = slic(img, target_area=200)
    feats = neighborhood_features(img, sp, default_radii(200))
    assert feats.shape == (sp.num_superpixels, FEATURE_DIM) == (sp.num_superpixels, 3 * REGION_DIM)
    blocks = feats.reshape(sp.num_superpixels, 3, REGION_DIM)
    start = 0
    for _, n in BLOCKS:
        sums = blocks[..., start : start + n].sum(-1)
        assert np.all(np.isclose(sums, 1.0) | (sums == 0))
        start += n
    # the superpixel region is never empty
    np.testing.assert_allclose(blocks[:, 0, :32].sum(-1), 1.0)


def test_default_radii():
    r1, r2 = default_radii(3000)
    assert r1 == pytest.approx(2 * np.sqrt(3000 / np.pi)) and r2 == pytest.approx(2 * r1)


def test_feature_file_round_trip(tmp_path):
    feats = np.random.default_rng(0).random((4, FEATURE_DIM)).astype(np.float32)
    path = tmp_path / "f.bin"
    save_features(path, np.arange(4), feats, default_radii())
    ids, back = load_features(path)
    np.testing.assert_array_equal(ids, np.arange(4))
    np.testing.assert_array_equal(back, feats)
    assert (tmp_path / "f.bin.txt").read_text().startswith(f"dim\t{FEATURE_DIM}\n")
    path.write_bytes(path.read_bytes()[:-2])
    with pytest.raises(DataError, match="truncated"):
        load_features(path)


# -- SVM ---------------------------------------------------------------------


def blobs(n, k, d, seed):
    rng = np.random.default_rng(seed)
    centers = rng.normal(0, 5, (k, d))
    y = np.arange(n) % k
    return centers[y] + rng.normal(0, 0.5, (n, d)), y


def test_svm_separates_blobs():
    x, y = blobs(300, 4, 10, 0)
    model = linear_svm_train(x, y, c_reg=100, epochs=20)
    assert (linear_svm_predict(x, model) == y).mean() == 1.0


def test_svm_is_deterministic_and_round_trips(tmp_path):
    x, y = blobs(100, 3, 5, 1)
    a = linear_svm_train(x, y, seed=2)
    b = linear_svm_train(x, y, seed=2)
    np.testing.assert_array_equal(a.weights, b.weights)
    a.save(tmp_path / "svm.wsg")
    back = LinearSVM.load(tmp_path / "svm.wsg")
    # archives store float32
    np.testing.assert_array_equal(back.weights, a.weights.astype(np.float32))
    np.testing.assert_array_equal(back.classes, a.classes)


def test_svm_duplicated_data_gives_same_model():
    x, y = blobs(60, 3, 4, 3)
    a = linear_svm_train(x, y, epochs=10, seed=0)
    b = linear_svm_train(np.repeat(x, 2, axis=0), np.repeat(y, 2), epochs=5, seed=0)
    np.testing.assert_array_equal(a.weights, b.weights)


def test_svm_keeps_original_class_ids():
    x, y = blobs(60, 2, 3, 4)
    model = linear_svm_train(x, np.where(y == 0, 3, 6))
    assert set(linear_svm_predict(x, model)) <= {3, 6}


def test_svm_needs_two_classes():
    with pytest.raises(ConfigError):
        linear_svm_train(np.zeros((5, 2)), np.zeros(5, int))


def test_balanced_subsample_caps_each_label_per_group():
    labels = np.array([0] * 50 + [1] * 5)
    groups = np.arange(55) % 3
    idx = balanced_subsample(labels, groups, limit=10, seed=0)
    assert np.sum(labels[idx] == 0) == 30 and np.sum(labels[idx] == 1) == 5
    for g in range(3):
        assert np.sum((labels[idx] == 0) & (groups[idx] == g)) == 10
    np.testing.assert_array_equal(idx, balanced_subsample(labels, groups, limit=10, seed=0))


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 5), st.integers(0, 1000))
def test_svm_predictions_are_training_classes(k, seed):
    x, y = blobs(20, k, 3, seed)
    model = linear_svm_train(x, y, epochs=2, seed=seed)
    assert set(linear_svm_predict(x, model)) <= set(range(k))


# -- pipeline ----------------------------------------------------------------


def test_baseline_beats_chance_on_synthetic_data():
    data = synth_dataset(8, 96, 8, seed=4)
    cfg = BaselineConfig(target_area=300, epochs=20)
    model = train_baseline(data[:6], cfg)
    acc = superpixel_accuracy(data[6:], model, cfg)
    assert acc >= 4 / 8
    mask, sp, pred = predict_baseline(data[6][0], model, cfg)
    assert mask.shape == (96, 96)
    np.testing.assert_array_equal(mask, pred[sp.labels])
