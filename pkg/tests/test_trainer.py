import numpy as np
import pytest

from biopsyseg.errors import ConfigError, DataError, NumericalError
from biopsyseg.netgraph import build_model, preset
from biopsyseg.synth import class_profile, synth_dataset
from biopsyseg.tensor import Tensor
from biopsyseg.tiling import read_window
from biopsyseg.trainer import (
    AugmentationSpec,
    TrainConfig,
    augment,
    augment_dataset,
    class_weights,
    make_samples,
    roi_samples,
    sgd_step,
    split_train_val,
    train,
)


def tiny(multi=False):
    return preset("full", multi=multi, num_levels=2, channel_scale="1/16", patch_size=64, context_border=16)


def test_class_weights_hand_values():
    masks = [np.array([[0, 0, 0, 1]]), np.array([[255, 0, 1, 1]])]
    # 7 scored pixels: 4 of class 0, 3 of class 1, none of class 2
    np.testing.assert_allclose(class_weights(masks, 3), [7 / 12, 7 / 9, 0.0])


def test_class_weights_all_ignored_is_data_error():
    with pytest.raises(DataError):
        class_weights([np.full((2, 2), 255)], 3)


def test_sgd_step_hand_values():
    p = Tensor(np.full((1, 1, 1, 2), 1.0), requires_grad=True)
    b = Tensor(np.full((1, 1, 1, 2), 1.0), requires_grad=True)
    params = {"x.weight": p, "x.bias": b}
    velocity = {}
    cfg = TrainConfig(learning_rate=0.1, momentum=0.9, weight_decay=0.5)
    for _ in range(2):
        p.grad = np.full(p.shape, 2.0)
        b.grad = np.full(b.shape, 2.0)
        sgd_step(params, velocity, cfg)
    # weight: v1 = 2.5, p1 = 0.75; v2 = 0.9*2.5 + 2 + 0.375 = 4.625, p2 = 0.2875
    np.testing.assert_allclose(p.data, 0.2875)
    # bias has no decay: v1 = 2, b1 = 0.8; v2 = 3.8, b2 = 0.42
    np.testing.assert_allclose(b.data, 0.42)


def test_train_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(learning_rate=-1)
    with pytest.raises(ConfigError):
        TrainConfig(batch_size=0)


def test_augment_moves_image_and_mask_together():
    rng = np.random.default_rng(0)
    mask = rng.integers(0, 8, (32, 32)).astype(np.uint8)
    img = np.stack([mask * 30, mask, 255 - mask], axis=-1).astype(np.uint8)
    spec = AugmentationSpec(crop_size=24)
    for _ in range(20):
        ai, am = augment(img, mask, spec, rng)
        assert ai.shape == img.shape and am.shape == mask.shape
        np.testing.assert_array_equal(ai[..., 1], am)


def test_augment_dataset_multiplicity_and_determinism():
    pairs = synth_dataset(2, 32, 4, seed=0)
    a = augment_dataset(pairs, AugmentationSpec(crop_size=24), seed=3)
    b = augment_dataset(pairs, AugmentationSpec(crop_size=24), seed=3)
    assert len(a) == 10
    assert all(np.array_equal(x[0], y[0]) and np.array_equal(x[1], y[1]) for x, y in zip(a, b))


def test_split_is_disjoint_and_complete():
    tr, va = split_train_val(50, 0.1, seed=1)
    assert len(va) == 5 and len(tr) == 45
    assert sorted(np.concatenate([tr, va]).tolist()) == list(range(50))


def test_make_samples_multi_resolution_context():
    pairs = synth_dataset(1, 64, 8, seed=0)
    s = make_samples(pairs, resolutions=2, border=16)[0]
    assert [x.shape[0] for x in s.inputs] == [96, 64]
    np.testing.assert_array_equal(s.inputs[0][16:80, 16:80], s.inputs[1])


def test_roi_samples_tile_with_true_context():
    img = np.random.default_rng(0).integers(0, 255, (100, 120, 3), dtype=np.uint8)
    mask = np.random.default_rng(1).integers(0, 8, (100, 120)).astype(np.uint8)
    samples = roi_samples([(img, mask)], resolutions=2, patch=64, border=16)
    assert len(samples) == 2 * 3
    s = samples[1]
    assert s.inputs[0].shape == (96, 96, 3) and s.mask.shape == (64, 64)
    np.testing.assert_array_equal(s.inputs[0][16:80, 16:80], s.inputs[1])
    np.testing.assert_array_equal(s.inputs[1], img[0:64, 50:114])
    np.testing.assert_array_equal(s.inputs[0], read_window(img, -16, 34, 96, 96))
    augmented = roi_samples([(img, mask)], 2, 64, 16, AugmentationSpec(crop_size=48, multiplicity=3))
    assert len(augmented) == 18


def test_overfit_four_patches():
    pairs = synth_dataset(4, 64, 8, seed=2)
    samples = make_samples(pairs)
    cfg = preset("full", num_levels=2, channel_scale="1/8", patch_size=64, context_border=16)
    graph = build_model(cfg, seed=0)
    result = train(graph, samples, TrainConfig(learning_rate=0.02, batch_size=4, max_steps=100, eval_every=50), samples)
    assert result.losses[-1] < 0.25 * result.losses[0]
    assert result.validations[-1][1] > 0.7


def test_multi_resolution_training_runs(tmp_path):
    pairs = synth_dataset(2, 64, 8, seed=3)
    samples = make_samples(pairs, resolutions=2, border=16)
    graph = build_model(tiny(multi=True), seed=0)
    ck = tmp_path / "ck.wsg"
    result = train(graph, samples, TrainConfig(learning_rate=0.01, batch_size=2, max_steps=3, eval_every=3),
                   samples, log_path=tmp_path / "train.log", checkpoint_path=ck)
    assert len(result.losses) == 3 and ck.exists()
    lines = (tmp_path / "train.log").read_text().splitlines()
    assert lines[0].startswith("# seed=0") and len(lines) == 5


def test_zero_learning_rate_keeps_weights():
    samples = make_samples(synth_dataset(2, 64, 8, seed=4))
    graph = build_model(tiny(), seed=0)
    before = {k: v.data.copy() for k, v in graph.params.items()}
    train(graph, samples, TrainConfig(learning_rate=0.0, batch_size=2, max_steps=3))
    assert all(np.array_equal(before[k], v.data) for k, v in graph.params.items())


def test_nan_parameter_raises_numerical_error_with_step():
    samples = make_samples(synth_dataset(2, 64, 8, seed=5))
    graph = build_model(tiny(), seed=0)
    next(iter(graph.params.values())).data[...] = np.nan
    with pytest.raises(NumericalError, match="step 1"):
        train(graph, samples, TrainConfig(batch_size=2, max_steps=2))


def test_geometry_mismatch_is_config_error():
    samples = make_samples(synth_dataset(1, 64, 8, seed=0))
    graph = build_model(tiny(multi=True))
    with pytest.raises(ConfigError):
        train(graph, samples, TrainConfig(max_steps=1))


def test_synthetic_data_is_deterministic():
    a = synth_dataset(3, 64, 8, seed=9)
    b = synth_dataset(3, 64, 8, seed=9)
    assert all(np.array_equal(x[0], y[0]) and np.array_equal(x[1], y[1]) for x, y in zip(a, b))
    np.testing.assert_allclose(class_profile(8).sum(), 1.0)
    assert np.all(np.diff(class_profile(8)) < 0)
