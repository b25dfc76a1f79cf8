import json

import numpy as np
import pytest

import normpert


def test_noise_shapes_and_moments():
    alpha, beta = normpert.sample_noise("gaussian", 1.0, 0.75, batch=400, channels=50, seed=3)
    assert alpha.shape == beta.shape == (400, 50)
    assert abs(alpha.mean() - 1.0) < 0.02
    assert abs(alpha.std() - 0.75) < 0.02
    a2, _ = normpert.sample_noise("gaussian", 1.0, 0.75, batch=400, channels=50, seed=3)
    assert np.array_equal(alpha, a2)


def test_np_matches_reference_and_realizes_stats():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(2, 3, 5, 5)) * 2.0 + 0.5
    alpha, beta = normpert.sample_noise("gaussian", 1.0, 0.75, batch=2, channels=3, seed=1)
    y = normpert.np_forward(x, alpha, beta)
    ref = normpert.np_reference(x, alpha, beta, eps=1e-12)
    assert np.max(np.abs(y - ref)) < 1e-9

    mx, sx = normpert.channel_mean_std(x)
    my, sy = normpert.channel_mean_std(y)
    assert np.allclose(my, beta * mx)
    assert np.allclose(sy, np.abs(alpha) * sx)


def test_np_plus_weights_the_mean_shift_by_delta():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(3, 4, 3, 3)) + np.array([0.0, 1.0, 2.0, 4.0])[None, :, None, None] * np.arange(3)[:, None, None, None]
    alpha, beta = normpert.sample_noise("uniform", 0.0, 2.0, batch=3, channels=4, seed=2)
    delta = normpert.batch_stat_variance(normpert.channel_mean_std(x)[0])["delta"]
    mu = x.mean(axis=(2, 3))
    expected = alpha[:, :, None, None] * x + (np.array(delta)[None, :] * (beta - alpha) * mu)[:, :, None, None]
    assert np.allclose(normpert.np_plus_forward(x, alpha, beta), expected)
    assert max(delta) == 1.0


def test_shape_errors():
    with pytest.raises(ValueError):
        normpert.np_forward(np.zeros((2, 3, 4)), np.ones((2, 3)), np.ones((2, 3)))
    with pytest.raises(ValueError):
        normpert.np_forward(np.zeros((2, 3, 4, 4)), np.ones((2, 2)), np.ones((2, 2)))


def test_stat_variance_and_mmd():
    means = np.array([[0.0, 1.0], [2.0, 1.0]])
    d = normpert.batch_stat_variance(means)
    assert d["delta_raw"] == pytest.approx([1.0, 0.0])
    assert d["delta"] == pytest.approx([1.0, 0.0])

    rng = np.random.default_rng(2)
    xs = rng.normal(size=(30, 4))
    assert normpert.mmd(xs, xs) == pytest.approx(0.0, abs=1e-12)
    assert normpert.mmd(xs, xs + 3.0) > 0.1
    lin = normpert.mmd(xs, xs + 1.0, kernel="linear")
    assert lin == pytest.approx(4.0)


def test_benchmark():
    b = normpert.make_benchmark(seed=5, train_size=16, val_size=8, image_size=16)
    assert set(b) == {"source_train", "source_val", "fog", "night", "warm"}
    night = b["night"]
    assert night["pixels"].shape == (8, 3, 16, 16)
    assert night["content_ids"] == b["source_val"]["content_ids"]
    assert night["pixels"].mean() < b["source_val"]["pixels"].mean()


def test_train_and_eval(tmp_path):
    cfg = {
        "dataset": {"seed": 3, "train_size": 48, "val_size": 16, "image_size": 16},
        "network": {"input_size": 16, "stages": [{"channels": 4, "blocks": 1}, {"channels": 8, "blocks": 1}]},
        "training": {"epochs": 1, "batch_size": 16},
        "np": {"sites": [{"stage": 1}]},
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    ckpt, epochs = normpert.train(str(path), out=str(tmp_path / "run"))
    assert len(epochs) == 1
    acc = normpert.eval_checkpoint(str(path), checkpoint=ckpt, out=str(tmp_path / "run"))
    assert set(acc) == {"source", "fog", "night", "warm"}
    assert all(0.0 <= v <= 1.0 for v in acc.values())


def test_config_errors_are_value_errors(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"training": {"momentun": 0.9}}')
    with pytest.raises(normpert.ConfigError, match="momentun"):
        normpert.train(str(path))
