import numpy as np
import pytest

from teleop_predictor.baselines import BaselineConfig, build_baseline
from teleop_predictor.channel_sim import CorruptedWindow
from teleop_predictor.data_io import NormStats
from teleop_predictor.errors import EmptySplitError, ShapeError
from teleop_predictor.informer import Informer, InformerConfig
from teleop_predictor.pipeline import model_from_checkpoint
from teleop_predictor.training import (
    WindowSet,
    build_features,
    evaluate_mse,
    predict,
    predict_window,
    train_baseline,
    train_model,
)

ENC, PRED = 12, 4


def tiny(kind, **kw):
    common = dict(enc_len=ENC, pred_len=PRED, lr=3e-3, batch=16, max_epochs=3, patience=3, seed=0)
    common.update(kw)
    if kind == "informer":
        return InformerConfig(**{"d_model": 8, "n_heads": 2, "d_ff": 16, "label_len": 6, "dropout": 0.0, **common})
    return BaselineConfig(**{"kind": kind, "hidden": 8, "dilations": (1, 2), **common})


def build(cfg):
    return Informer(cfg) if isinstance(cfg, InformerConfig) else build_baseline(cfg)


def level_task(n, seed):
    """Windows whose targets hold a per-window constant level that the input reveals."""
    rng = np.random.default_rng(seed)
    level = rng.normal(size=(n, 1, 3))
    x = np.concatenate([level + 0.05 * rng.normal(size=(n, ENC, 3)), np.zeros((n, ENC, 1))], axis=2)
    return WindowSet(x, np.broadcast_to(level, (n, PRED, 3)).copy())


def test_build_features():
    norm = NormStats(("x", "y", "z"), np.array([1.0, 2.0, 3.0]), np.array([2.0, 2.0, 2.0]))
    p = np.array([[3.0, 2.0, 1.0], [0.0, 0.0, 0.0]])
    f = build_features(p, np.array([0, 1]), norm)
    np.testing.assert_array_equal(f, [[1.0, 0.0, -1.0, 0.0], [0.0, 0.0, 0.0, 1.0]])
    assert build_features(p, np.array([0, 1]), norm, use_mask=False).shape == (2, 3)


@pytest.mark.parametrize("kind", ["informer", "lstm"])
def test_zero_lr_leaves_parameters(kind):
    cfg = tiny(kind, lr=0.0, max_epochs=1)
    model = build(cfg)
    before = model.state_dict()
    train, val = level_task(40, 1), level_task(20, 2)
    rep = train_model(model, train, val, cfg)
    for name, value in model.state_dict().items():
        np.testing.assert_array_equal(value, before[name])
    assert rep.val_curve[0] == rep.initial_val_mse == evaluate_mse(model, val)


@pytest.mark.parametrize("kind", ["informer", "rnn", "tcn"])
def test_same_seed_same_curves(kind):
    def run():
        cfg = tiny(kind, **({"dropout": 0.1} if kind == "informer" else {}))
        return train_baseline(build(cfg), level_task(64, 3), level_task(16, 4), cfg)

    a, b = run(), run()
    assert a.train_curve == b.train_curve and a.val_curve == b.val_curve


@pytest.mark.parametrize("kind", ["informer", "rnn", "lstm", "tcn"])
def test_constant_target_sanity(kind):
    cfg = tiny(kind, max_epochs=20, patience=20)
    train, val = level_task(256, 5), level_task(64, 6)
    rep = train_model(build(cfg), train, val, cfg)
    variance = float(np.sum(np.var(val.y.reshape(-1, 3), axis=0)))
    assert len(rep.epochs) <= 20
    assert rep.best_val_mse < 0.1 * variance


def test_empty_split():
    cfg = tiny("rnn")
    empty = WindowSet(np.zeros((0, ENC, 4)), np.zeros((0, PRED, 3)))
    with pytest.raises(EmptySplitError):
        train_model(build(cfg), empty, level_task(4, 0), cfg)
    with pytest.raises(EmptySplitError):
        train_model(build(cfg), level_task(4, 0), empty, cfg)


def test_early_stopping_and_checkpoint(tmp_path):
    cfg = tiny("tcn", max_epochs=30, patience=2, lr=0.05)
    model = build(cfg)
    val = level_task(16, 8)
    rep = train_model(model, level_task(64, 7), val, cfg, checkpoint_path=tmp_path / "m.ckpt")
    assert rep.best_epoch >= 1 and rep.best_val_mse == min(rep.val_curve)
    if len(rep.epochs) < 30:
        assert len(rep.epochs) - rep.best_epoch == 2
    back, meta = model_from_checkpoint(tmp_path / "m.ckpt")
    assert meta["kind"] == "tcn" and meta["best_epoch"] == rep.best_epoch
    np.testing.assert_array_equal(predict(back, val.x), predict(model, val.x))
    assert evaluate_mse(model, val) == rep.best_val_mse


def test_predict_window_zero_head_is_mean():
    cfg = tiny("informer")
    model = build(cfg)
    model.head.W.data[...] = 0.0
    model.head.b.data[...] = 0.0
    norm = NormStats(("x", "y", "z"), np.array([0.1, -0.2, 0.3]), np.array([0.5, 0.5, 0.5]))
    rng = np.random.default_rng(9)
    truth = rng.normal(size=(ENC, 3))
    mask = (rng.random(ENC) < 0.3).astype(np.int8)
    win = CorruptedWindow(np.where(mask[:, None] == 1, 0.0, truth), mask, truth)
    out = predict_window(model, win, norm)
    np.testing.assert_allclose(out, np.broadcast_to(norm.mean, (PRED, 3)), rtol=0, atol=1e-15)
    trained = build(tiny("informer"))
    np.testing.assert_array_equal(predict_window(trained, win, norm), predict_window(trained, win, norm))
    with pytest.raises(ShapeError):
        predict_window(trained, win.slice(slice(0, ENC - 1)), norm)
    with pytest.raises(ShapeError):
        predict_window(trained, win, norm, use_mask=False)
