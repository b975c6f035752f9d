import math

import numpy as np
import pytest

from intop import diffcore as dc
from intop.operator import IntegralOperatorModel, OperatorConfig
from intop.quadrature import MCConfig, make_rng
from intop.training import TrainConfig, TrainTrace, carve_validation, evaluate, train

N_FEATURES = 40


def small_model(n_classes=2, seed=0, policy="per-forward-pass"):
    cfg = OperatorConfig(kernel_width=5, stride=2, hidden=[16, 16], latent_scale=16.0, coordinate_scale=20.0)
    mc = MCConfig(n_train=200, n_eval=300, resample_policy=policy)
    return IntegralOperatorModel(N_FEATURES, n_classes, cfg, mc, seed=seed)


def zeros_and_ones(n_per_class=12, seed=0):
    rng = make_rng(seed)
    X = np.concatenate([np.zeros((n_per_class, N_FEATURES)), np.ones((n_per_class, N_FEATURES))])
    y = np.repeat([0, 1], n_per_class)
    order = rng.permutation(len(y))
    return X[order], y[order]


def balanced(n_classes, n_per_class=10, seed=0):
    rng = make_rng(seed)
    X = rng.uniform(size=(n_classes * n_per_class, N_FEATURES))
    y = np.repeat(np.arange(n_classes), n_per_class)
    return X, y


def test_trivially_separable_reaches_full_val_accuracy():
    X, y = zeros_and_ones()
    Xv, yv = zeros_and_ones(4, seed=1)
    model, trace = train(small_model(), X, y, TrainConfig(epochs=50, batch_size=8, lr=3e-3), Xv, yv)
    assert max(trace.val_acc) == 1.0
    assert len(trace) <= 50
    pred, logits = evaluate(model, X)
    assert np.mean(pred == y) == 1.0
    assert logits.shape == (len(X), 2)


@pytest.mark.parametrize("n_classes", [2, 3, 5])
def test_initial_loss_near_log_c(n_classes):
    X, y = balanced(n_classes)
    model = small_model(n_classes, seed=n_classes)
    loss = dc.cross_entropy(model.logits(X), y).item()
    assert abs(loss - math.log(n_classes)) < 0.3


def test_zero_learning_rate_is_a_no_op():
    X, y = balanced(2)
    model = small_model()
    before = model.state_dict()
    train(model, X, y, TrainConfig(epochs=3, batch_size=4, lr=0.0))
    after = model.state_dict()
    for k in before:
        assert before[k].tobytes() == after[k].tobytes()


@pytest.mark.parametrize("optimizer", ["sgd", "adam"])
def test_single_step_descends_with_fixed_points(optimizer):
    X, y = balanced(3, 1, seed=4)
    for seed in range(20):
        model = small_model(3, seed=seed, policy="fixed")
        x, label = X[seed % 3: seed % 3 + 1], y[seed % 3: seed % 3 + 1]
        pts = model.sampler.train_points()
        loss = dc.cross_entropy(model.logits(x, points=pts), label)
        opt = dc.make_optimizer(optimizer, model.parameters(), 1e-4)
        opt.zero_grad()
        loss.backward()
        opt.step()
        with dc.no_grad():
            after = dc.cross_entropy(model.logits(x, points=pts), label).item()
        assert after < loss.item()


def test_training_is_deterministic():
    X, y = balanced(2, 8)
    cfg = TrainConfig(epochs=4, batch_size=4, lr=1e-2, seed=3)
    m1, t1 = train(small_model(seed=1), X, y, cfg)
    m2, t2 = train(small_model(seed=1), X, y, cfg)
    assert t1.train_loss == t2.train_loss and t1.val_loss == t2.val_loss
    for k, v in m1.state_dict().items():
        assert m2.state_dict()[k].tobytes() == v.tobytes()


def test_best_epoch_parameters_are_restored():
    X, y = balanced(2, 8)
    Xv, yv = balanced(2, 3, seed=9)
    model, trace = train(small_model(seed=2), X, y, TrainConfig(epochs=6, batch_size=4, lr=5e-2), Xv, yv)
    logits = model.predict_logits(Xv)
    acc = np.mean(np.argmax(logits, axis=1) == yv)
    assert acc == trace.val_acc[trace.best_epoch]
    best = (trace.val_acc[trace.best_epoch], -trace.val_loss[trace.best_epoch])
    assert all(best >= (a, -l) for a, l in zip(trace.val_acc, trace.val_loss))


def test_early_stopping_respects_patience():
    X, y = balanced(2, 8)
    _, trace = train(small_model(), X, y, TrainConfig(epochs=50, batch_size=16, lr=0.0, patience=3))
    assert len(trace) == 4 and trace.best_epoch == 0


def test_single_class_rejected():
    X = np.zeros((10, N_FEATURES))
    with pytest.raises(ValueError, match="two classes"):
        train(small_model(), X, np.zeros(10, dtype=int))


def test_non_finite_loss_reports_batch_and_norms():
    X, y = balanced(2, 4)
    model = small_model()
    model.kernel.net.layers[-1].bias.data[:] = np.nan
    with pytest.raises(FloatingPointError, match="batch indices.*parameter norms"):
        train(model, X, y, TrainConfig(epochs=1, batch_size=4))


def test_evaluate_empty_and_repeatable():
    model = small_model()
    pred, logits = evaluate(model, np.zeros((0, N_FEATURES)))
    assert pred.shape == (0,) and logits.shape == (0, 2)
    X, _ = balanced(2, 3)
    assert evaluate(model, X)[0].tolist() == evaluate(model, X)[0].tolist()


def test_carve_validation_takes_the_tail():
    X = np.arange(18.0).reshape(9, 2)
    y = np.arange(9)
    Xt, yt, Xv, yv = carve_validation(X, y, 1 / 9)
    assert yv.tolist() == [8] and yt.tolist() == list(range(8))


def test_trace_csv(tmp_path):
    trace = TrainTrace([1.0, 0.5], [0.9, 0.4], [0.5, 1.0], [0.1, 0.1], 1)
    trace.write_csv(tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "epoch,train_loss,val_loss,val_acc"
    assert lines[2] == "1,0.5,0.4,1.0"


@pytest.mark.parametrize("kwargs", [{"epochs": 0}, {"batch_size": 0}, {"val_fraction": 1.0},
                                    {"lr": -1.0}, {"optimizer": "rmsprop"}])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        TrainConfig(**kwargs)
