import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from intop.baselines import (
    CNNClassifier,
    CNNConfig,
    DecisionTree,
    FFNNClassifier,
    GAConfig,
    best_split,
    fit_cnn,
    fit_ffnn,
    fit_svm,
    fit_tree,
    ga_tune,
)
from intop.checks import exhaustive_gini_split
from intop.quadrature import make_rng
from intop.training import TrainConfig


# decision tree


def test_single_sample_leaf():
    tree = fit_tree(np.array([[0.3, 0.1]]), np.array([2]), n_classes=3)
    assert len(tree.nodes()) == 1 and tree.predict(np.zeros((4, 2))).tolist() == [2] * 4


def test_one_dimensional_threshold():
    X = np.array([[0.0], [1.0], [2.0], [3.0]])
    y = np.array([0, 0, 1, 1])
    tree = fit_tree(X, y)
    assert (tree.root.feature, tree.root.threshold) == (0, 1.5)
    assert tree.root.left.is_leaf and tree.root.right.is_leaf
    assert tree.predict(X).tolist() == [0, 0, 1, 1]


def test_split_tie_goes_to_lowest_feature_then_threshold():
    X = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
    y = np.array([0, 1, 0, 1])
    # thresholds 0.5 and 2.5 tie on both identical features
    assert best_split(X, y, 2)[:2] == (0, 0.5)


def test_matches_exhaustive_oracle_on_random_sets():
    rng = make_rng(700)
    for _ in range(100):
        n, F = int(rng.integers(1, 21)), int(rng.integers(1, 5))
        X = rng.integers(0, 5, (n, F)).astype(float)
        y = rng.integers(0, 3, n)
        ours = best_split(X, y, 3)
        oracle = exhaustive_gini_split(X.tolist(), y.tolist())
        assert (None if ours is None else ours[:2]) == oracle


def _conflict_free(X, y):
    seen = {}
    for row, label in zip(map(tuple, X), y):
        if seen.setdefault(row, label) != label:
            return False
    return True


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 30), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_unlimited_depth_memorizes(n, F, seed):
    rng = make_rng(seed)
    X = rng.integers(0, 4, (n, F)).astype(float)
    y = rng.integers(0, 3, n)
    if _conflict_free(X, y):
        assert np.all(fit_tree(X, y).predict(X) == y)


def test_depth_and_leaf_limits():
    rng = make_rng(701)
    X = rng.uniform(size=(60, 3))
    y = rng.integers(0, 2, 60)
    assert fit_tree(X, y, max_depth=2).depth <= 2
    tree = fit_tree(X, y, min_samples_leaf=10)
    leaves = [n for n in tree.nodes() if n.is_leaf]
    assert min(int(n.counts.sum()) for n in leaves) >= 10


def test_entropy_criterion_also_separates():
    X = np.array([[0.0], [1.0], [2.0], [3.0]])
    tree = DecisionTree(criterion="entropy").fit(X, np.array([0, 0, 1, 1]))
    assert tree.root.threshold == 1.5


# linear SVM


def test_svm_separable_two_d():
    rng = make_rng(702)
    X = np.concatenate([rng.normal([2, 2], 0.3, (20, 2)), rng.normal([-2, -2], 0.3, (20, 2))])
    y = np.repeat([0, 1], 20)
    svm = fit_svm(X, y, lam=1e-3, epochs=300)
    assert np.all(svm.predict(X) == y)


def test_svm_multiclass_ovr():
    rng = make_rng(703)
    centres = np.array([[3, 0], [-3, 0], [0, 3]])
    X = np.concatenate([rng.normal(c, 0.3, (15, 2)) for c in centres])
    y = np.repeat([0, 1, 2], 15)
    assert np.mean(fit_svm(X, y, lam=1e-3, epochs=500).predict(X) == y) == 1.0


def test_svm_huge_lambda_shrinks_weights():
    rng = make_rng(704)
    X = rng.normal(size=(30, 5))
    y = (rng.uniform(size=30) < 0.3).astype(int)
    svm = fit_svm(X, y, lam=1e6, epochs=300)
    assert np.abs(svm.W).max() < 1e-5
    # only the unregularized biases remain: everything goes to the majority class
    assert np.all(svm.predict(X) == np.bincount(y).argmax())


def test_svm_needs_two_classes():
    with pytest.raises(ValueError):
        fit_svm(np.zeros((4, 2)), np.zeros(4, dtype=int))


# neural baselines


def _zeros_ones(n=10, F=32):
    X = np.concatenate([np.zeros((n, F)), np.ones((n, F))])
    y = np.repeat([0, 1], n)
    order = make_rng(705).permutation(2 * n)
    return X[order], y[order]


def test_ffnn_trivially_separable():
    X, y = _zeros_ones()
    Xv, yv = _zeros_ones(3)
    model, trace = fit_ffnn(X, y, 2, TrainConfig(epochs=50, batch_size=8), X_val=Xv, y_val=yv)
    assert max(trace.val_acc) == 1.0
    assert isinstance(model, FFNNClassifier)


def test_cnn_trivially_separable():
    X, y = _zeros_ones()
    Xv, yv = _zeros_ones(3)
    model, trace = fit_cnn(X, y, 2, TrainConfig(epochs=50, batch_size=8), X_val=Xv, y_val=yv)
    assert max(trace.val_acc) == 1.0
    assert isinstance(model, CNNClassifier)


def test_ffnn_default_widths():
    model = FFNNClassifier(235, 3)
    widths = [layer.weight.shape for layer in model.mlp.layers]
    assert widths == [(235, 128), (128, 64), (64, 3)]


def test_cnn_head_matches_flattened_conv_output():
    model = CNNClassifier(256, 3, CNNConfig())
    out = model.logits(np.zeros((2, 256)))
    assert out.shape == (2, 3)


# genetic search


def test_ga_population_two_single_generation():
    cfg = GAConfig(population=2, generations=1)
    params, fit, history = ga_tune("tree", None, None, None, None, config=cfg, seed=3,
                                   fitness=lambda p: p["max_depth"] + p["min_samples_leaf"] / 100)
    rng = make_rng(3, 51)
    first = (int(rng.integers(1, 21)), int(rng.integers(1, 11)))
    second = (int(rng.integers(1, 21)), int(rng.integers(1, 11)))
    fitter = max(first, second, key=lambda g: g[0] + g[1] / 100)
    assert (params["max_depth"], params["min_samples_leaf"]) == fitter
    assert history == [fit]


def test_ga_single_point_space():
    cfg = GAConfig(population=4, generations=3, spaces={"tree": {"max_depth": ("int", 4, 4),
                                                                 "min_samples_leaf": ("int", 2, 2)}})
    params, _, _ = ga_tune("tree", None, None, None, None, config=cfg, fitness=lambda p: 0.0)
    assert params == {"max_depth": 4, "min_samples_leaf": 2}


def test_ga_two_threshold_toy_set():
    X = np.arange(12, dtype=float)[:, None]
    y = np.array([0] * 4 + [1] * 4 + [0] * 4)
    params, fit, _ = ga_tune("tree", X, y, X, y, 2, GAConfig(population=8, generations=5), seed=1)
    assert fit == 1.0 and params["max_depth"] >= 2
    assert np.all(fit_tree(X, y, params["max_depth"], params["min_samples_leaf"]).predict(X) == y)


@pytest.mark.parametrize("seed", range(5))
def test_ga_elitism(seed):
    gen0 = []

    def fitness(p):
        v = float(np.sin(p["max_depth"] * 1.3) + np.cos(p["min_samples_leaf"]))
        if len(gen0) < 6:
            gen0.append(v)
        return v

    _, best, history = ga_tune("tree", None, None, None, None, config=GAConfig(population=6, generations=6),
                               seed=seed, fitness=fitness)
    assert best >= max(gen0)
    assert history == sorted(history)


def test_ga_deterministic_svm():
    rng = make_rng(706)
    X = rng.normal(size=(30, 4))
    y = (X[:, 0] > 0).astype(int)
    cfg = GAConfig(population=4, generations=2, svm_epochs=50)
    a = ga_tune("svm", X[:20], y[:20], X[20:], y[20:], 2, cfg, seed=2)
    b = ga_tune("svm", X[:20], y[:20], X[20:], y[20:], 2, cfg, seed=2)
    assert a == b
    assert -6.0 <= a[0]["log10_lambda"] <= 2.0


def test_ga_config_validation():
    with pytest.raises(ValueError):
        GAConfig(population=1)
    with pytest.raises(ValueError):
        GAConfig(mutation_rate=1.5)
