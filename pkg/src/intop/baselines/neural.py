"""Feed-forward and convolutional comparison networks on the same autodiff core."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import diffcore as dc
from ..operator import Classifier
from ..quadrature import make_rng
from ..training import TrainConfig, train


@dataclass
class FFNNConfig:
    hidden: list = field(default_factory=lambda: [128, 64])
    nonlinearity: str = "tanh"


@dataclass
class CNNConfig:
    channels: list = field(default_factory=lambda: [8, 16])
    kernel_width: int = 9
    stride: int = 2
    nonlinearity: str = "tanh"
    hidden: list = field(default_factory=lambda: [128, 64])


class FFNNClassifier(Classifier):
    def __init__(self, n_features, n_classes, config: FFNNConfig | None = None, seed=0):
        self.config = config or FFNNConfig()
        self.n_features = n_features
        self.n_classes = n_classes
        rng = make_rng(seed, 13)
        self.mlp = dc.MLP([n_features, *self.config.hidden, n_classes], rng, self.config.nonlinearity)

    def logits(self, X, training=False):
        X = X if isinstance(X, dc.Tensor) else dc.Tensor(X)
        if X.shape[-1] != self.n_features:
            raise dc.ShapeError(f"FFNN expects {self.n_features} inputs, got {X.shape[-1]}")
        return self.mlp(X)


class CNNClassifier(Classifier):
    """Stack of strided convolutions, flattened into an FFNN head."""

    def __init__(self, n_features, n_classes, config: CNNConfig | None = None, seed=0):
        self.config = c = config or CNNConfig()
        self.n_features = n_features
        self.n_classes = n_classes
        rng = make_rng(seed, 14)
        self.conv_weights, self.conv_biases = [], []
        length, cin = n_features, 1
        for cout in c.channels:
            if c.kernel_width > length:
                raise ValueError(f"conv stack too deep for input length {n_features}")
            bound = 1.0 / np.sqrt(cin * c.kernel_width)
            self.conv_weights.append(dc.Parameter(rng.uniform(-bound, bound, (cout, cin, c.kernel_width))))
            self.conv_biases.append(dc.Parameter(rng.uniform(-bound, bound, (cout,))))
            length = (length - c.kernel_width) // c.stride + 1
            cin = cout
        self.flat_length = cin * length
        self.head = dc.MLP([self.flat_length, *c.hidden, n_classes], rng, c.nonlinearity)

    def logits(self, X, training=False):
        X = X if isinstance(X, dc.Tensor) else dc.Tensor(X)
        B = X.shape[0]
        act = dc.activation(self.config.nonlinearity)
        h = dc.reshape(X, (B, 1, self.n_features))
        for w, b in zip(self.conv_weights, self.conv_biases):
            h = act(dc.conv1d(h, w, self.config.stride, b))
        return self.head(dc.reshape(h, (B, self.flat_length)))


def fit_ffnn(X, y, n_classes, config: TrainConfig | None = None, arch: FFNNConfig | None = None,
             X_val=None, y_val=None, seed=0):
    model = FFNNClassifier(X.shape[1], n_classes, arch, seed=seed)
    return train(model, X, y, config, X_val, y_val)


def fit_cnn(X, y, n_classes, config: TrainConfig | None = None, arch: CNNConfig | None = None,
            X_val=None, y_val=None, seed=0):
    model = CNNClassifier(X.shape[1], n_classes, arch, seed=seed)
    return train(model, X, y, config, X_val, y_val)
