"""One-vs-rest linear SVM trained by full-batch subgradient descent.

Each class ``c`` gets a weight vector and bias minimising

    lam / 2 * ||w_c||^2 + mean_i max(0, 1 - y_ic (w_c . x_i + b_c))

with ``y_ic = +1`` for members of ``c`` and ``-1`` otherwise. The weight step
``lr / (1 + lr * lam * t)`` keeps ``step * lam < 1`` for every ``lam``; the
unregularized bias uses ``lr / sqrt(t)`` so it still converges when ``lam`` is
large. The iterate with the lowest objective is kept per class.
"""

from __future__ import annotations

import numpy as np


class LinearSVM:
    def __init__(self, lam=1e-3, epochs=300, lr=0.1):
        self.lam = lam
        self.epochs = epochs
        self.lr = lr
        self.W = None
        self.b = None

    def objective(self, X, Y, W, b):
        margins = Y * (X @ W + b)
        return 0.5 * self.lam * (W * W).sum(0) + np.maximum(0.0, 1.0 - margins).mean(0)

    def fit(self, X, y, n_classes=None):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        C = int(n_classes or y.max() + 1)
        if len(np.unique(y)) < 2:
            raise ValueError("SVM needs at least two classes")
        n, F = X.shape
        Y = np.where(np.eye(C, dtype=bool)[y], 1.0, -1.0)
        W = np.zeros((F, C))
        b = np.zeros(C)
        best = self.objective(X, Y, W, b)
        bestW, bestb = W.copy(), b.copy()
        for t in range(1, self.epochs + 1):
            active = (Y * (X @ W + b)) < 1.0
            AY = np.where(active, Y, 0.0)
            gW = self.lam * W - X.T @ AY / n
            gb = -AY.sum(0) / n
            W = W - self.lr / (1.0 + self.lr * self.lam * t) * gW
            b = b - self.lr / np.sqrt(t) * gb
            obj = self.objective(X, Y, W, b)
            better = obj < best
            best = np.where(better, obj, best)
            bestW[:, better] = W[:, better]
            bestb[better] = b[better]
        self.W, self.b = bestW, bestb
        return self

    def decision_function(self, X):
        return np.asarray(X, dtype=np.float64) @ self.W + self.b

    def predict(self, X):
        return np.argmax(self.decision_function(X), axis=1)


def fit_svm(X, y, lam=1e-3, epochs=300, n_classes=None, lr=0.1):
    return LinearSVM(lam, epochs, lr).fit(X, y, n_classes)
