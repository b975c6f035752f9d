"""CART classification tree.

Splits are chosen greedily over every feature and every midpoint between
consecutive distinct sorted values. Among equally good splits (within
``TIE_TOL``) the lowest feature index wins, then the lowest threshold.
Samples with ``x[feature] <= threshold`` go left.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TIE_TOL = 1e-9


@dataclass
class TreeNode:
    counts: np.ndarray
    depth: int
    feature: int = -1
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self):
        return self.left is None

    @property
    def label(self):
        return int(np.argmax(self.counts))


def _impurity_sums(cl, cr, nl, nr, criterion):
    """Weighted child impurity ``nl * I(left) + nr * I(right)`` (lower is better)."""
    if criterion == "gini":
        return nl - (cl * cl).sum(-1) / nl + nr - (cr * cr).sum(-1) / nr
    with np.errstate(divide="ignore", invalid="ignore"):
        pl = cl / nl[..., None]
        pr = cr / nr[..., None]
        hl = -np.where(cl > 0, pl * np.log(pl), 0.0).sum(-1)
        hr = -np.where(cr > 0, pr * np.log(pr), 0.0).sum(-1)
    return nl * hl + nr * hr


def best_split(X, y, n_classes, min_samples_leaf=1, criterion="gini"):
    """Return ``(feature, threshold, weighted_child_impurity)`` or None."""
    n, F = X.shape
    if n < 2 * min_samples_leaf or n < 2:
        return None
    order = np.argsort(X, axis=0, kind="stable")
    xs = np.take_along_axis(X, order, axis=0)
    onehot = np.eye(n_classes)[y]
    left = np.cumsum(onehot[order], axis=0)[:-1]  # [n-1, F, C]
    right = onehot.sum(0) - left
    nl = np.arange(1, n, dtype=np.float64)[:, None]
    nr = n - nl
    valid = (xs[:-1] < xs[1:]) & (nl >= min_samples_leaf) & (nr >= min_samples_leaf)
    if not valid.any():
        return None
    cost = _impurity_sums(left, right, np.broadcast_to(nl, valid.shape), np.broadcast_to(nr, valid.shape), criterion)
    cost = np.where(valid, cost, np.inf).T  # [F, n-1], feature-major then threshold order
    best = cost.min()
    flat = int(np.flatnonzero(cost.ravel() <= best + TIE_TOL)[0])
    f, i = divmod(flat, n - 1)
    lo, hi = xs[i, f], xs[i + 1, f]
    thr = 0.5 * (lo + hi)
    if not lo <= thr < hi:
        thr = lo
    return f, float(thr), float(cost[f, i])


class DecisionTree:
    def __init__(self, max_depth=None, min_samples_leaf=1, criterion="gini"):
        if criterion not in ("gini", "entropy"):
            raise ValueError(f"criterion must be 'gini' or 'entropy', got {criterion!r}")
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.criterion = criterion
        self.root = None
        self.n_classes = None

    def fit(self, X, y, n_classes=None):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        if len(y) == 0:
            raise ValueError("cannot fit a tree on zero samples")
        self.n_classes = int(n_classes or y.max() + 1)
        self.root = self._grow(X, y, 0)
        return self

    def _grow(self, X, y, depth):
        node = TreeNode(np.bincount(y, minlength=self.n_classes).astype(np.float64), depth)
        if np.count_nonzero(node.counts) <= 1:
            return node
        if self.max_depth is not None and depth >= self.max_depth:
            return node
        split = best_split(X, y, self.n_classes, self.min_samples_leaf, self.criterion)
        if split is None:
            return node
        node.feature, node.threshold, _ = split
        mask = X[:, node.feature] <= node.threshold
        node.left = self._grow(X[mask], y[mask], depth + 1)
        node.right = self._grow(X[~mask], y[~mask], depth + 1)
        return node

    def predict(self, X):
        X = np.asarray(X, dtype=np.float64)
        out = np.empty(len(X), dtype=np.int64)
        stack = [(self.root, np.arange(len(X)))]
        while stack:
            node, idx = stack.pop()
            if node.is_leaf:
                out[idx] = node.label
                continue
            go_left = X[idx, node.feature] <= node.threshold
            stack.append((node.left, idx[go_left]))
            stack.append((node.right, idx[~go_left]))
        return out

    def nodes(self):
        stack, out = [self.root], []
        while stack:
            node = stack.pop()
            out.append(node)
            if not node.is_leaf:
                stack.extend([node.right, node.left])
        return out

    @property
    def depth(self):
        return max(n.depth for n in self.nodes())


def fit_tree(X, y, max_depth=None, min_samples_leaf=1, n_classes=None, criterion="gini"):
    return DecisionTree(max_depth, min_samples_leaf, criterion).fit(X, y, n_classes)
