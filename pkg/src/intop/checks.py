"""Self-verification suite run by ``intop check``.

Every check compares an implementation path against an independent oracle:
central finite differences for gradients, closed-form integrals for the
quadrature, hand-counted confusion matrices for metrics, and exhaustive
exact-arithmetic split enumeration for the tree.
"""

from __future__ import annotations

import time
from fractions import Fraction

import numpy as np

from . import diffcore as dc
from .baselines.tree import best_split, fit_tree
from .harness import metrics
from .operator import IntegralOperatorModel, OperatorConfig
from .quadrature import MCConfig, make_rng, mc_integrate, sample_uniform

FD_EPS = 1e-5


def relative_error(a, b):
    a, b = np.ravel(a), np.ravel(b)
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / scale)


def gradcheck(fn, inputs, eps=FD_EPS):
    """Max relative error between autodiff and central differences.

    ``fn`` maps Tensors to a Tensor (any shape); it is contracted with a fixed
    random weight so a single backward pass checks the full Jacobian action.
    """
    inputs = [np.array(x, dtype=np.float64) for x in inputs]
    leaves = [dc.Tensor(x, requires_grad=True) for x in inputs]
    out = fn(*leaves)
    weight = make_rng(7).uniform(-1.0, 1.0, out.shape)
    dc.sum(dc.mul(out, weight)).backward()

    def value(arrays):
        with dc.no_grad():
            return float((fn(*[dc.Tensor(a) for a in arrays]).data * weight).sum())

    worst = 0.0
    for i, x in enumerate(inputs):
        numeric = np.zeros_like(x)
        for j in np.ndindex(x.shape):
            plus = [a.copy() for a in inputs]
            minus = [a.copy() for a in inputs]
            plus[i][j] += eps
            minus[i][j] -= eps
            numeric[j] = (value(plus) - value(minus)) / (2 * eps)
        worst = max(worst, relative_error(leaves[i].grad, numeric))
    return worst


def model_gradcheck(model, X, y, points, eps=FD_EPS):
    """Relative error of d CE / d(all parameters) with the MC points held fixed."""
    model.zero_grad()
    dc.cross_entropy(model.logits(X, points=points), y).backward()
    params = model.parameters()
    analytic = np.concatenate([p.grad.ravel() for p in params])

    def loss():
        with dc.no_grad():
            return dc.cross_entropy(model.logits(X, points=points), y).item()

    numeric = []
    for p in params:
        for j in np.ndindex(p.shape):
            orig = p.data[j]
            p.data[j] = orig + eps
            up = loss()
            p.data[j] = orig - eps
            down = loss()
            p.data[j] = orig
            numeric.append((up - down) / (2 * eps))
    return relative_error(analytic, np.array(numeric))


def tiny_operator(n_features=24, n_classes=3, seed=0):
    cfg = OperatorConfig(kernel_width=5, stride=2, latent_channels=2, hidden=[5, 4],
                         latent_scale=2.0, coordinate_scale=3.0)
    return IntegralOperatorModel(n_features, n_classes, cfg, MCConfig(n_train=40, n_eval=50), seed=seed)


# ---------------------------------------------------------------------------
# individual checks; each returns (passed, detail)


def op_gradients():
    rng = make_rng(101)
    r = lambda *s: rng.uniform(-2.0, 2.0, s)  # noqa: E731
    cases = {
        "add": (dc.add, [r(3, 4), r(4)]),
        "sub": (dc.sub, [r(3, 4), r(3, 4)]),
        "mul": (dc.mul, [r(2, 3), r(3)]),
        "matmul": (dc.matmul, [r(3, 4), r(4, 2)]),
        "affine": (dc.affine, [r(3, 4), r(4, 2), r(2)]),
        "concat": (lambda a, b: dc.concat([a, b], axis=1), [r(2, 3), r(2, 2)]),
        "sum": (lambda a: dc.sum(a, axis=0), [r(3, 4)]),
        "mean": (lambda a: dc.mean(a, axis=1), [r(3, 4)]),
        "reshape": (lambda a: dc.reshape(a, (6, 2)), [r(3, 4)]),
        "transpose": (lambda a: dc.transpose(a, (2, 0, 1)), [r(2, 3, 4)]),
        "broadcast_to": (lambda a: dc.broadcast_to(a, (3, 4, 2)), [r(3, 1, 2)]),
        "tanh": (dc.tanh, [r(3, 4)]),
        "sigmoid": (dc.sigmoid, [r(3, 4)]),
        "relu": (dc.relu, [r(3, 4) + 0.05]),
        "conv1d": (lambda s, k, b: dc.conv1d(s, k, 2, b), [r(2, 11), r(3), r(1)]),
        "conv1d_multi": (lambda s, k, b: dc.conv1d(s, k, 2, b), [r(2, 3, 12), r(4, 3, 3), r(4)]),
        "cross_entropy": (lambda z: dc.cross_entropy(z, [0, 2, 1, 2]), [r(4, 3)]),
    }
    errors = {name: gradcheck(fn, args) for name, (fn, args) in cases.items()}
    worst = max(errors, key=errors.get)
    return errors[worst] < 1e-6, f"worst {worst} rel. error {errors[worst]:.2e}"


def end_to_end_gradient():
    rng = make_rng(102)
    model = tiny_operator()
    X = rng.uniform(0.0, 1.0, (2, 24))
    y = np.array([0, 2])
    err = model_gradcheck(model, X, y, sample_uniform(40, (0, 1), make_rng(103)))
    return err < 1e-4, f"rel. error {err:.2e}"


def quadrature_closed_forms():
    points = sample_uniform(5000, (0.0, 1.0), make_rng(104))
    sq = mc_integrate(lambda w: dc.Tensor(w ** 2), points, (0, 1)).item()
    sn = mc_integrate(lambda w: dc.Tensor(np.sin(np.pi * w)), points, (0, 1)).item()
    ok = abs(sq - 1 / 3) < 0.02 and abs(sn - 2 / np.pi) < 0.02
    return ok, f"int w^2 = {sq:.4f}, int sin(pi w) = {sn:.4f}"


def quadrature_convergence():
    ratio = convergence_ratio()
    return 7.0 <= ratio <= 14.0, f"RMS(n=500) / RMS(n=50000) = {ratio:.2f}"


def convergence_ratio(n_small=500, n_large=50000, seeds=50):
    def rms(n):
        errs = [
            mc_integrate(lambda w: dc.Tensor(w ** 2), sample_uniform(n, (0, 1), make_rng(200, s, n)), (0, 1)).item()
            - 1 / 3
            for s in range(seeds)
        ]
        return float(np.sqrt(np.mean(np.square(errs))))

    return rms(n_small) / rms(n_large)


def constant_exactness():
    worst = 0.0
    for n in (1, 7, 100, 5000):
        points = sample_uniform(n, (0, 1), make_rng(105, n))
        c = np.array([0.1, -2.5, 3.0])
        got = mc_integrate(lambda w: dc.Tensor(np.broadcast_to(c, (w.size, 3))), points, (0, 1)).data
        expected = 1.0 * np.full((n, 3), c).mean(axis=0)
        worst = max(worst, float(np.abs(got - expected).max()))
    return worst == 0.0, f"max deviation from (b-a)*mean: {worst:.1e}"


# hand-computed macro metrics; F1 is the mean of per-class harmonic means
METRIC_CASES = [
    ([[8, 2], [1, 9]], {"accuracy": 0.85, "precision": (8 / 9 + 9 / 11) / 2,
                        "recall": 0.85, "f1": (16 / 19 + 6 / 7) / 2}),
    ([[5, 5], [5, 5]], {"accuracy": 0.5, "precision": 0.5, "recall": 0.5, "f1": 0.5}),
    ([[3, 0, 0], [0, 4, 0], [0, 0, 5]], {"accuracy": 1.0, "precision": 1.0, "recall": 1.0, "f1": 1.0}),
    # class 1 never predicted: its precision is 0/0 := 0
    ([[2, 0], [3, 0]], {"accuracy": 0.4, "precision": 0.2, "recall": 0.5, "f1": 2 / 7}),
    ([[4, 1, 0], [2, 2, 1], [0, 0, 5]], {"accuracy": 11 / 15, "precision": 13 / 18,
                                         "recall": 11 / 15, "f1": 47 / 66}),
    ([[3, 0, 0], [2, 0, 0], [1, 0, 0]], {"accuracy": 0.5, "precision": 1 / 6, "recall": 1 / 3, "f1": 2 / 9}),
    # class 2 absent from truth and predictions
    ([[2, 1, 0], [0, 3, 0], [0, 0, 0]], {"accuracy": 5 / 6, "precision": 7 / 12,
                                         "recall": 5 / 9, "f1": 58 / 105}),
]


def metric_oracles():
    worst = 0.0
    for cm, expected in METRIC_CASES:
        got = metrics(cm)
        worst = max(worst, max(abs(got[k] - v) for k, v in expected.items()))
    return worst < 1e-12, f"max deviation {worst:.1e}"


def exhaustive_gini_split(X, y):
    """Exact-arithmetic best split: (feature, threshold) minimising weighted Gini."""
    n, F = len(X), len(X[0])
    best = None
    for f in range(F):
        values = sorted({row[f] for row in X})
        for lo, hi in zip(values, values[1:]):
            thr = (lo + hi) / 2
            left = [l for row, l in zip(X, y) if row[f] <= thr]
            right = [l for row, l in zip(X, y) if row[f] > thr]
            cost = Fraction(0)
            for side in (left, right):
                counts = np.bincount(side).tolist()
                cost += len(side) - Fraction(sum(c * c for c in counts), len(side))
            if best is None or cost < best[0]:
                best = (cost, f, thr)
    return None if best is None else (best[1], best[2])


def tree_oracle(n_sets=30):
    rng = make_rng(106)
    for t in range(n_sets):
        n = int(rng.integers(2, 21))
        F = int(rng.integers(1, 5))
        X = rng.integers(0, 6, (n, F)).astype(np.float64)
        y = rng.integers(0, 3, n)
        ours = best_split(X, y, 3)
        oracle = exhaustive_gini_split(X.tolist(), y.tolist())
        if (ours is None) != (oracle is None) or (ours and ours[:2] != oracle):
            return False, f"set {t}: ours {ours} vs oracle {oracle}"
    return True, f"{n_sets} random sets agree"


def tree_memorizes():
    rng = make_rng(107)
    X = rng.uniform(size=(40, 3))
    y = rng.integers(0, 3, 40)
    acc = float(np.mean(fit_tree(X, y).predict(X) == y))
    return acc == 1.0, f"train accuracy {acc:.3f}"


CHECKS = [
    ("op gradients vs finite differences", op_gradients),
    ("end-to-end gradient vs finite differences", end_to_end_gradient),
    ("quadrature closed forms", quadrature_closed_forms),
    ("quadrature 1/sqrt(n) convergence", quadrature_convergence),
    ("constant integrand exactness", constant_exactness),
    ("metric oracles", metric_oracles),
    ("tree split vs exhaustive enumeration", tree_oracle),
    ("tree memorizes consistent data", tree_memorizes),
]


def run_checks(out=print):
    """Run every check, print one status line each; True iff all pass."""
    all_ok = True
    for name, fn in CHECKS:
        t0 = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as e:
            ok, detail = False, f"{type(e).__name__}: {e}"
        all_ok &= ok
        out(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail} ({time.perf_counter() - t0:.2f}s)")
    return all_ok


__all__ = ["CHECKS", "gradcheck", "model_gradcheck", "run_checks", "relative_error"]
