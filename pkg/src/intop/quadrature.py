"""Plain uniform Monte Carlo quadrature on an interval.

Random streams come from numpy's PCG64 bit generator, whose output is
specified bit-for-bit and identical across platforms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diffcore as dc

RESAMPLE_POLICIES = ("per-forward-pass", "fixed")


def make_rng(*seed_words: int) -> np.random.Generator:
    """PCG64 stream keyed by a tuple of non-negative integers."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(s) for s in seed_words])))


@dataclass
class MCConfig:
    n_train: int = 2000
    n_eval: int = 5000
    domain: tuple = (0.0, 1.0)
    rng_seed: int = 0
    resample_policy: str = "per-forward-pass"

    def __post_init__(self):
        self.domain = tuple(float(v) for v in self.domain)
        if self.n_train < 1 or self.n_eval < 1:
            raise ValueError(f"sample counts must be >= 1, got n_train={self.n_train}, n_eval={self.n_eval}")
        if len(self.domain) != 2 or not self.domain[0] < self.domain[1]:
            raise ValueError(f"domain must be an interval lo < hi, got {self.domain}")
        if self.resample_policy not in RESAMPLE_POLICIES:
            raise ValueError(f"resample_policy must be one of {RESAMPLE_POLICIES}, got {self.resample_policy!r}")


def sample_uniform(n: int, domain, rng: np.random.Generator) -> np.ndarray:
    """``n`` i.i.d. uniform draws on ``domain``, sorted ascending."""
    lo, hi = float(domain[0]), float(domain[1])
    if n < 1:
        raise ValueError(f"need at least one sample, got n={n}")
    if not lo < hi:
        raise ValueError(f"empty domain [{lo}, {hi}]")
    return np.sort(lo + (hi - lo) * rng.random(n))


def mc_integrate(integrand, points, domain, axis=0):
    """Estimate the integral as ``(hi - lo) * mean(integrand(points))``.

    ``integrand`` receives the whole point array and returns a Tensor whose
    ``axis`` dimension runs over the points. Gradients flow through every
    evaluation.
    """
    points = np.asarray(points, dtype=np.float64)
    lo, hi = float(domain[0]), float(domain[1])
    if points.size == 0:
        raise ValueError("mc_integrate: empty point set")
    if points.min() < lo or points.max() > hi:
        raise ValueError(f"mc_integrate: points fall outside [{lo}, {hi}]")
    values = integrand(points)
    if not isinstance(values, dc.Tensor):
        values = dc.Tensor(values)
    if values.shape[axis] != points.size:
        raise dc.ShapeError(
            f"mc_integrate: integrand returned {values.shape[axis]} evaluations on axis {axis} for {points.size} points"
        )
    avg = dc.mean(values, axis=axis)
    width = hi - lo
    return avg if width == 1.0 else dc.scale(avg, width)


class PointSampler:
    """Produces integration points under an :class:`MCConfig`.

    Training draws a fresh set on every call (unless the policy is
    ``fixed``); evaluation always returns the same set, drawn once from
    ``rng_seed``.
    """

    def __init__(self, config: MCConfig, train_rng: np.random.Generator | None = None):
        self.config = config
        self.train_rng = train_rng if train_rng is not None else make_rng(config.rng_seed, 1)
        self._eval_points = None
        self._fixed_train = None

    def train_points(self) -> np.ndarray:
        if self.config.resample_policy == "fixed":
            if self._fixed_train is None:
                self._fixed_train = sample_uniform(self.config.n_train, self.config.domain, make_rng(self.config.rng_seed, 2))
            return self._fixed_train
        return sample_uniform(self.config.n_train, self.config.domain, self.train_rng)

    def eval_points(self) -> np.ndarray:
        if self._eval_points is None:
            self._eval_points = sample_uniform(self.config.n_eval, self.config.domain, make_rng(self.config.rng_seed, 0))
        return self._eval_points
