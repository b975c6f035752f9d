"""Neural integral operator for spectrum classification.

A spectrum is encoded into a latent function ``u`` on ``[0, 1]`` plus an
evaluation point ``sigma_e``. A feed-forward Urysohn kernel ``G`` then defines

    T(u)(sigma) = integral over [0, 1] of G(u(w), sigma, w) dw

and the ``C`` outputs of ``T(u)(sigma_e)``, estimated by Monte Carlo, are the
class logits.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import diffcore as dc
from .quadrature import MCConfig, PointSampler, make_rng, mc_integrate

LATENT_DOMAIN = (0.0, 1.0)


@dataclass
class Spectrum:
    wavelengths: np.ndarray
    intensities: np.ndarray
    label: int = 0

    def __post_init__(self):
        self.wavelengths = np.asarray(self.wavelengths, dtype=np.float64)
        self.intensities = np.asarray(self.intensities, dtype=np.float64)
        if self.wavelengths.ndim != 1 or self.wavelengths.size < 2:
            raise ValueError("a spectrum needs at least two wavelengths")
        if self.intensities.shape != self.wavelengths.shape:
            raise ValueError(
                f"{self.intensities.size} intensities for {self.wavelengths.size} wavelengths"
            )
        if np.any(np.diff(self.wavelengths) <= 0):
            raise ValueError("wavelengths must be strictly increasing")


def minmax_rows(X: np.ndarray) -> tuple[np.ndarray, int]:
    """Min-max scale each row to [0, 1]; constant rows become zeros.

    Returns the scaled matrix and the number of constant rows.
    """
    X = np.asarray(X, dtype=np.float64)
    lo = X.min(axis=-1, keepdims=True)
    span = X.max(axis=-1, keepdims=True) - lo
    flat = span == 0
    out = np.where(flat, 0.0, (X - lo) / np.where(flat, 1.0, span))
    return out, int(flat.sum())


def normalize(spectrum: Spectrum) -> Spectrum:
    """Scale intensities to [0, 1] and map the wavelength axis onto [0, 1]."""
    values, n_flat = minmax_rows(spectrum.intensities[None, :])
    if n_flat:
        warnings.warn("constant spectrum normalized to all zeros", RuntimeWarning, stacklevel=2)
    w = spectrum.wavelengths
    grid = (w - w[0]) / (w[-1] - w[0])
    return Spectrum(grid, values[0], spectrum.label)


@dataclass
class LatentFunction:
    grid: np.ndarray
    values: np.ndarray  # [L', d]
    sigma_e: float


def default_stride(n: int) -> int:
    return max(1, n // 72)


def interpolation_matrix(n_grid: int, queries, domain=LATENT_DOMAIN) -> np.ndarray:
    """Weights ``W`` with ``values @ W`` = linear interpolation at ``queries``.

    The grid is uniform on ``domain``; queries outside it take the end values.
    """
    q = np.asarray(queries, dtype=np.float64)
    if q.size == 0:
        raise ValueError("interpolate: empty query list")
    lo, hi = domain
    pos = np.clip((q - lo) / (hi - lo), 0.0, 1.0) * (n_grid - 1)
    left = np.minimum(np.floor(pos).astype(np.int64), n_grid - 2)
    frac = pos - left
    W = np.zeros((n_grid, q.size))
    cols = np.arange(q.size)
    W[left, cols] = 1.0 - frac
    W[left + 1, cols] += frac
    return W


def interpolate(u, queries):
    """Piecewise-linear interpolation of a latent function.

    ``u`` is either a Tensor ``[..., L']`` (differentiable path, returns
    ``[..., P]``) or a :class:`LatentFunction` (returns ``[P, d]`` values).
    """
    if isinstance(u, LatentFunction):
        W = interpolation_matrix(len(u.grid), queries, (u.grid[0], u.grid[-1]))
        return W.T @ u.values
    W = interpolation_matrix(u.shape[-1], queries)
    lead = u.shape[:-1]
    flat = dc.reshape(u, (-1, u.shape[-1]))
    out = dc.matmul(flat, dc.Tensor(W))
    return dc.reshape(out, lead + (W.shape[1],))


@dataclass
class OperatorConfig:
    kernel_width: int = 9
    stride: int | None = None
    latent_channels: int = 1
    nonlinearity: str = "tanh"
    sigma_mode: str = "per_sample"
    hidden: list = field(default_factory=lambda: [64, 64])
    latent_scale: float = 1.0
    coordinate_scale: float = 1.0

    def __post_init__(self):
        if self.sigma_mode not in ("per_sample", "shared"):
            raise ValueError(f"sigma_mode must be 'per_sample' or 'shared', got {self.sigma_mode!r}")
        dc.activation(self.nonlinearity)
        self.hidden = list(self.hidden)


class Encoder(dc.Module):
    """One convolutional layer plus nonlinearity, and a head for ``sigma_e``."""

    def __init__(self, n_in, rng, kernel_width=9, stride=None, channels=1,
                 nonlinearity="tanh", sigma_mode="per_sample"):
        stride = default_stride(n_in) if stride is None else stride
        if kernel_width > n_in:
            raise ValueError(f"kernel width {kernel_width} exceeds spectrum length {n_in}")
        self.n_in = n_in
        self.kernel_width = kernel_width
        self.stride = stride
        self.channels = channels
        self.nonlinearity = nonlinearity
        self.sigma_mode = sigma_mode
        self.out_length = (n_in - kernel_width) // stride + 1
        if not 8 <= self.out_length < n_in:
            raise ValueError(
                f"latent length {self.out_length} must satisfy 8 <= L' < {n_in}; "
                f"adjust kernel_width={kernel_width} / stride={stride}"
            )
        bound = 1.0 / np.sqrt(kernel_width)
        self.conv_weight = dc.Parameter(rng.uniform(-bound, bound, (channels, 1, kernel_width)))
        self.conv_bias = dc.Parameter(rng.uniform(-bound, bound, (channels,)))
        if sigma_mode == "per_sample":
            b = 1.0 / np.sqrt(channels)
            self.sigma_weight = dc.Parameter(rng.uniform(-b, b, (channels, 1)))
            self.sigma_bias = dc.Parameter(np.zeros(1))
        else:
            self.sigma_logit = dc.Parameter(np.zeros(1))

    @property
    def grid(self):
        return np.linspace(*LATENT_DOMAIN, self.out_length)

    def __call__(self, X):
        """``X [B, n]`` -> latent ``[B, d, L']`` and ``sigma_e [B, 1]``."""
        X = X if isinstance(X, dc.Tensor) else dc.Tensor(X)
        if X.shape[-1] != self.n_in:
            raise dc.ShapeError(f"encoder expects spectra of length {self.n_in}, got {X.shape[-1]}")
        B = X.shape[0]
        z = dc.conv1d(dc.reshape(X, (B, 1, self.n_in)), self.conv_weight, self.stride, self.conv_bias)
        latent = dc.activation(self.nonlinearity)(z)
        if self.sigma_mode == "per_sample":
            pooled = dc.mean(latent, axis=2)
            sigma = dc.sigmoid(dc.add(dc.matmul(pooled, self.sigma_weight), self.sigma_bias))
        else:
            sigma = dc.sigmoid(dc.broadcast_to(self.sigma_logit, (B, 1)))
        return latent, sigma


class UrysohnKernel(dc.Module):
    """Feed-forward kernel ``G(u, sigma, w) -> R^C``.

    Inputs are multiplied by fixed gains before the first layer:
    ``latent_scale`` on ``u`` and ``coordinate_scale`` on ``(sigma, w)``. With
    a coordinate gain above one, first-layer biases are drawn so each hidden
    unit's transition sits at a uniform random location in [0, 1]; this lets
    the kernel resolve narrow features along ``w`` from the first step.
    """

    def __init__(self, latent_channels, n_classes, rng, hidden=(64, 64), nonlinearity="tanh",
                 latent_scale=1.0, coordinate_scale=1.0):
        self.in_dim = latent_channels + 2
        self.n_classes = n_classes
        self.gains = np.array([latent_scale] * latent_channels + [coordinate_scale] * 2)
        self.net = dc.MLP([self.in_dim, *hidden, n_classes], rng, nonlinearity)
        if coordinate_scale != 1.0:
            first = self.net.layers[0]
            centers = rng.uniform(0.0, 1.0, first.bias.shape)
            first.bias.data = -first.weight.data[-1] * coordinate_scale * centers

    def __call__(self, inputs):
        if inputs.shape[-1] != self.in_dim:
            raise dc.ShapeError(f"kernel expects {self.in_dim} input features, got {inputs.shape[-1]}")
        if np.any(self.gains != 1.0):
            inputs = dc.mul(inputs, self.gains)
        return self.net(inputs)


def apply_operator(latent, sigma, kernel, points, domain=LATENT_DOMAIN):
    """Logits ``T(u)(sigma)`` for a batch: latent ``[B, d, L']``, sigma ``[B, 1]``."""
    s = sigma.data
    if np.any(s < domain[0]) or np.any(s > domain[1]):
        raise ValueError(f"evaluation point outside {domain}")
    B, d, _ = latent.shape

    def integrand(w):
        P = w.size
        u = dc.transpose(interpolate(latent, w), (0, 2, 1))
        sig = dc.broadcast_to(dc.reshape(sigma, (B, 1, 1)), (B, P, 1))
        omega = dc.Tensor(np.broadcast_to(w[None, :, None], (B, P, 1)))
        x = dc.concat([u, sig, omega], axis=2)
        g = kernel(dc.reshape(x, (B * P, d + 2)))
        return dc.reshape(g, (B, P, kernel.n_classes))

    return mc_integrate(integrand, points, domain, axis=1)


class Classifier(dc.Module):
    """Shared prediction path for every differentiable classifier."""

    eval_chunk = 64

    def logits(self, X, training=False):
        raise NotImplementedError

    def predict_logits(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if len(X) == 0:
            return np.zeros((0, self.n_classes))
        with dc.no_grad():
            parts = [self.logits(X[i:i + self.eval_chunk]).data for i in range(0, len(X), self.eval_chunk)]
        return np.concatenate(parts)

    def predict(self, X) -> np.ndarray:
        # np.argmax returns the first maximum, i.e. the lowest class index on ties
        return np.argmax(self.predict_logits(X), axis=1)


class IntegralOperatorModel(Classifier):
    eval_chunk = 16

    def __init__(self, n_features, n_classes, config: OperatorConfig | None = None,
                 mc: MCConfig | None = None, seed=0):
        self.config = config or OperatorConfig()
        self.mc = mc or MCConfig()
        self.n_features = n_features
        self.n_classes = n_classes
        self.seed = seed
        rng = make_rng(seed, 11)
        c = self.config
        self.encoder = Encoder(n_features, rng, c.kernel_width, c.stride, c.latent_channels,
                               c.nonlinearity, c.sigma_mode)
        self.kernel = UrysohnKernel(c.latent_channels, n_classes, rng, c.hidden, c.nonlinearity,
                                    c.latent_scale, c.coordinate_scale)
        self.sampler = PointSampler(self.mc, make_rng(seed, self.mc.rng_seed, 12))

    def logits(self, X, training=False, points=None):
        if points is None:
            points = self.sampler.train_points() if training else self.sampler.eval_points()
        latent, sigma = self.encoder(X)
        return apply_operator(latent, sigma, self.kernel, points)

    def encode(self, spectrum: Spectrum) -> LatentFunction:
        with dc.no_grad():
            latent, sigma = self.encoder(spectrum.intensities[None, :])
        return LatentFunction(self.encoder.grid, latent.data[0].T.copy(), float(sigma.data[0, 0]))


MODEL_FORMAT = "intop-model/1"


def save_checkpoint(path, model: IntegralOperatorModel, normalization=None, extra=None):
    """Write model architecture, MC settings, normalization metadata and parameters as JSON."""
    blob = {
        "format": MODEL_FORMAT,
        "kind": "integral_operator",
        "n_features": model.n_features,
        "n_classes": model.n_classes,
        "seed": model.seed,
        "operator": asdict(model.config),
        "mc": asdict(model.mc),
        "normalization": normalization or {},
        "extra": extra or {},
        "params": dc.arrays_to_json(model.state_dict()),
    }
    Path(path).write_text(json.dumps(blob, indent=1, sort_keys=True) + "\n")


def load_checkpoint(path):
    """Returns ``(model, blob)``; ``blob`` carries normalization and extra metadata."""
    blob = json.loads(Path(path).read_text())
    if blob.get("format") != MODEL_FORMAT:
        raise ValueError(f"{path}: not an {MODEL_FORMAT} checkpoint")
    mc = blob["mc"]
    model = IntegralOperatorModel(
        blob["n_features"], blob["n_classes"], OperatorConfig(**blob["operator"]),
        MCConfig(**mc), seed=blob["seed"],
    )
    model.load_state_dict(dc.arrays_from_json(blob["params"]))
    return model, blob
