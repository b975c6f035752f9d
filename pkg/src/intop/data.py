"""Datasets, CSV ingestion, the 90/10 split protocol and synthetic spectra.

CSV layout: a header row ``label,w1,w2,...,wn`` with strictly ascending
numeric wavelengths, then one row per spectrum: class name followed by ``n``
intensities. Class names are mapped to indices in order of first appearance.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .operator import Spectrum, minmax_rows
from .quadrature import make_rng


class DataError(ValueError):
    pass


@dataclass
class Dataset:
    name: str
    wavelengths: np.ndarray
    X: np.ndarray
    y: np.ndarray
    class_names: list
    outliers: np.ndarray | None = None

    def __post_init__(self):
        self.wavelengths = np.asarray(self.wavelengths, dtype=np.float64)
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        self.class_names = list(self.class_names)
        if self.X.ndim != 2 or self.X.shape[1] != self.wavelengths.size:
            raise DataError(f"intensity matrix {self.X.shape} does not match grid of {self.wavelengths.size}")
        if self.y.shape != (self.X.shape[0],):
            raise DataError(f"{self.y.size} labels for {self.X.shape[0]} spectra")
        if self.y.size and (self.y.min() < 0 or self.y.max() >= len(self.class_names)):
            raise DataError("label outside the class list")
        if np.any(np.diff(self.wavelengths) <= 0):
            raise DataError("wavelength grid must be strictly increasing")
        if self.y.size < len(self.class_names):
            raise DataError(f"{self.y.size} spectra cannot cover {len(self.class_names)} classes")

    def __len__(self):
        return len(self.y)

    @property
    def n_classes(self):
        return len(self.class_names)

    @property
    def spectra(self):
        return [Spectrum(self.wavelengths, x, int(l)) for x, l in zip(self.X, self.y)]

    def normalized(self):
        """Per-spectrum min-max intensities, wavelength axis mapped to [0, 1]."""
        X, _ = minmax_rows(self.X)
        w = self.wavelengths
        return Dataset(self.name, (w - w[0]) / (w[-1] - w[0]), X, self.y, self.class_names)

    def normalization_metadata(self):
        return {
            "wavelength_min": float(self.wavelengths[0]),
            "wavelength_max": float(self.wavelengths[-1]),
            "n_points": int(self.wavelengths.size),
            "intensity": "per-spectrum min-max",
        }

    def subset(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.name, self.wavelengths, self.X[idx], self.y[idx], self.class_names)


def load_csv(path) -> Dataset:
    path = Path(path)
    with open(path, newline="") as fh:
        rows = csv.reader(fh)
        try:
            header = next(rows)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if len(header) < 3:
            raise DataError(f"{path}:1: header needs a label column and at least two wavelengths")
        try:
            grid = np.array([float(v) for v in header[1:]])
        except ValueError as e:
            raise DataError(f"{path}:1: unparseable wavelength ({e})") from None
        if np.any(np.diff(grid) <= 0):
            raise DataError(f"{path}:1: wavelengths are not strictly ascending")
        names, labels, values = {}, [], []
        for lineno, row in enumerate(rows, start=2):
            if not row:
                continue
            if len(row) != grid.size + 1:
                raise DataError(f"{path}:{lineno}: expected {grid.size + 1} fields, found {len(row)}")
            try:
                values.append([float(v) for v in row[1:]])
            except ValueError as e:
                raise DataError(f"{path}:{lineno}: {e}") from None
            labels.append(names.setdefault(row[0], len(names)))
    if not values:
        raise DataError(f"{path}: no spectra")
    return Dataset(path.stem, grid, np.array(values), np.array(labels), list(names))


def save_csv(dataset: Dataset, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label", *(repr(float(v)) for v in dataset.wavelengths)])
        for x, label in zip(dataset.X, dataset.y):
            w.writerow([dataset.class_names[label], *(repr(float(v)) for v in x)])


@dataclass
class SplitPlan:
    seed: int
    permutation: np.ndarray
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    @property
    def train_full(self):
        """Training portion including validation (the first 90%)."""
        return np.concatenate([self.train, self.val])


def make_split(n: int, seed: int) -> SplitPlan:
    """Seeded permutation; first ceil(0.9 n) train (last ninth of it held out
    for validation), remainder test."""
    if n < 10:
        raise DataError(f"need at least 10 spectra for a 90/10 split, got {n}")
    perm = make_rng(seed, 31).permutation(n)
    n_train = -(-9 * n // 10)
    n_val = n_train // 9
    return SplitPlan(
        seed=seed,
        permutation=perm,
        train=perm[: n_train - n_val],
        val=perm[n_train - n_val: n_train],
        test=perm[n_train:],
    )


@dataclass
class SynthSpec:
    """Per-class Gaussian peak templates plus noise.

    ``classes[c]`` is a list of ``(center, width, amplitude)`` with centers in
    [0, 1]. The jitter fields add per-sample variation: relative amplitude
    spread, absolute peak-center spread, and a random linear baseline.
    """

    classes: list
    grid_length: int = 256
    noise: float = 0.05
    samples_per_class: object = 40
    seed: int = 0
    outlier_fraction: float = 0.0
    outlier_shift: float = 0.15
    amplitude_jitter: float = 0.0
    center_jitter: float = 0.0
    baseline_jitter: float = 0.0
    wavelength_range: tuple = (0.0, 1.0)
    name: str = "synthetic"
    class_names: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.classes) < 2:
            raise DataError("synthetic spectra need at least two classes")
        for peaks in self.classes:
            for center, width, _ in peaks:
                if not 0.0 <= center <= 1.0:
                    raise DataError(f"peak center {center} outside [0, 1]")
                if width <= 0:
                    raise DataError(f"peak width must be positive, got {width}")
        if self.noise < 0:
            raise DataError("noise level must be non-negative")
        if not 0.0 <= self.outlier_fraction <= 1.0:
            raise DataError("outlier fraction must lie in [0, 1]")

    def counts(self):
        if isinstance(self.samples_per_class, int):
            return [self.samples_per_class] * len(self.classes)
        counts = list(self.samples_per_class)
        if len(counts) != len(self.classes):
            raise DataError("samples_per_class must give one count per class")
        return counts


def _peaks(grid, peaks):
    out = np.zeros_like(grid)
    for center, width, amp in peaks:
        out += amp * np.exp(-0.5 * ((grid - center) / width) ** 2)
    return out


def generate_synthetic(spec: SynthSpec) -> Dataset:
    rng = make_rng(spec.seed, 41)
    grid = np.linspace(0.0, 1.0, spec.grid_length)
    labels = np.concatenate([np.full(n, c) for c, n in enumerate(spec.counts())])
    N = labels.size
    n_out = int(round(spec.outlier_fraction * N))
    outliers = set(rng.choice(N, size=n_out, replace=False).tolist()) if n_out else set()
    X = np.empty((N, grid.size))
    for i, c in enumerate(labels):
        peaks = [list(p) for p in spec.classes[c]]
        for p in peaks:
            if spec.center_jitter:
                p[0] += spec.center_jitter * rng.standard_normal()
            if spec.amplitude_jitter:
                p[2] *= 1.0 + spec.amplitude_jitter * rng.standard_normal()
        if i in outliers:
            peaks[rng.integers(len(peaks))][0] += spec.outlier_shift
        x = _peaks(grid, peaks)
        if spec.baseline_jitter:
            x += spec.baseline_jitter * (rng.standard_normal() + rng.standard_normal() * grid)
        if spec.noise:
            x += spec.noise * rng.standard_normal(grid.size)
        X[i] = x
    names = spec.class_names or [f"class_{c}" for c in range(len(spec.classes))]
    wavelengths = np.linspace(*spec.wavelength_range, spec.grid_length)
    return Dataset(spec.name, wavelengths, X, labels, names,
                   outliers=np.array(sorted(outliers), dtype=np.int64))


def _split_count(total, k):
    base = total // k
    return [base + (1 if c < total - base * k else 0) for c in range(k)]


PRESETS = {
    "synth-meat": lambda: SynthSpec(
        name="synth-meat",
        classes=[
            [(0.20, 0.06, 1.0), (0.45, 0.08, 0.70), (0.75, 0.05, 0.50)],
            [(0.22, 0.06, 1.0), (0.50, 0.08, 0.70), (0.72, 0.05, 0.55)],
            [(0.18, 0.06, 1.0), (0.47, 0.08, 0.65), (0.78, 0.05, 0.50)],
        ],
        grid_length=256,
        noise=0.05,
        samples_per_class=40,
        outlier_fraction=0.1,
        wavelength_range=(850.0, 1050.0),
        class_names=["beef", "pork", "chicken"],
    ),
    "synth-fruit": lambda: SynthSpec(
        name="synth-fruit",
        classes=[
            [(0.25, 0.05, 1.0), (0.55, 0.10, 0.6), (0.80, 0.04, 0.4)],
            [(0.25, 0.05, 1.0), (0.55, 0.10, 0.6), (0.80, 0.04, 0.4), (0.40, 0.03, 0.15)],
        ],
        grid_length=235,
        noise=0.03,
        samples_per_class=[351, 632],
        outlier_fraction=0.05,
        wavelength_range=(899.0, 1802.0),
        class_names=["strawberry", "adulterated"],
    ),
    "synth-textile": lambda: SynthSpec(
        name="synth-textile",
        classes=[
            [(0.15, 0.04, 0.8), (0.42, 0.06, 1.0), (0.70, 0.05, 0.5)],
            [(0.15, 0.04, 0.8), (0.46, 0.06, 1.0), (0.70, 0.05, 0.6)],
            [(0.12, 0.04, 0.8), (0.42, 0.06, 0.9), (0.74, 0.05, 0.5)],
        ],
        grid_length=2800,
        noise=0.05,
        samples_per_class=_split_count(221, 3),
        outlier_fraction=0.05,
        wavelength_range=(1100.0, 2500.0),
        class_names=["cotton", "polyester", "blend"],
    ),
}


def preset(name: str) -> SynthSpec:
    try:
        return PRESETS[name]()
    except KeyError:
        raise DataError(f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}") from None


def dataset_fingerprint_bytes(ds: Dataset) -> bytes:
    return b"".join([ds.wavelengths.tobytes(), ds.X.tobytes(), ds.y.tobytes(),
                     "\x1f".join(ds.class_names).encode()])


def synth_spec_from_dict(d: dict) -> SynthSpec:
    known = set(SynthSpec.__dataclass_fields__)
    unknown = set(d) - known
    if unknown:
        raise DataError(f"unknown SynthSpec keys: {sorted(unknown)}")
    d = dict(d)
    d["classes"] = [[tuple(p) for p in peaks] for peaks in d["classes"]]
    if "wavelength_range" in d:
        d["wavelength_range"] = tuple(d["wavelength_range"])
    return SynthSpec(**d)
