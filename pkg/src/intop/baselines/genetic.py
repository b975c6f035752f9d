"""Genetic-algorithm hyperparameter search for the tree and SVM baselines."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..quadrature import make_rng
from .svm import fit_svm
from .tree import fit_tree

# gene name -> (kind, low, high), bounds inclusive
SEARCH_SPACES = {
    "tree": {"max_depth": ("int", 1, 20), "min_samples_leaf": ("int", 1, 10)},
    "svm": {"log10_lambda": ("float", -6.0, 2.0)},
}


@dataclass
class GAConfig:
    population: int = 20
    generations: int = 15
    tournament: int = 3
    mutation_rate: float = 0.2
    crossover_rate: float = 0.7
    svm_epochs: int = 300
    spaces: dict = field(default_factory=lambda: {k: dict(v) for k, v in SEARCH_SPACES.items()})

    def __post_init__(self):
        if self.population < 2:
            raise ValueError("population must hold at least two individuals")
        if self.generations < 1 or self.tournament < 1:
            raise ValueError("generations and tournament size must be positive")
        for rate in (self.mutation_rate, self.crossover_rate):
            if not 0.0 <= rate <= 1.0:
                raise ValueError(f"rates must lie in [0, 1], got {rate}")
        try:
            self.spaces = {k: {g: tuple(b) for g, b in v.items()} for k, v in self.spaces.items()}
        except (AttributeError, TypeError):
            raise ValueError("spaces must map family -> gene -> (kind, low, high)") from None
        for family, genes in self.spaces.items():
            for g, b in genes.items():
                if len(b) != 3 or b[0] not in ("int", "float") or b[1] > b[2]:
                    raise ValueError(f"bad bounds for {family}.{g}: {b}")


def _draw_gene(bounds, rng):
    kind, lo, hi = bounds
    if kind == "int":
        return int(rng.integers(lo, hi + 1))
    return float(lo + (hi - lo) * rng.random())


def build_model(family, params, X, y, n_classes, config: GAConfig):
    if family == "tree":
        return fit_tree(X, y, params["max_depth"], params["min_samples_leaf"], n_classes)
    if family == "svm":
        return fit_svm(X, y, 10.0 ** params["log10_lambda"], config.svm_epochs, n_classes)
    raise ValueError(f"unknown model family {family!r}")


def ga_tune(family, X_train, y_train, X_val, y_val, n_classes=None, config: GAConfig | None = None,
            seed=0, fitness=None):
    """Search hyperparameters maximising validation accuracy.

    Tournament selection, uniform crossover, per-gene resampling mutation and
    one elite carried over per generation. ``generations`` counts the initial
    population. Returns ``(best_params, best_fitness, history)`` where
    ``history`` lists the best fitness after each generation.
    """
    config = config or GAConfig()
    space = config.spaces[family]
    genes = list(space)
    rng = make_rng(seed, 51)
    cache = {}

    def score(genome):
        key = tuple(genome)
        if key not in cache:
            params = dict(zip(genes, genome))
            if fitness is not None:
                cache[key] = float(fitness(params))
            else:
                model = build_model(family, params, X_train, y_train, n_classes, config)
                cache[key] = float(np.mean(model.predict(X_val) == y_val))
        return cache[key]

    population = [[_draw_gene(space[g], rng) for g in genes] for _ in range(config.population)]
    fits = [score(ind) for ind in population]
    best_i = int(np.argmax(fits))
    best, best_fit = list(population[best_i]), fits[best_i]
    history = [best_fit]

    def pick():
        entrants = rng.choice(len(population), size=min(config.tournament, len(population)), replace=False)
        winner = min(entrants, key=lambda i: (-fits[i], i))
        return population[winner]

    for _ in range(1, config.generations):
        children = [list(best)]
        while len(children) < config.population:
            a, b = pick(), pick()
            if rng.random() < config.crossover_rate:
                child = [a[k] if rng.random() < 0.5 else b[k] for k in range(len(genes))]
            else:
                child = list(a)
            for k, g in enumerate(genes):
                if rng.random() < config.mutation_rate:
                    child[k] = _draw_gene(space[g], rng)
            children.append(child)
        population = children
        fits = [score(ind) for ind in population]
        i = int(np.argmax(fits))
        if fits[i] > best_fit:
            best, best_fit = list(population[i]), fits[i]
        history.append(best_fit)
    return dict(zip(genes, best)), best_fit, history
