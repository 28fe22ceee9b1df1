"""(mu + lambda) evolutionary diversity optimization over scaled feature vectors.

Survivor selection comes in three flavours:

``"D"``
    remove the individual whose removal leaves the lowest star discrepancy;
``"C"``
    remove the individual with the smallest weighted contribution;
``"T"``
    as ``"D"``, breaking discrepancy ties by weighted contribution.

Remaining ties always go to the lowest population index so runs are
reproducible.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Protocol, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ._validation import as_generator
from .discrepancy import MAX_EXACT_DIM, TIE_TOL, min_removal_scan, star_discrepancy

logger = logging.getLogger(__name__)

MODES = ("D", "C", "T")


class InitializationError(RuntimeError):
    """A domain could not produce enough gate-passing individuals."""


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    f_min: float
    f_max: float
    weight: float = 1.0

    def __post_init__(self):
        if not np.isfinite(self.f_min) or not np.isfinite(self.f_max):
            raise ValueError(f"feature {self.name!r}: bounds must be finite")
        if not self.f_min < self.f_max:
            raise ValueError(
                f"feature {self.name!r}: f_min ({self.f_min}) must be < f_max ({self.f_max})"
            )
        if not self.weight >= 0:
            raise ValueError(f"feature {self.name!r}: weight must be >= 0")


@dataclass
class Individual:
    genotype: Any
    raw_features: np.ndarray
    scaled_features: np.ndarray
    quality: float


@dataclass
class GenerationTrace:
    generation: int
    discrepancy: float
    accepted: bool
    feature_min: np.ndarray
    feature_max: np.ndarray
    quality_min: float = float("nan")
    quality_max: float = float("nan")
    domain_state: dict = field(default_factory=dict)


class Domain(Protocol):
    """What the optimizer needs from a problem domain."""

    name: str
    feature_names: tuple[str, ...]

    def start_run(self) -> None: ...

    def initialize(self, rng: np.random.Generator) -> tuple[Any, float]: ...

    def mutate(self, genotype: Any, rng: np.random.Generator) -> Any: ...

    def quality(self, genotype: Any, rng: np.random.Generator) -> float: ...

    def accepts(self, quality: float) -> bool: ...

    def features(self, genotype: Any) -> np.ndarray: ...

    def adapt(self, success: bool) -> None: ...

    def state(self) -> dict: ...


class FeatureScaler(TransformerMixin, BaseEstimator):
    """Affine map of raw features onto [0, 1] with clamping.

    Parameters
    ----------
    f_min, f_max : array-like of shape (n_features,)
        Expected range of each feature. Values outside are clamped.
    """

    def __init__(self, f_min=None, f_max=None):
        self.f_min = f_min
        self.f_max = f_max

    @classmethod
    def from_specs(cls, specs: Sequence[FeatureSpec]) -> "FeatureScaler":
        return cls([s.f_min for s in specs], [s.f_max for s in specs]).fit()

    def fit(self, X=None, y=None):
        lo = np.asarray(self.f_min, dtype=float).ravel()
        hi = np.asarray(self.f_max, dtype=float).ravel()
        if lo.shape != hi.shape or lo.size == 0:
            raise ValueError("f_min and f_max must be non-empty and the same length")
        if np.any(lo >= hi):
            bad = int(np.flatnonzero(lo >= hi)[0])
            raise ValueError(f"feature {bad}: f_min must be < f_max")
        if X is not None:
            X = check_array(X)
            if X.shape[1] != lo.size:
                raise ValueError(f"X has {X.shape[1]} features, ranges cover {lo.size}")
        self.f_min_ = lo
        self.f_max_ = hi
        self.n_features_in_ = lo.size
        return self

    def transform(self, X):
        check_is_fitted(self)
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return np.clip((X - self.f_min_) / (self.f_max_ - self.f_min_), 0.0, 1.0)


def scale_features(raw, specs: Sequence[FeatureSpec]) -> np.ndarray:
    raw = np.asarray(raw, dtype=float).ravel()
    if raw.size != len(specs):
        raise ValueError(f"{raw.size} feature values for {len(specs)} specs")
    return FeatureScaler.from_specs(specs).transform(raw[None, :])[0]


def _gap_product(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="stable")
    v = values[order]
    k = v.size
    out = np.zeros(k)
    if k > 2:
        out[1:-1] = (v[1:-1] - v[:-2]) * (v[2:] - v[1:-1])
    result = np.empty(k)
    result[order] = out
    # extreme groups: the lowest-index holder is always kept, other copies are worthless
    for extreme in (v[0], v[-1]):
        group = order[v == extreme]
        result[group] = 0.0
        result[group.min()] = np.inf
    return result


def _gap_sum(values: np.ndarray) -> np.ndarray:
    # crowding-distance style alternative: distance between the two neighbours
    order = np.argsort(values, kind="stable")
    v = values[order]
    k = v.size
    out = np.zeros(k)
    if k > 2:
        out[1:-1] = v[2:] - v[:-2]
    result = np.empty(k)
    result[order] = out
    for extreme in (v[0], v[-1]):
        group = order[v == extreme]
        result[group] = 0.0
        result[group.min()] = np.inf
    return result


CONTRIBUTIONS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "gap_product": _gap_product,
    "gap_sum": _gap_sum,
}


def weighted_contributions(points, weights, contribution: str = "gap_product") -> np.ndarray:
    """Weighted diversity contribution of every member of a scaled point set."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise ValueError("weighted contribution needs a (k, d) array with k >= 2")
    w = np.asarray(weights, dtype=float).ravel()
    if w.size != pts.shape[1]:
        raise ValueError(f"{w.size} weights for {pts.shape[1]} features")
    per_feature = CONTRIBUTIONS[contribution]
    total = np.zeros(pts.shape[0])
    for i in range(pts.shape[1]):
        if w[i] == 0:
            continue
        total += w[i] * per_feature(pts[:, i])
    return total


def weighted_contribution(index: int, points, weights, contribution: str = "gap_product") -> float:
    return float(weighted_contributions(points, weights, contribution)[index])


def contribution_diversity(points, weights, contribution: str = "gap_product") -> float:
    """Population-level diversity: the sum of the finite contributions."""
    c = weighted_contributions(points, weights, contribution)
    return float(c[np.isfinite(c)].sum())


def removal_index(points, mode: str, weights, contribution: str = "gap_product",
                  one_sided: bool = False) -> int:
    """Index of the member that survivor selection removes next."""
    if mode == "C":
        c = weighted_contributions(points, weights, contribution)
        return int(np.argmin(c))
    tied, _ = min_removal_scan(points, tol=TIE_TOL, one_sided=one_sided)
    if mode == "D" or len(tied) == 1:
        return tied[0]
    if mode != "T":
        raise ValueError(f"unknown selection mode {mode!r}")
    c = weighted_contributions(points, weights, contribution)
    return tied[int(np.argmin(c[tied]))]


def survivor_selection(population: list[Individual], mu: int, mode: str, weights,
                       contribution: str = "gap_product", one_sided: bool = False
                       ) -> list[Individual]:
    pop = list(population)
    while len(pop) > mu:
        points = np.array([ind.scaled_features for ind in pop])
        del pop[removal_index(points, mode, weights, contribution, one_sided)]
    return pop


def make_individual(genotype, quality: float, domain: Domain, specs: Sequence[FeatureSpec]) -> Individual:
    raw = np.asarray(domain.features(genotype), dtype=float)
    return Individual(genotype, raw, scale_features(raw, specs), float(quality))


def population_points(population: Sequence[Individual]) -> np.ndarray:
    return np.array([ind.scaled_features for ind in population])


def _progress_measure(points, mode, weights, contribution, one_sided):
    if mode == "C":
        return contribution_diversity(points, weights, contribution)
    return star_discrepancy(points, one_sided=one_sided)


def ea_generation(population: list[Individual], domain: Domain, specs: Sequence[FeatureSpec],
                  mode: str, rng: np.random.Generator, generation: int = 0, lam: int = 1,
                  contribution: str = "gap_product", one_sided: bool = False):
    """One generation: mutate ``lam`` random parents, gate, select, adapt."""
    mu = len(population)
    weights = [s.weight for s in specs]
    before = _progress_measure(population_points(population), mode, weights, contribution, one_sided)
    parents = rng.integers(0, mu, size=lam)
    pool = list(population)
    accepted = False
    for p in parents:
        child = domain.mutate(population[p].genotype, rng)
        q = domain.quality(child, rng)
        if domain.accepts(q):
            pool.append(make_individual(child, q, domain, specs))
            accepted = True
    if accepted:
        survivors = survivor_selection(pool, mu, mode, weights, contribution, one_sided)
        points = population_points(survivors)
        after = _progress_measure(points, mode, weights, contribution, one_sided)
        success = after > before if mode == "C" else after < before
        disc = star_discrepancy(points, one_sided=one_sided)
    else:
        survivors = pool
        success = False
        points = population_points(survivors)
        disc = star_discrepancy(points, one_sided=one_sided)
    domain.adapt(success)
    raw = np.array([ind.raw_features for ind in survivors])
    quality = [ind.quality for ind in survivors]
    trace = GenerationTrace(generation, disc, accepted, raw.min(axis=0), raw.max(axis=0),
                            min(quality), max(quality), dict(domain.state()))
    return survivors, trace


def initial_population(domain: Domain, specs: Sequence[FeatureSpec], mu: int,
                       rng: np.random.Generator) -> list[Individual]:
    pop = []
    for _ in range(mu):
        genotype, q = domain.initialize(rng)
        if not domain.accepts(q):
            raise InitializationError(f"{domain.name}: initializer returned a gate-failing individual")
        pop.append(make_individual(genotype, q, domain, specs))
    return pop


def _check_run_args(domain, specs, mu, lam, generations, mode):
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if mu < 2:
        raise ValueError("mu must be >= 2")
    if lam < 1:
        raise ValueError("lam must be >= 1")
    if generations < 1:
        raise ValueError("generations must be >= 1")
    if not 1 <= len(specs) <= MAX_EXACT_DIM:
        raise ValueError(f"exact discrepancy supports 1 <= d <= {MAX_EXACT_DIM} features")
    names = tuple(s.name for s in specs)
    if names != tuple(domain.feature_names):
        raise ValueError(f"feature specs {names} do not match domain features {domain.feature_names}")


def run_ea(domain: Domain, specs: Sequence[FeatureSpec], mu: int, generations: int, mode: str,
           rng: np.random.Generator, lam: int = 1, population: list[Individual] | None = None,
           contribution: str = "gap_product", one_sided: bool = False):
    """Run ``generations`` generations; returns ``(population, traces)``."""
    _check_run_args(domain, specs, mu, lam, generations, mode)
    if population is None:
        domain.start_run()
        population = initial_population(domain, specs, mu, rng)
    elif len(population) != mu:
        raise ValueError(f"initial population has {len(population)} members, expected {mu}")
    traces = []
    for g in range(1, generations + 1):
        population, tr = ea_generation(population, domain, specs, mode, rng, g, lam,
                                       contribution, one_sided)
        traces.append(tr)
    return population, traces


class DiversityOptimizer(BaseEstimator):
    """Evolve a gate-passing population with low feature-space discrepancy.

    Parameters
    ----------
    mu : int, default=20
        Population size.
    lam : int, default=1
        Offspring per generation.
    generations : int, default=2000
    mode : {"D", "C", "T"}, default="D"
        Survivor selection variant.
    feature_specs : sequence of FeatureSpec
        Ranges and weights, in the order of ``domain.feature_names``.
    contribution : {"gap_product", "gap_sum"}, default="gap_product"
        Per-feature contribution used by modes C and T.
    one_sided : bool, default=False
        Use the literal one-sided discrepancy.
    random_state : int, Generator or None

    Attributes
    ----------
    population_ : list of Individual
    trace_ : list of GenerationTrace
    initial_discrepancy_ : float
    discrepancy_ : float
    """

    def __init__(self, mu=20, lam=1, generations=2000, mode="D", feature_specs=None,
                 contribution="gap_product", one_sided=False, random_state=None):
        self.mu = mu
        self.lam = lam
        self.generations = generations
        self.mode = mode
        self.feature_specs = feature_specs
        self.contribution = contribution
        self.one_sided = one_sided
        self.random_state = random_state

    def fit(self, domain: Domain, y=None):
        if self.feature_specs is None:
            raise ValueError("feature_specs is required")
        if self.contribution not in CONTRIBUTIONS:
            raise ValueError(f"unknown contribution {self.contribution!r}")
        specs = list(self.feature_specs)
        _check_run_args(domain, specs, self.mu, self.lam, self.generations, self.mode)
        rng = as_generator(self.random_state)
        domain.start_run()
        pop = initial_population(domain, specs, self.mu, rng)
        self.initial_population_ = list(pop)
        self.initial_discrepancy_ = star_discrepancy(population_points(pop), one_sided=self.one_sided)
        pop, traces = run_ea(domain, specs, self.mu, self.generations, self.mode, rng,
                             lam=self.lam, population=pop, contribution=self.contribution,
                             one_sided=self.one_sided)
        self.population_ = pop
        self.trace_ = traces
        self.discrepancy_ = traces[-1].discrepancy
        self.n_features_in_ = len(specs)
        logger.debug("mode %s: discrepancy %.4f -> %.4f", self.mode,
                     self.initial_discrepancy_, self.discrepancy_)
        return self

    @property
    def scaled_features_(self) -> np.ndarray:
        check_is_fitted(self)
        return population_points(self.population_)
