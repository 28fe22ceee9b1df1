"""Euclidean TSP instances as genotypes: hardness gate, mutation and features."""

from __future__ import annotations

import logging
import os
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from . import _tsp_kernels
from ._validation import check_instance
from .diversity import FeatureSpec, InitializationError

logger = logging.getLogger(__name__)

MAX_EXACT_CITIES = 18
HEURISTIC_RUNS = 3
DEFAULT_ALPHA = 1.18

# (f_min, f_max) used to scale each feature; mst_depth_mean has no published range
DEFAULT_RANGES = {
    "angle_mean": (0.8, 2.8),
    "centroid_mean_dist": (0.24, 0.6),
    "nnds_mean": (0.1, 0.7),
    "mst_dists_mean": (0.06, 0.15),
    "mst_depth_mean": (1.0, 6.0),
}


class UnsupportedSizeError(ValueError):
    pass


class DegenerateInstanceError(ValueError):
    pass


def distance_matrix(cities) -> np.ndarray:
    c = np.asarray(cities, dtype=float)
    diff = c[:, None, :] - c[None, :, :]
    return np.sqrt((diff**2).sum(axis=-1))


def _check_tour(tour, n) -> np.ndarray:
    t = np.asarray(tour, dtype=np.int64)
    if t.shape != (n,) or not np.array_equal(np.sort(t), np.arange(n)):
        raise ValueError(f"tour is not a permutation of 0..{n - 1}")
    return t


def tour_length(cities, tour) -> float:
    c = check_instance(cities)
    t = _check_tour(tour, len(c))
    return float(_tsp_kernels.cycle_length(distance_matrix(c), t))


def two_opt(cities, start, rng: np.random.Generator) -> np.ndarray:
    """2-opt local search from ``start`` using a random scan order."""
    c = check_instance(cities)
    t = _check_tour(start, len(c)).copy()
    order = rng.permutation(len(c)).astype(np.int64)
    return _tsp_kernels.two_opt_inplace(distance_matrix(c), t, order)


def has_improving_move(cities, tour, tol: float = _tsp_kernels.IMPROVE_TOL) -> bool:
    """Exhaustive check for a 2-opt exchange that shortens ``tour`` by more than ``tol``."""
    c = check_instance(cities)
    t = _check_tour(tour, len(c))
    n = len(t)
    d = distance_matrix(c)
    for i in range(n):
        for j in range(i + 2, n):
            if i == 0 and j == n - 1:
                continue
            a, b, x, e = t[i], t[i + 1], t[j], t[(j + 1) % n]
            if d[a, x] + d[b, e] - d[a, b] - d[x, e] < -tol:
                return True
    return False


def _run_lengths(d, rng, runs=HEURISTIC_RUNS) -> list[float]:
    n = d.shape[0]
    lengths = []
    for _ in range(runs):
        start = rng.permutation(n).astype(np.int64)
        order = rng.permutation(n).astype(np.int64)
        t = _tsp_kernels.two_opt_inplace(d, start, order)
        lengths.append(float(_tsp_kernels.cycle_length(d, t)))
    return lengths


def heuristic_value(cities, rng: np.random.Generator) -> float:
    """Best tour length over three 2-opt runs from random start tours."""
    c = check_instance(cities)
    return min(_run_lengths(distance_matrix(c), rng))


def exact_opt(cities, upper_bound: float | None = None) -> float:
    """Optimal tour length by Held-Karp.

    ``upper_bound``, when given, must be the length of an actual tour; it only
    prunes the search and never changes the result.
    """
    c = check_instance(cities)
    n = len(c)
    if n > MAX_EXACT_CITIES:
        raise UnsupportedSizeError(
            f"exact solver handles at most {MAX_EXACT_CITIES} cities, got {n}; "
            "configure smaller instances"
        )
    if n == 1:
        return 0.0
    d = distance_matrix(c)
    ub = np.inf if upper_bound is None else float(upper_bound)
    return float(_tsp_kernels.held_karp(d, ub))


def _ratio_pair(cities, rng) -> tuple[float, float]:
    # (best-of-runs ratio, mean-of-runs ratio); the mean only breaks hill-climb ties
    d = distance_matrix(cities)
    lengths = _run_lengths(d, rng)
    h = min(lengths)
    opt = exact_opt(cities, upper_bound=h)
    if opt <= 0.0:
        raise DegenerateInstanceError("optimal tour length is zero (all cities coincide)")
    return h / opt, float(np.mean(lengths)) / opt


def approximation_ratio(cities, rng: np.random.Generator) -> float:
    """Best-of-three 2-opt length divided by the optimal length."""
    return _ratio_pair(check_instance(cities), rng)[0]


def mutate_instance(cities, sigma: float, rng: np.random.Generator, p_m: float | None = None,
                    max_retries: int = 100) -> np.ndarray:
    """Gaussian perturbation of a random subset of cities, kept inside the unit square."""
    c = check_instance(cities)
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    n = len(c)
    p_m = 3.0 / n if p_m is None else p_m
    out = c.copy()
    for i in np.flatnonzero(rng.random(n) < p_m):
        for _ in range(max_retries):
            cand = c[i] + rng.normal(0.0, sigma, size=2)
            if np.all((cand >= 0.0) & (cand <= 1.0)):
                break
        out[i] = np.clip(cand, 0.0, 1.0)
    return out


def mst(cities) -> list[tuple[int, int, float]]:
    """Prim's minimum spanning tree rooted at city 0, as (parent, child, weight) edges.

    Edges are listed in the order the tree grows; ties pick the lowest index.
    """
    c = check_instance(cities)
    n = len(c)
    d = distance_matrix(c)
    in_tree = np.zeros(n, dtype=bool)
    in_tree[0] = True
    best = d[0].copy()
    parent = np.zeros(n, dtype=np.int64)
    edges = []
    for _ in range(n - 1):
        cand = np.where(in_tree, np.inf, best)
        v = int(np.argmin(cand))
        edges.append((int(parent[v]), v, float(d[parent[v], v])))
        in_tree[v] = True
        closer = ~in_tree & (d[v] < best)
        best[closer] = d[v][closer]
        parent[closer] = v
    return edges


def _nearest_two(d, i):
    row = d[i].copy()
    row[i] = np.inf
    order = np.argsort(row, kind="stable")
    return order[0], order[1]


def feature_angle_mean(cities) -> float:
    c = check_instance(cities, min_cities=3)
    d = distance_matrix(c)
    angles = np.empty(len(c))
    degenerate = 0
    for i in range(len(c)):
        a, b = _nearest_two(d, i)
        u, v = c[a] - c[i], c[b] - c[i]
        nu, nv = np.hypot(*u), np.hypot(*v)
        if nu == 0.0 or nv == 0.0:
            angles[i] = 0.0
            degenerate += 1
            continue
        angles[i] = np.arccos(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))
    if degenerate:
        logger.debug("angle_mean: %d cities coincide with a nearest neighbour", degenerate)
    return float(angles.mean())


def feature_centroid_mean_dist(cities) -> float:
    c = check_instance(cities)
    return float(np.hypot(*(c - c.mean(axis=0)).T).mean())


def feature_nnds_mean(cities) -> float:
    c = check_instance(cities, min_cities=2)
    d = distance_matrix(c)
    np.fill_diagonal(d, np.inf)
    return float(d.min(axis=1).mean())


def feature_mst_dists_mean(cities) -> float:
    c = check_instance(cities, min_cities=2)
    return float(np.mean([w for _, _, w in mst(c)]))


def feature_mst_depth_mean(cities) -> float:
    c = check_instance(cities)
    depth = np.zeros(len(c))
    # Prim adds each child after its parent, so one pass settles every depth
    for parent, child, _ in mst(c):
        depth[child] = depth[parent] + 1
    return float(depth.mean())


FEATURES = {
    "angle_mean": feature_angle_mean,
    "centroid_mean_dist": feature_centroid_mean_dist,
    "nnds_mean": feature_nnds_mean,
    "mst_dists_mean": feature_mst_dists_mean,
    "mst_depth_mean": feature_mst_depth_mean,
}


def default_specs(names: Sequence[str]) -> list[FeatureSpec]:
    return [FeatureSpec(name, *DEFAULT_RANGES[name]) for name in names]


class TspFeatureExtractor(TransformerMixin, BaseEstimator):
    """Map a sequence of instances to a (n_instances, n_features) matrix."""

    def __init__(self, features=("angle_mean", "mst_dists_mean")):
        self.features = features

    def fit(self, X=None, y=None):
        unknown = [f for f in self.features if f not in FEATURES]
        if unknown:
            raise ValueError(f"unknown TSP features: {unknown}")
        self.n_features_out_ = len(self.features)
        return self

    def transform(self, X):
        return np.array([[FEATURES[f](inst) for f in self.features] for inst in X], dtype=float)

    def get_feature_names_out(self, input_features=None):
        return np.asarray(self.features, dtype=object)


def init_hard_instance(n: int, alpha: float, budget: int, rng: np.random.Generator,
                       sigma: float = 0.025, p_m: float | None = None, start=None,
                       history: list | None = None) -> tuple[np.ndarray, float]:
    """(1+1) hill-climb on the approximation ratio until it reaches ``alpha``.

    Starts from ``start`` or a uniform random instance. Equal ratios (mostly
    1.0, when 2-opt finds the optimum) are compared on the mean 2-opt length
    so the climb has a gradient to follow. Returns the instance and the ratio
    it was accepted with; ``history`` receives the incumbent ratio per step.
    """
    if alpha < 1:
        raise ValueError("alpha must be >= 1")
    if budget < 1:
        raise ValueError("budget must be >= 1")
    x = rng.random((n, 2)) if start is None else check_instance(start).copy()
    key = _ratio_pair(x, rng)
    if history is not None:
        history.append(key[0])
    for _ in range(budget):
        if key[0] >= alpha:
            return x, key[0]
        y = mutate_instance(x, sigma, rng, p_m)
        ky = _ratio_pair(y, rng)
        if ky >= key:
            x, key = y, ky
        if history is not None:
            history.append(key[0])
    if key[0] >= alpha:
        return x, key[0]
    raise InitializationError(
        f"tsp: no instance with ratio >= {alpha} within {budget} steps (best {key[0]:.4f})"
    )


class TspDomain:
    """TSP instances that 2-opt (best of three) cannot solve to within ``alpha``."""

    name = "tsp"

    def __init__(self, n: int = 15, alpha: float = DEFAULT_ALPHA,
                 features: Sequence[str] = ("angle_mean", "mst_dists_mean"),
                 sigma: float = 0.025, p_m: float | None = None, init_budget: int = 20000,
                 init_strategy: str = "chained",
                 seed_instances: Sequence[np.ndarray] | None = None):
        if not 4 <= n <= MAX_EXACT_CITIES:
            raise UnsupportedSizeError(f"n must be in [4, {MAX_EXACT_CITIES}], got {n}")
        unknown = [f for f in features if f not in FEATURES]
        if unknown:
            raise ValueError(f"unknown TSP features: {unknown}")
        self.n = n
        self.alpha = alpha
        self.feature_names = tuple(features)
        self.sigma = sigma
        self.p_m = p_m
        if init_strategy not in ("chained", "independent"):
            raise ValueError(f"unknown init_strategy {init_strategy!r}")
        self.init_budget = init_budget
        self.init_strategy = init_strategy
        self.seed_instances = list(seed_instances or [])
        self.start_run()

    def start_run(self) -> None:
        self._seeds_used = 0
        self._last = None

    def initialize(self, rng):
        """Climb to a hard instance from a seed file, the previous result, or scratch.

        With the ``"chained"`` strategy every instance after the first starts
        from a mutated copy of the one before, which is far cheaper than
        climbing out of the easy region again.
        """
        start = None
        if self._seeds_used < len(self.seed_instances):
            start = self.seed_instances[self._seeds_used]
            self._seeds_used += 1
            if len(start) != self.n:
                raise ValueError(f"seed instance has {len(start)} cities, expected {self.n}")
        elif self.init_strategy == "chained" and self._last is not None:
            start = self.mutate(self._last, rng)
        x, r = init_hard_instance(self.n, self.alpha, self.init_budget, rng, self.sigma,
                                  self.p_m, start=start)
        self._last = x
        return x, r

    def mutate(self, genotype, rng):
        return mutate_instance(genotype, self.sigma, rng, self.p_m)

    def quality(self, genotype, rng) -> float:
        return approximation_ratio(genotype, rng)

    def accepts(self, quality: float) -> bool:
        return quality >= self.alpha

    def features(self, genotype) -> np.ndarray:
        return np.array([FEATURES[f](genotype) for f in self.feature_names])

    def adapt(self, success: bool) -> None:
        pass

    def state(self) -> dict:
        return {}

    genotype_suffix = ".tsp"

    def write_genotype(self, genotype, path) -> None:
        write_instance(genotype, path)


def write_instance(cities, path: str | os.PathLike) -> None:
    c = check_instance(cities)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{len(c)}\n")
        for x, y in c:
            fh.write(f"{x:.17g} {y:.17g}\n")


def read_instance(path: str | os.PathLike) -> np.ndarray:
    with open(path, encoding="utf-8") as fh:
        lines = [ln.split() for ln in fh if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty instance file")
    n = int(lines[0][0])
    rows = lines[1:]
    if len(rows) != n:
        raise ValueError(f"{path}: header says {n} cities, found {len(rows)}")
    return check_instance([[float(v) for v in r] for r in rows])


def read_instance_dir(path: str | os.PathLike) -> list[np.ndarray]:
    """All instance files in a directory, in sorted filename order."""
    names = sorted(f for f in os.listdir(path) if not f.startswith("."))
    return [read_instance(os.path.join(path, f)) for f in names
            if os.path.isfile(os.path.join(path, f))]
