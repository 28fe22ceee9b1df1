import itertools
import math

import numpy as np
import pytest

from divopt.diversity import InitializationError
from divopt.tsp import (
    DEFAULT_RANGES,
    FEATURES,
    DegenerateInstanceError,
    TspDomain,
    TspFeatureExtractor,
    UnsupportedSizeError,
    approximation_ratio,
    default_specs,
    distance_matrix,
    exact_opt,
    feature_angle_mean,
    feature_centroid_mean_dist,
    feature_mst_depth_mean,
    feature_mst_dists_mean,
    feature_nnds_mean,
    has_improving_move,
    heuristic_value,
    init_hard_instance,
    mst,
    mutate_instance,
    read_instance,
    read_instance_dir,
    tour_length,
    two_opt,
    write_instance,
)

SQUARE = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
CHAIN = np.array([[0, 0], [0.5, 0], [1, 0]])


def brute_force_opt(cities):
    """Minimum over all (n-1)! tours from city 0, summed in visiting order."""
    d = distance_matrix(cities)
    n = len(cities)
    perms = np.array(list(itertools.permutations(range(1, n))))
    total = d[0, perms[:, 0]]
    for i in range(1, n - 1):
        total = total + d[perms[:, i - 1], perms[:, i]]
    total = total + d[perms[:, -1], 0]
    return float(total.min())


def kruskal_weight(cities):
    d = distance_matrix(cities)
    n = len(cities)
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    edges = sorted((d[i, j], i, j) for i in range(n) for j in range(i + 1, n))
    total, used = 0.0, 0
    for w, i, j in edges:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj
            total += w
            used += 1
    assert used == n - 1
    return total


def test_tour_length_examples():
    assert tour_length(SQUARE, [0, 1, 2, 3]) == pytest.approx(4.0)
    assert tour_length(SQUARE, [0, 2, 1, 3]) == pytest.approx(2 + 2 * math.sqrt(2))
    assert tour_length(np.full((4, 2), 0.3), [0, 1, 2, 3]) == 0.0


@pytest.mark.parametrize("tour", [[0, 1, 2], [0, 1, 1, 3], [0, 1, 2, 4]])
def test_tour_length_rejects_invalid_tours(tour):
    with pytest.raises(ValueError):
        tour_length(SQUARE, tour)


def test_two_opt_uncrosses_square():
    rng = np.random.default_rng(0)
    out = two_opt(SQUARE, [0, 2, 1, 3], rng)
    assert tour_length(SQUARE, out) == pytest.approx(4.0)
    assert tour_length(SQUARE, two_opt(SQUARE, [0, 1, 2, 3], rng)) == pytest.approx(4.0)


@pytest.mark.parametrize("seed", range(20))
def test_two_opt_is_locally_optimal(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, 40))
    cities = rng.random((n, 2))
    start = rng.permutation(n)
    out = two_opt(cities, start, rng)
    assert sorted(out) == list(range(n))
    assert tour_length(cities, out) <= tour_length(cities, start) + 1e-12
    assert not has_improving_move(cities, out)


def test_move_checker_finds_crossing():
    assert has_improving_move(SQUARE, [0, 2, 1, 3])
    assert not has_improving_move(SQUARE, [0, 1, 2, 3])


def test_heuristic_value_examples():
    rng = np.random.default_rng(1)
    assert heuristic_value(np.full((5, 2), 0.5), rng) == 0.0
    for _ in range(10):
        assert heuristic_value(SQUARE, rng) == pytest.approx(4.0)


def test_exact_opt_examples():
    assert exact_opt(SQUARE) == pytest.approx(4.0)
    tri = np.array([[0.1, 0.1], [0.9, 0.2], [0.4, 0.8]])
    perimeter = tour_length(tri, [0, 1, 2])
    assert exact_opt(tri) == pytest.approx(perimeter, abs=1e-15)
    assert exact_opt([[0.2, 0.3]]) == 0.0


@pytest.mark.parametrize("seed", range(30))
def test_exact_opt_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    cities = rng.random((int(rng.integers(4, 9)), 2))
    assert exact_opt(cities) == brute_force_opt(cities)


@pytest.mark.parametrize("seed", range(10))
def test_upper_bound_never_changes_result(seed):
    rng = np.random.default_rng(100 + seed)
    cities = rng.random((10, 2))
    h = heuristic_value(cities, rng)
    assert exact_opt(cities, upper_bound=h) == exact_opt(cities)


def test_exact_opt_size_limit():
    with pytest.raises(UnsupportedSizeError, match="smaller"):
        exact_opt(np.random.default_rng(0).random((19, 2)))


def test_approximation_ratio_bounds():
    rng = np.random.default_rng(2)
    assert approximation_ratio(SQUARE, rng) == pytest.approx(1.0)
    # exact comparison: rounding must never push the ratio below one
    for _ in range(300):
        cities = rng.random((int(rng.integers(4, 12)), 2))
        assert approximation_ratio(cities, rng) >= 1.0


def test_approximation_ratio_degenerate():
    with pytest.raises(DegenerateInstanceError):
        approximation_ratio(np.full((4, 2), 0.25), np.random.default_rng(0))


def test_gate_boundary_at_default_alpha():
    dom = TspDomain(n=8, alpha=1.18, init_budget=1)
    assert dom.accepts(1.18)
    assert not dom.accepts(np.nextafter(1.18, 0))
    assert not dom.accepts(1.1799)


def test_mutation_zero_probability_is_identity():
    rng = np.random.default_rng(3)
    cities = rng.random((10, 2))
    assert np.array_equal(mutate_instance(cities, 0.1, rng, p_m=0.0), cities)


def test_mutation_stays_in_square_and_changes_few_cities():
    rng = np.random.default_rng(4)
    cities = rng.random((30, 2))
    changed = []
    for _ in range(200):
        out = mutate_instance(cities, 0.3, rng)
        assert np.all((out >= 0) & (out <= 1))
        changed.append(np.any(out != cities, axis=1).sum())
    # p_m = 3/n: three cities move on average
    assert 2.5 < np.mean(changed) < 3.5


def test_mutation_small_sigma_stays_close():
    rng = np.random.default_rng(5)
    cities = rng.random((10, 2)) * 0.8 + 0.1
    out = mutate_instance(cities, 1e-9, rng, p_m=1.0)
    assert np.max(np.abs(out - cities)) < 1e-7


def test_mutation_clamps_corner_cities():
    rng = np.random.default_rng(6)
    corner = np.zeros((4, 2))
    out = mutate_instance(corner, 5.0, rng, p_m=1.0, max_retries=1)
    assert np.all((out >= 0) & (out <= 1))


def test_mutation_rejects_bad_sigma():
    with pytest.raises(ValueError):
        mutate_instance(SQUARE / 2, 0.0, np.random.default_rng(0))


def test_mst_examples():
    assert mst(CHAIN) == [(0, 1, 0.5), (1, 2, 0.5)]
    assert mst([[0, 0], [1, 1]]) == [(0, 1, pytest.approx(math.sqrt(2)))]


@pytest.mark.parametrize("seed", range(20))
def test_mst_matches_kruskal(seed):
    rng = np.random.default_rng(seed)
    cities = rng.random((int(rng.integers(4, 41)), 2))
    edges = mst(cities)
    assert len(edges) == len(cities) - 1
    assert abs(sum(w for _, _, w in edges) - kruskal_weight(cities)) <= 1e-12
    assert feature_mst_dists_mean(cities) == pytest.approx(kruskal_weight(cities) / (len(cities) - 1))


def test_angle_mean_examples():
    tri = np.array([[0.1, 0.1], [0.9, 0.1], [0.5, 0.1 + 0.4 * math.sqrt(3)]])
    assert feature_angle_mean(tri) == pytest.approx(math.pi / 3)
    assert feature_angle_mean(CHAIN) == pytest.approx(math.pi / 3)
    assert feature_angle_mean(SQUARE) == pytest.approx(math.pi / 2)


def test_angle_mean_degenerate_is_zero():
    pts = np.array([[0.2, 0.2], [0.2, 0.2], [0.8, 0.2], [0.2, 0.8]])
    # the coincident pair gets 0; the other two see both copies in one direction
    assert feature_angle_mean(pts) == 0.0


def test_centroid_examples():
    assert feature_centroid_mean_dist(SQUARE) == pytest.approx(math.sqrt(2) / 2)
    assert feature_centroid_mean_dist(np.full((4, 2), 0.7)) == 0.0
    assert feature_centroid_mean_dist([[0, 0], [1, 0]]) == pytest.approx(0.5)


def test_nnds_examples():
    assert feature_nnds_mean(CHAIN) == pytest.approx(0.5)
    assert feature_nnds_mean(SQUARE) == pytest.approx(1.0)
    dup = np.array([[0.3, 0.3], [0.3, 0.3], [0.9, 0.9]])
    assert feature_nnds_mean(dup) == pytest.approx(math.hypot(0.6, 0.6) / 3)


def test_mst_dists_examples():
    assert feature_mst_dists_mean(CHAIN) == pytest.approx(0.5)
    assert feature_mst_dists_mean(SQUARE) == pytest.approx(1.0)


def test_mst_depth_examples():
    assert feature_mst_depth_mean(CHAIN) == pytest.approx(1.0)
    star = np.array([[0.5, 0.5], [0.5, 0.9], [0.1, 0.5], [0.9, 0.4]])
    assert feature_mst_depth_mean(star) == pytest.approx(0.75)
    assert feature_mst_depth_mean([[0.4, 0.4]]) == 0.0


@pytest.mark.parametrize("seed", range(10))
def test_features_invariant_under_relabeling(seed):
    rng = np.random.default_rng(seed)
    cities = rng.random((15, 2))
    # city 0 roots the MST, so it stays in place
    perm = np.concatenate([[0], rng.permutation(np.arange(1, 15))])
    for name, f in FEATURES.items():
        assert f(cities[perm]) == pytest.approx(f(cities), abs=1e-12), name


@pytest.mark.parametrize("seed", range(10))
def test_features_invariant_under_rotation(seed):
    rng = np.random.default_rng(seed)
    cities = 0.5 + (rng.random((15, 2)) - 0.5) * 0.6
    theta = rng.uniform(0, 2 * math.pi)
    rot = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
    turned = (cities - 0.5) @ rot.T + 0.5
    assert np.all((turned >= 0) & (turned <= 1))
    for name in ("angle_mean", "centroid_mean_dist", "nnds_mean", "mst_dists_mean"):
        assert FEATURES[name](turned) == pytest.approx(FEATURES[name](cities), abs=1e-12), name


def test_default_ranges():
    assert DEFAULT_RANGES["angle_mean"] == (0.8, 2.8)
    assert DEFAULT_RANGES["centroid_mean_dist"] == (0.24, 0.6)
    assert DEFAULT_RANGES["nnds_mean"] == (0.1, 0.7)
    assert DEFAULT_RANGES["mst_dists_mean"] == (0.06, 0.15)
    specs = default_specs(["angle_mean", "nnds_mean"])
    assert [(s.f_min, s.f_max) for s in specs] == [(0.8, 2.8), (0.1, 0.7)]


def test_feature_extractor():
    ext = TspFeatureExtractor(["centroid_mean_dist", "nnds_mean"]).fit()
    out = ext.transform([SQUARE, CHAIN])
    assert out == pytest.approx(np.array([[math.sqrt(2) / 2, 1.0], [1 / 3, 0.5]]))
    assert list(ext.get_feature_names_out()) == ["centroid_mean_dist", "nnds_mean"]
    with pytest.raises(ValueError):
        TspFeatureExtractor(["bogus"]).fit()


def test_init_alpha_one_is_immediate():
    history = []
    x, r = init_hard_instance(8, 1.0, 5, np.random.default_rng(0), history=history)
    assert len(history) == 1 and r >= 1.0 and x.shape == (8, 2)


def test_init_history_non_decreasing_and_budget_error():
    history = []
    with pytest.raises(InitializationError, match="best"):
        init_hard_instance(8, 3.0, 40, np.random.default_rng(1), history=history)
    assert len(history) == 41
    assert all(b >= a for a, b in zip(history, history[1:]))


def test_init_returns_gate_passing_instance():
    x, r = init_hard_instance(10, 1.02, 5000, np.random.default_rng(2))
    assert r >= 1.02
    assert np.all((x >= 0) & (x <= 1))


@pytest.mark.parametrize("kwargs", [dict(alpha=0.9, budget=5), dict(alpha=1.1, budget=0)])
def test_init_rejects_bad_arguments(kwargs):
    with pytest.raises(ValueError):
        init_hard_instance(8, rng=np.random.default_rng(0), **kwargs)


def test_domain_initialize_chains_and_uses_seed_instances():
    rng = np.random.default_rng(3)
    seed = rng.random((8, 2))
    dom = TspDomain(n=8, alpha=1.0, features=("angle_mean",), seed_instances=[seed])
    first, _ = dom.initialize(rng)
    assert np.array_equal(first, seed)
    second, q = dom.initialize(rng)
    assert second.shape == (8, 2) and q >= 1.0
    assert dom.features(first) == pytest.approx([feature_angle_mean(seed)])


def test_domain_validation():
    with pytest.raises(UnsupportedSizeError):
        TspDomain(n=19)
    with pytest.raises(ValueError):
        TspDomain(n=8, features=("nope",))
    with pytest.raises(ValueError):
        TspDomain(n=8, init_strategy="other")


def test_instance_round_trip(tmp_path):
    cities = np.random.default_rng(7).random((12, 2))
    path = tmp_path / "a.tsp"
    write_instance(cities, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "12" and len(lines) == 13
    assert np.array_equal(read_instance(path), cities)
    write_instance(SQUARE, tmp_path / "b.tsp")
    loaded = read_instance_dir(tmp_path)
    assert np.array_equal(loaded[0], cities) and np.array_equal(loaded[1], SQUARE)


def test_instance_file_count_mismatch(tmp_path):
    path = tmp_path / "bad.tsp"
    path.write_text("3\n0.1 0.2\n0.3 0.4\n")
    with pytest.raises(ValueError, match="3 cities"):
        read_instance(path)
