import math

import numpy as np
import pytest
from scipy.spatial.distance import cdist

from stancekit.embedding import (SMOOTH_KNN_TOLERANCE, Embedding, UmapParams,
                                 fit_attraction_curve, fuzzy_simplicial_set, knn_graph,
                                 knn_graph_from_distances, optimize_layout,
                                 pairwise_cosine_distances, umap, umap_from_distances,
                                 write_embedding_csv, _smooth_knn_impl)


# ---------------------------------------------------------------- oracles

def oracle_smooth_knn(row, max_iter=64, tol=1e-5):
    """Reference bisection, written straight from the recipe: rho is the
    nearest distance; sigma solves sum(exp(-max(0, d-rho)/sigma)) = log2(k)
    by doubling the upper bound then halving; all-equal rows pin sigma=1."""
    k = len(row)
    rho = row[0]
    if all(d == rho for d in row):
        return rho, 1.0
    target = math.log2(k)
    lo, hi, mid = 0.0, math.inf, 1.0
    for _ in range(max_iter):
        val = sum(math.exp(-max(0.0, d - rho) / mid) for d in row)
        if abs(val - target) <= tol:
            break
        if val > target:
            hi = mid
            mid = (lo + hi) / 2.0
        else:
            lo = mid
            mid = mid * 2.0 if math.isinf(hi) else (lo + hi) / 2.0
    return rho, mid


def dense_cosine_distances(rows):
    out = np.ones((len(rows), len(rows)))
    for i, a in enumerate(rows):
        for j, b in enumerate(rows):
            na, nb = np.linalg.norm(a), np.linalg.norm(b)
            dot = float(a @ b)
            sim = 0.0 if (na == 0 or nb == 0 or dot == 0) else min(1.0, dot / (na * nb))
            out[i, j] = 1.0 - sim
    np.fill_diagonal(out, 0.0)  # metric convention, even for empty vectors
    return out


def trustworthiness(dist_high, coords, k=10):
    n = len(coords)
    rank_high = np.argsort(np.argsort(dist_high + np.eye(n) * 1e12, axis=1), axis=1)
    dist_low = cdist(coords, coords)
    penalty = 0
    for i in range(n):
        nn_high = set(np.argsort(dist_high[i] + (np.arange(n) == i) * 1e12)[:k])
        nn_low = np.argsort(dist_low[i] + (np.arange(n) == i) * 1e12)[:k]
        for j in nn_low:
            if j not in nn_high:
                penalty += rank_high[i, j] - k
    return 1.0 - 2.0 * penalty / (n * k * (2 * n - 3 * k - 1))


# ---------------------------------------------------------------- distances

def test_pairwise_cosine_matches_dense_oracle():
    rng = np.random.default_rng(5)
    for _ in range(20):
        n, dim = int(rng.integers(2, 12)), 15
        vectors = []
        for _ in range(n):
            size = int(rng.integers(0, 6))
            vectors.append({int(i): int(c) for i, c in
                            zip(rng.integers(0, dim, size), rng.integers(1, 7, size))})
        rows = np.zeros((n, dim))
        for r, vec in enumerate(vectors):
            for i, c in vec.items():
                rows[r, i] = c
        got = pairwise_cosine_distances(vectors, n_features=dim)
        np.testing.assert_allclose(got, dense_cosine_distances(rows), atol=1e-12)
        assert np.all(np.diag(got) <= 1e-12) or any(not v for v in vectors)


def test_empty_vectors_are_at_distance_one():
    got = pairwise_cosine_distances([{}, {0: 3}, {}], n_features=2)
    assert got[0, 1] == 1.0 and got[1, 0] == 1.0
    assert got[0, 2] == 1.0 and got[2, 0] == 1.0
    # diagonal keeps the metric convention regardless
    assert got[0, 0] == 0.0 and got[1, 1] == 0.0


# ---------------------------------------------------------------- knn

def test_knn_excludes_self_and_sorts():
    d = np.array([[0.0, 2.0, 1.0],
                  [2.0, 0.0, 3.0],
                  [1.0, 3.0, 0.0]])
    g = knn_graph_from_distances(d, 2)
    assert g.indices[0].tolist() == [2, 1]
    assert g.distances[0].tolist() == [1.0, 2.0]


def test_knn_ties_break_by_ascending_id():
    d = np.ones((4, 4)) - np.eye(4)
    g = knn_graph_from_distances(d, 2)
    assert g.indices[0].tolist() == [1, 2]
    assert g.indices[3].tolist() == [0, 1]


def test_knn_bounds():
    d = np.zeros((3, 3))
    with pytest.raises(ValueError):
        knn_graph_from_distances(d, 3)
    with pytest.raises(ValueError):
        knn_graph_from_distances(d, 0)
    with pytest.raises(ValueError):
        knn_graph_from_distances(np.zeros((1, 1)), 1)


# ---------------------------------------------------------------- calibration

def test_smooth_knn_matches_oracle():
    rng = np.random.default_rng(11)
    for _ in range(100):
        k = int(rng.integers(2, 20))
        row = np.sort(rng.uniform(0.05, 2.0, size=k))
        rho, sigma = _smooth_knn_impl(row[None, :], math.log2(k), 64,
                                      SMOOTH_KNN_TOLERANCE)
        rho_o, sigma_o = oracle_smooth_knn(list(row))
        assert rho[0] == rho_o
        assert sigma[0] == pytest.approx(sigma_o, rel=1e-9, abs=1e-12)
        got = sum(math.exp(-max(0.0, d - rho[0]) / sigma[0]) for d in row)
        assert abs(got - math.log2(k)) <= 2e-5


def test_smooth_knn_all_equal_degenerate():
    row = np.full((1, 5), 0.7)
    rho, sigma = _smooth_knn_impl(row, math.log2(5), 64, SMOOTH_KNN_TOLERANCE)
    assert rho[0] == 0.7 and sigma[0] == 1.0


# ---------------------------------------------------------------- fuzzy graph

def _random_distance_matrix(rng, n):
    pts = rng.normal(size=(n, 3))
    return cdist(pts, pts)


def test_fuzzy_graph_invariants():
    rng = np.random.default_rng(23)
    for _ in range(10):
        n = int(rng.integers(8, 30))
        k = int(rng.integers(2, min(8, n - 1) + 1))
        dist = _random_distance_matrix(rng, n)
        neighbors = knn_graph_from_distances(dist, k)
        graph = fuzzy_simplicial_set(neighbors)
        assert graph.n_points == n
        # rho is the nearest-neighbor distance
        np.testing.assert_allclose(graph.rho, neighbors.distances[:, 0])
        # weights live in (0, 1]
        assert np.all(graph.weights > 0) and np.all(graph.weights <= 1.0)
        # symmetry: weight(h, t) == weight(t, h)
        table = {(h, t): w for h, t, w in
                 zip(graph.heads, graph.tails, graph.weights)}
        for (h, t), w in table.items():
            assert (t, h) in table
            assert table[(t, h)] == pytest.approx(w, rel=1e-12)
        # local connectivity: every point touches at least one weight-1 edge
        best = {}
        for h, w in zip(graph.heads, graph.weights):
            best[h] = max(best.get(h, 0.0), w)
        assert all(best[i] == pytest.approx(1.0, abs=1e-9) for i in range(n))
        # no self-loops
        assert np.all(graph.heads != graph.tails)


# ---------------------------------------------------------------- curve fit

def test_attraction_curve_parameters():
    a, b = fit_attraction_curve(0.1)
    assert a == pytest.approx(1.58, abs=0.05)
    assert b == pytest.approx(0.90, abs=0.03)
    # fitted curve tracks the piecewise target
    xs = np.linspace(0, 3, 300)
    target = np.where(xs < 0.1, 1.0, np.exp(-(xs - 0.1)))
    fitted = 1.0 / (1.0 + a * xs ** (2 * b))
    assert np.max(np.abs(fitted - target)) < 0.1


def test_attraction_curve_min_dist_zero_still_fits():
    a, b = fit_attraction_curve(0.0)
    assert a > 0 and 0 < b <= 2


# ---------------------------------------------------------------- layout

def test_layout_deterministic_and_bounded():
    rng = np.random.default_rng(4)
    dist = _random_distance_matrix(rng, 30)
    graph = fuzzy_simplicial_set(knn_graph_from_distances(dist, 5))
    one = optimize_layout(graph, dim=2, epochs=30, seed=9)
    two = optimize_layout(graph, dim=2, epochs=30, seed=9)
    np.testing.assert_array_equal(one, two)
    assert np.all(np.isfinite(one))
    other = optimize_layout(graph, dim=2, epochs=30, seed=10)
    assert not np.array_equal(one, other)


def test_umap_seeded_runs_bit_identical():
    rng = np.random.default_rng(1)
    vectors = [{int(i): 1 for i in rng.integers(0, 20, size=5)} for _ in range(40)]
    p = UmapParams(k=5, epochs=40)
    e1 = umap(vectors, p, seed=3)
    e2 = umap(vectors, p, seed=3)
    np.testing.assert_array_equal(e1.coordinates, e2.coordinates)
    assert e1.seed == 3 and e1.params == p


def test_umap_quality_three_blobs():
    """Trustworthiness >= 0.90 at k=10 on three well-separated blobs."""
    rng = np.random.default_rng(0)
    centers = np.array([[0.0] * 10, [8.0] * 10, [-8.0] + [8.0] * 9])
    pts = np.vstack([c + rng.normal(scale=1.0, size=(50, 10)) for c in centers])
    dist = cdist(pts, pts)
    emb = umap_from_distances(dist, UmapParams(k=15, epochs=200), seed=2)
    t = trustworthiness(dist, emb.coordinates, k=10)
    assert t >= 0.90, f"trustworthiness {t:.3f}"
    # blobs stay apart: largest inter-blob gap far exceeds blob spread
    coords = emb.coordinates
    blob_means = coords.reshape(3, 50, 2).mean(axis=1)
    spread = max(np.linalg.norm(coords.reshape(3, 50, 2)[i] - blob_means[i],
                                axis=1).mean() for i in range(3))
    gaps = [np.linalg.norm(blob_means[i] - blob_means[j])
            for i in range(3) for j in range(i + 1, 3)]
    assert min(gaps) > 2 * spread


def test_umap_clamps_oversized_k(caplog):
    dist = _random_distance_matrix(np.random.default_rng(8), 6)
    with caplog.at_level("WARNING"):
        emb = umap_from_distances(dist, UmapParams(k=15, epochs=10), seed=0)
    assert emb.coordinates.shape == (6, 2)
    assert "k" in caplog.text


def test_embedding_csv(tmp_path):
    coords = np.array([[1.5, -2.25], [0.1, 0.2]])
    path = tmp_path / "emb.csv"
    write_embedding_csv(coords, ["p1", "p2"], path)
    lines = path.read_text().splitlines()
    assert lines[0] == "point_id,x0,x1"
    assert lines[1].startswith("p1,1.5,")
    parsed = [float(x) for x in lines[2].split(",")[1:]]
    assert parsed == [0.1, 0.2]
