"""Nonlinear dimensionality reduction of sparse user vectors.

Implements the UMAP construction directly: exact k-nearest-neighbour
search under cosine distance, conversion to a fuzzy graph with the
smooth-kNN calibration, then a stochastic gradient layout with negative
sampling.  Nothing here depends on an external embedding library; the
hot kernels (pairwise distances, the layout epoch) run under numba when
available, with a numpy/scipy fallback selected by the
``STANCEKIT_DISABLE_NUMBA`` environment flag.
"""

import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import optimize, sparse

from ._accel import NUMBA_ENABLED, jit_parallel, maybe_jit
from .features import pack_csr

log = logging.getLogger(__name__)

SMOOTH_KNN_TOLERANCE = 1e-5
SMOOTH_KNN_MAX_ITER = 64
GRADIENT_CLIP = 4.0


@dataclass(frozen=True)
class UmapParams:
    k: int = 15
    dim: int = 2
    min_dist: float = 0.1
    epochs: int = 200
    negative_sample_rate: int = 5


@dataclass(frozen=True)
class NeighborGraph:
    k: int
    indices: np.ndarray    # (n, k) int64, row-sorted by (distance, index)
    distances: np.ndarray  # (n, k) float64, ascending per row

    @property
    def n_points(self) -> int:
        return self.indices.shape[0]


@dataclass(frozen=True)
class FuzzyGraph:
    n_points: int
    k: int
    rho: np.ndarray
    sigma: np.ndarray
    heads: np.ndarray    # (m,) int64; both directions of every edge present
    tails: np.ndarray
    weights: np.ndarray  # (m,) float64 in (0, 1]


@dataclass(frozen=True)
class Embedding:
    coordinates: np.ndarray
    seed: int
    params: UmapParams


def _pairwise_cosine_impl(indptr, indices, data, norms, out):
    n = norms.shape[0]
    for i in range(n):
        out[i, i] = 0.0
        si, ei = indptr[i], indptr[i + 1]
        for j in range(i + 1, n):
            sj, ej = indptr[j], indptr[j + 1]
            dot = 0.0
            p, q = si, sj
            while p < ei and q < ej:
                left = indices[p]
                right = indices[q]
                if left == right:
                    dot += data[p] * data[q]
                    p += 1
                    q += 1
                elif left < right:
                    p += 1
                else:
                    q += 1
            if dot > 0.0 and norms[i] > 0.0 and norms[j] > 0.0:
                sim = dot / (norms[i] * norms[j])
                if sim > 1.0:
                    sim = 1.0
            else:
                sim = 0.0
            out[i, j] = 1.0 - sim
            out[j, i] = 1.0 - sim
    return out


_pairwise_cosine = maybe_jit(_pairwise_cosine_impl)


def _row_norms(indptr, data, n):
    norms = np.zeros(n, dtype=np.float64)
    for i in range(n):
        norms[i] = np.sqrt(np.sum(data[indptr[i]:indptr[i + 1]] ** 2))
    return norms


def pairwise_cosine_distances(vectors, n_features: int | None = None) -> np.ndarray:
    """Dense matrix of cosine distances (1 - cosine similarity).

    Empty vectors sit at distance 1 from everything; the diagonal is 0.
    """
    n = len(vectors)
    if n_features is None:
        n_features = 0
        for vec in vectors:
            if vec:
                n_features = max(n_features, max(vec) + 1)
    indptr, indices, data = pack_csr(vectors, n_features)
    norms = _row_norms(indptr, data, n)
    if NUMBA_ENABLED:
        out = np.empty((n, n), dtype=np.float64)
        return _pairwise_cosine(indptr, indices, data, norms, out)
    matrix = sparse.csr_matrix((data, indices, indptr), shape=(n, n_features))
    scale = np.divide(1.0, norms, out=np.zeros_like(norms), where=norms > 0)
    normalized = sparse.diags(scale) @ matrix
    sims = np.asarray((normalized @ normalized.T).todense())
    np.clip(sims, 0.0, 1.0, out=sims)
    out = 1.0 - sims
    np.fill_diagonal(out, 0.0)
    return out


def knn_graph_from_distances(dist: np.ndarray, k: int) -> NeighborGraph:
    """Exact k nearest neighbours from a precomputed distance matrix.

    Ties break by ascending point index; a point is never its own neighbour.
    """
    n = dist.shape[0]
    if n < 2:
        raise ValueError(f"need at least 2 points, got {n}")
    if not 1 <= k <= n - 1:
        raise ValueError(f"k must be in [1, {n - 1}], got {k}")
    ids = np.arange(n)
    indices = np.empty((n, k), dtype=np.int64)
    distances = np.empty((n, k), dtype=np.float64)
    for i in range(n):
        row = dist[i].copy()
        row[i] = np.inf
        order = np.lexsort((ids, row))[:k]
        indices[i] = order
        distances[i] = row[order]
    return NeighborGraph(k=k, indices=indices, distances=distances)


def knn_graph(vectors, k: int) -> NeighborGraph:
    """Exact kNN under cosine distance over sparse count vectors."""
    if len(vectors) < 2:
        raise ValueError(f"need at least 2 points, got {len(vectors)}")
    return knn_graph_from_distances(pairwise_cosine_distances(vectors), k)


def _smooth_knn_impl(distances, target, max_iter, tol):
    n, k = distances.shape
    rho = np.empty(n, dtype=np.float64)
    sigma = np.empty(n, dtype=np.float64)
    for i in range(n):
        rho[i] = distances[i, 0]
        all_equal = True
        for j in range(k):
            if distances[i, j] != rho[i]:
                all_equal = False
                break
        if all_equal:
            sigma[i] = 1.0
            continue
        lo = 0.0
        hi = np.inf
        mid = 1.0
        for _ in range(max_iter):
            psum = 0.0
            for j in range(k):
                gap = distances[i, j] - rho[i]
                if gap > 0.0:
                    psum += np.exp(-gap / mid)
                else:
                    psum += 1.0
            if abs(psum - target) < tol:
                break
            if psum > target:
                hi = mid
                mid = (lo + hi) / 2.0
            else:
                lo = mid
                if hi == np.inf:
                    mid *= 2.0
                else:
                    mid = (lo + hi) / 2.0
        sigma[i] = mid
    return rho, sigma


_smooth_knn = maybe_jit(_smooth_knn_impl)


def fuzzy_simplicial_set(graph: NeighborGraph) -> FuzzyGraph:
    """Calibrated fuzzy graph over a kNN graph.

    rho is each point's nearest-neighbour distance.  sigma solves
    sum_j exp(-max(0, d_j - rho) / sigma) = log2(k) by bisection; when all
    neighbour distances equal rho the equation is degenerate and sigma is 1.
    Directed weights exp(-max(0, d - rho) / sigma) are symmetrized with
    w_ab + w_ba - w_ab * w_ba.  Zero-weight edges are dropped.
    """
    n, k = graph.indices.shape
    rho, sigma = _smooth_knn(graph.distances, np.log2(k),
                             SMOOTH_KNN_MAX_ITER, SMOOTH_KNN_TOLERANCE)
    rows = np.repeat(np.arange(n, dtype=np.int64), k)
    cols = graph.indices.ravel()
    gaps = np.maximum(0.0, graph.distances.ravel() - rho[rows])
    directed = np.exp(-gaps / sigma[rows])
    matrix = sparse.coo_matrix((directed, (rows, cols)), shape=(n, n)).tocsr()
    transpose = matrix.T.tocsr()
    combined = (matrix + transpose - matrix.multiply(transpose)).tocoo()
    keep = combined.data > 0.0
    heads = combined.row[keep].astype(np.int64)
    tails = combined.col[keep].astype(np.int64)
    weights = np.minimum(combined.data[keep], 1.0)
    order = np.lexsort((tails, heads))
    return FuzzyGraph(n_points=n, k=k, rho=rho, sigma=sigma,
                      heads=heads[order], tails=tails[order], weights=weights[order])


@lru_cache(maxsize=32)
def fit_attraction_curve(min_dist: float, spread: float = 1.0) -> tuple[float, float]:
    """Least-squares (a, b) so that 1/(1 + a*r^(2b)) matches the target
    curve that is 1 up to min_dist and decays exp(-(r - min_dist)) beyond it."""
    xs = np.linspace(0.0, spread * 3.0, 300)
    ys = np.ones_like(xs)
    tail = xs >= min_dist
    ys[tail] = np.exp(-(xs[tail] - min_dist) / spread)

    def curve(x, a, b):
        return 1.0 / (1.0 + a * x ** (2.0 * b))

    (a, b), _ = optimize.curve_fit(curve, xs, ys)
    return float(a), float(b)


def _layout_epoch_impl(emb, heads, tails, negs, a, b, alpha):
    dim = emb.shape[1]
    n_neg = negs.shape[1]
    for e in range(heads.shape[0]):
        j = heads[e]
        t = tails[e]
        d2 = 0.0
        for c in range(dim):
            diff = emb[j, c] - emb[t, c]
            d2 += diff * diff
        if d2 > 0.0:
            coeff = (-2.0 * a * b * d2 ** (b - 1.0)) / (a * d2 ** b + 1.0)
            for c in range(dim):
                grad = coeff * (emb[j, c] - emb[t, c])
                if grad > GRADIENT_CLIP:
                    grad = GRADIENT_CLIP
                elif grad < -GRADIENT_CLIP:
                    grad = -GRADIENT_CLIP
                emb[j, c] += alpha * grad
                emb[t, c] -= alpha * grad
        for s in range(n_neg):
            other = negs[e, s]
            if other == j:
                continue
            d2 = 0.0
            for c in range(dim):
                diff = emb[j, c] - emb[other, c]
                d2 += diff * diff
            if d2 > 0.0:
                coeff = (2.0 * b) / ((0.001 + d2) * (a * d2 ** b + 1.0))
                for c in range(dim):
                    grad = coeff * (emb[j, c] - emb[other, c])
                    if grad > GRADIENT_CLIP:
                        grad = GRADIENT_CLIP
                    elif grad < -GRADIENT_CLIP:
                        grad = -GRADIENT_CLIP
                    emb[j, c] += alpha * grad
            else:
                for c in range(dim):
                    emb[j, c] += alpha * GRADIENT_CLIP
    return emb


_layout_epoch = maybe_jit(_layout_epoch_impl)

if NUMBA_ENABLED:
    import numba

    def _layout_epoch_parallel_impl(emb, heads, tails, negs, a, b, alpha):
        dim = emb.shape[1]
        n_neg = negs.shape[1]
        for e in numba.prange(heads.shape[0]):
            j = heads[e]
            t = tails[e]
            d2 = 0.0
            for c in range(dim):
                diff = emb[j, c] - emb[t, c]
                d2 += diff * diff
            if d2 > 0.0:
                coeff = (-2.0 * a * b * d2 ** (b - 1.0)) / (a * d2 ** b + 1.0)
                for c in range(dim):
                    grad = coeff * (emb[j, c] - emb[t, c])
                    if grad > GRADIENT_CLIP:
                        grad = GRADIENT_CLIP
                    elif grad < -GRADIENT_CLIP:
                        grad = -GRADIENT_CLIP
                    emb[j, c] += alpha * grad
                    emb[t, c] -= alpha * grad
            for s in range(n_neg):
                other = negs[e, s]
                if other == j:
                    continue
                d2 = 0.0
                for c in range(dim):
                    diff = emb[j, c] - emb[other, c]
                    d2 += diff * diff
                if d2 > 0.0:
                    coeff = (2.0 * b) / ((0.001 + d2) * (a * d2 ** b + 1.0))
                    for c in range(dim):
                        grad = coeff * (emb[j, c] - emb[other, c])
                        if grad > GRADIENT_CLIP:
                            grad = GRADIENT_CLIP
                        elif grad < -GRADIENT_CLIP:
                            grad = -GRADIENT_CLIP
                        emb[j, c] += alpha * grad
                else:
                    for c in range(dim):
                        emb[j, c] += alpha * GRADIENT_CLIP
        return emb

    _layout_epoch_parallel = jit_parallel(_layout_epoch_parallel_impl)
else:
    _layout_epoch_parallel = None


def optimize_layout(graph: FuzzyGraph, dim: int = 2, epochs: int = 200,
                    min_dist: float = 0.1, negative_sample_rate: int = 5,
                    seed: int = 0, parallel: bool = False) -> np.ndarray:
    """Stochastic gradient layout of a fuzzy graph.

    Coordinates start uniform in [-10, 10]^dim from the seed.  Each edge is
    updated with per-epoch frequency proportional to its weight (the
    heaviest edge fires every epoch).  An attractive update moves both
    endpoints along the gradient of log Phi, with Phi(r) = 1/(1 + a r^(2b))
    fitted from min_dist; every attractive update is paired with
    negative_sample_rate repulsive updates against uniformly random points.
    Per-component gradient steps are clipped to [-4, 4] and the learning
    rate decays linearly from 1.0 to 0.

    The default sequential mode is deterministic given the seed.  With
    parallel=True (numba only) edge updates may interleave, so coordinates
    are not reproducible run to run.
    """
    if epochs < 1:
        raise ValueError(f"epochs must be >= 1, got {epochs}")
    if negative_sample_rate < 0:
        raise ValueError(f"negative_sample_rate must be >= 0, got {negative_sample_rate}")
    a, b = fit_attraction_curve(min_dist)
    rng = np.random.default_rng(seed)
    emb = rng.uniform(-10.0, 10.0, size=(graph.n_points, dim))
    if graph.weights.size == 0:
        return emb
    epochs_per_edge = graph.weights.max() / graph.weights
    next_due = epochs_per_edge.copy()
    if parallel and _layout_epoch_parallel is None:
        log.warning("parallel layout requested without numba; running sequentially")
        parallel = False
    step = _layout_epoch_parallel if parallel else _layout_epoch
    for epoch in range(1, epochs + 1):
        alpha = 1.0 - (epoch - 1) / epochs
        due = next_due <= epoch
        count = int(due.sum())
        if count:
            negs = rng.integers(0, graph.n_points, size=(count, negative_sample_rate))
            step(emb, graph.heads[due], graph.tails[due], negs, a, b, alpha)
            next_due[due] += epochs_per_edge[due]
    return emb


def umap(vectors, params: UmapParams | None = None, seed: int = 0,
         parallel: bool = False) -> Embedding:
    """Embed sparse count vectors; see optimize_layout for the procedure."""
    if params is None:
        params = UmapParams()
    return umap_from_distances(pairwise_cosine_distances(vectors), params, seed, parallel)


def umap_from_distances(dist: np.ndarray, params: UmapParams | None = None,
                        seed: int = 0, parallel: bool = False) -> Embedding:
    """Embed points given their precomputed pairwise cosine distances."""
    if params is None:
        params = UmapParams()
    n = dist.shape[0]
    k = params.k
    if k > n - 1:
        log.warning("k=%d exceeds n-1=%d; clamping", k, n - 1)
        k = n - 1
    graph = fuzzy_simplicial_set(knn_graph_from_distances(dist, k))
    coords = optimize_layout(graph, dim=params.dim, epochs=params.epochs,
                             min_dist=params.min_dist,
                             negative_sample_rate=params.negative_sample_rate,
                             seed=seed, parallel=parallel)
    return Embedding(coordinates=coords, seed=seed, params=params)


def write_embedding_csv(coordinates: np.ndarray, point_ids, path) -> None:
    """CSV dump with header point_id,x0,...,x<d-1>."""
    n, dim = coordinates.shape
    if len(point_ids) != n:
        raise ValueError("point_ids length does not match coordinates")
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("point_id," + ",".join(f"x{c}" for c in range(dim)) + "\n")
        for i, pid in enumerate(point_ids):
            coords = ",".join(repr(float(x)) for x in coordinates[i])
            handle.write(f"{pid},{coords}\n")
