"""Flat-kernel mean shift clustering in the embedded space.

Every point seeds its own ascent: a seed repeatedly moves to the mean of
all points within one bandwidth until the shift falls below 1e-6 x
bandwidth (or 300 iterations).  Converged seed positions closer than half
a bandwidth are merged, larger basins winning.  Points are then assigned
to the nearest surviving mode within one bandwidth; everything else, and
every member of a cluster smaller than min_members, is Unassigned.
"""

from collections import Counter
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

from ._accel import NUMBA_ENABLED, maybe_jit

UNASSIGNED = -1

CONVERGENCE_FACTOR = 1e-6
MAX_SHIFT_ITERATIONS = 300


class ClusteringError(ValueError):
    """Raised when the geometry cannot support clustering (caller should skip)."""


@dataclass(frozen=True)
class ClusterAssignment:
    labels: np.ndarray  # (n,) int64, UNASSIGNED where no cluster applies
    modes: np.ndarray   # (n_clusters, dim)
    sizes: np.ndarray   # (n_clusters,) member counts, descending

    @property
    def n_clusters(self) -> int:
        return self.modes.shape[0]


def estimate_bandwidth(points: np.ndarray, quantile: float = 0.3) -> float:
    """Nearest-rank quantile of all pairwise Euclidean distances."""
    if points.ndim != 2 or points.shape[0] < 2:
        raise ClusteringError("bandwidth estimation needs at least 2 points")
    if not 0.0 < quantile <= 1.0:
        raise ValueError(f"quantile must be in (0, 1], got {quantile}")
    dists = np.sort(pdist(points))
    rank = int(np.ceil(quantile * dists.size))
    bandwidth = float(dists[rank - 1])
    if bandwidth == 0.0:
        raise ClusteringError(
            "estimated bandwidth is 0 (points identical at this quantile); skip clustering")
    return bandwidth


def _shift_seeds_impl(points, bandwidth, max_iter, tol):
    n, dim = points.shape
    bw2 = bandwidth * bandwidth
    modes = np.empty((n, dim), dtype=np.float64)
    counts = np.zeros(n, dtype=np.int64)
    mean = np.empty(dim, dtype=np.float64)
    for i in range(n):
        x = points[i].copy()
        count = 0
        for _ in range(max_iter):
            count = 0
            for c in range(dim):
                mean[c] = 0.0
            for p in range(n):
                d2 = 0.0
                for c in range(dim):
                    diff = points[p, c] - x[c]
                    d2 += diff * diff
                if d2 <= bw2:
                    count += 1
                    for c in range(dim):
                        mean[c] += points[p, c]
            if count == 0:
                break
            shift2 = 0.0
            for c in range(dim):
                mean[c] /= count
                diff = mean[c] - x[c]
                shift2 += diff * diff
                x[c] = mean[c]
            if shift2 < tol * tol:
                break
        modes[i] = x
        counts[i] = count
    return modes, counts


_shift_seeds = maybe_jit(_shift_seeds_impl)


def _shift_seeds_numpy(points, bandwidth, max_iter, tol):
    n = points.shape[0]
    bw2 = bandwidth * bandwidth
    modes = points.copy()
    counts = np.zeros(n, dtype=np.int64)
    sq = np.einsum("ij,ij->i", points, points)
    active = np.ones(n, dtype=bool)
    for _ in range(max_iter):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        cur = modes[idx]
        d2 = np.maximum(
            sq[None, :] + np.einsum("ij,ij->i", cur, cur)[:, None] - 2.0 * cur @ points.T, 0.0)
        within = d2 <= bw2
        cnt = within.sum(axis=1)
        empty = cnt == 0
        safe = np.maximum(cnt, 1)
        means = (within @ points) / safe[:, None]
        means[empty] = cur[empty]
        shift2 = np.einsum("ij,ij->i", means - cur, means - cur)
        modes[idx] = means
        counts[idx] = cnt
        done = empty | (shift2 < tol * tol)
        active[idx[done]] = False
    return modes, counts


def mean_shift(points: np.ndarray, bandwidth: float, min_members: int = 3) -> ClusterAssignment:
    """Cluster points with a flat kernel of the given bandwidth.

    Deterministic: seed ascent order, basin-size merge order, and
    assignment ties are all fixed by point index.  Cluster ids are dense
    from 0 in order of descending member count.
    """
    points = np.ascontiguousarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] < 1:
        raise ValueError("points must be a non-empty 2-d array")
    if bandwidth <= 0.0:
        raise ValueError(f"bandwidth must be positive, got {bandwidth}")
    if min_members < 1:
        raise ValueError(f"min_members must be >= 1, got {min_members}")
    n = points.shape[0]
    tol = CONVERGENCE_FACTOR * bandwidth
    shifter = _shift_seeds if NUMBA_ENABLED else _shift_seeds_numpy
    modes, basin_counts = shifter(points, bandwidth, MAX_SHIFT_ITERATIONS, tol)

    # Merge converged seeds closer than bandwidth/2; larger basin wins.
    order = np.lexsort((np.arange(n), -basin_counts))
    accepted: list[int] = []
    half = bandwidth / 2.0
    for i in order:
        if basin_counts[i] == 0:
            continue
        if all(np.linalg.norm(modes[i] - modes[j]) > half for j in accepted):
            accepted.append(i)
    if not accepted:
        return ClusterAssignment(labels=np.full(n, UNASSIGNED, dtype=np.int64),
                                 modes=np.empty((0, points.shape[1])),
                                 sizes=np.empty(0, dtype=np.int64))
    centers = modes[accepted]

    diff = points[:, None, :] - centers[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    nearest = np.argmin(dist, axis=1)
    in_range = dist[np.arange(n), nearest] <= bandwidth
    labels = np.where(in_range, nearest, UNASSIGNED).astype(np.int64)

    sizes = np.bincount(labels[labels >= 0], minlength=len(accepted))
    for c in np.nonzero(sizes < min_members)[0]:
        labels[labels == c] = UNASSIGNED
    survivors = np.nonzero(sizes >= min_members)[0]
    survivors = survivors[np.lexsort((survivors, -sizes[survivors]))]
    remap = {int(old): new for new, old in enumerate(survivors)}
    labels = np.array([remap.get(int(c), UNASSIGNED) for c in labels], dtype=np.int64)
    return ClusterAssignment(labels=labels,
                             modes=centers[survivors],
                             sizes=sizes[survivors])


def majority_label(assignment: ClusterAssignment, known: dict[int, int]):
    """Per-cluster majority vote over known point labels.

    Returns {cluster_id: (label, purity)}.  A cluster with no labeled
    members gets (UNASSIGNED, 0.0); a tied vote gets UNASSIGNED with the
    tied purity (e.g. 0.5 for a 2-2 split).
    """
    votes: dict[int, Counter] = {c: Counter() for c in range(assignment.n_clusters)}
    for point, label in known.items():
        cluster = int(assignment.labels[point])
        if cluster != UNASSIGNED:
            votes[cluster][label] += 1
    out = {}
    for cluster, counter in votes.items():
        if not counter:
            out[cluster] = (UNASSIGNED, 0.0)
            continue
        ranked = counter.most_common()
        top_label, top_count = ranked[0]
        total = sum(counter.values())
        purity = top_count / total
        if len(ranked) > 1 and ranked[1][1] == top_count:
            out[cluster] = (UNASSIGNED, purity)
        else:
            out[cluster] = (int(top_label), purity)
    return out


def write_assignment_csv(assignment: ClusterAssignment, point_ids, path) -> None:
    """CSV dump with header point_id,cluster; Unassigned prints as UNASSIGNED."""
    if len(point_ids) != assignment.labels.shape[0]:
        raise ValueError("point_ids length does not match labels")
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("point_id,cluster\n")
        for pid, label in zip(point_ids, assignment.labels):
            name = "UNASSIGNED" if label == UNASSIGNED else str(int(label))
            handle.write(f"{pid},{name}\n")
