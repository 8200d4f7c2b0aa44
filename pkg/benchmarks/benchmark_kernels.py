"""Compare the jitted kernels against the pure-numpy fallback paths.

The backend is chosen when stancekit is imported, keyed off the
STANCEKIT_DISABLE_NUMBA environment variable, so the driver runs the same
workloads in two subprocesses (flag unset, flag set) and prints a table.
Each workload is warmed up once before timing, which keeps one-time JIT
compilation out of the steady-state numbers.

Run:  python3 benchmarks/benchmark_kernels.py [--repeat N]
"""

import argparse
import json
import os
import subprocess
import sys
import time


def _sparse_vectors(rng, n, n_features, nnz):
    out = []
    for _ in range(n):
        cols = rng.choice(n_features, size=nnz, replace=False)
        out.append({int(c): int(v) for c, v in
                    zip(cols, rng.integers(1, 6, size=nnz))})
    return out


def _workloads():
    import numpy as np

    from stancekit import classify
    from stancekit.cluster import estimate_bandwidth, mean_shift
    from stancekit.embedding import UmapParams, pairwise_cosine_distances, umap

    rng = np.random.default_rng(0)
    pair_vectors = _sparse_vectors(rng, 900, 2500, 40)
    umap_vectors = pair_vectors[:400]
    blob = np.vstack([rng.normal(c, 1.0, size=(400, 2)) for c in (0.0, 8.0, 16.0)])
    bandwidth = 2.0

    svm_examples = []
    for vec in _sparse_vectors(rng, 1500, 400, 20):
        label = -1 if sum(v for c, v in vec.items() if c < 200) >= \
            sum(v for c, v in vec.items() if c >= 200) else 1
        vec[0 if label == -1 else 1] = vec.get(0 if label == -1 else 1, 0) + 3
        svm_examples.append((vec, label))

    words = [f"w{i}" for i in range(600)]
    ft_examples = []
    for _ in range(1500):
        side = int(rng.integers(2))
        ids = rng.integers(300 * side, 300 * (side + 1), size=12)
        ft_examples.append(([words[i] for i in ids], side))

    return {
        "pairwise cosine (900x2500)":
            lambda: pairwise_cosine_distances(pair_vectors),
        "umap end to end (400 pts)":
            lambda: umap(umap_vectors, UmapParams(epochs=100), seed=0),
        "mean shift (1200 pts)":
            lambda: mean_shift(blob, bandwidth, min_members=3),
        "svm train (1500x400)":
            lambda: classify.svm_train(svm_examples, C=1.0, n_features=400),
        "ft train (1500 ex, 3 epochs)":
            lambda: classify.ft_train(ft_examples, dim=50, epochs=3, seed=0),
    }


def run_inner(repeat):
    from stancekit import NUMBA_ENABLED

    results = {}
    for name, fn in _workloads().items():
        fn()
        best = min(_timed(fn) for _ in range(repeat))
        results[name] = best
    print(json.dumps({"numba": NUMBA_ENABLED, "results": results}))


def _timed(fn):
    start = time.perf_counter()
    fn()
    return time.perf_counter() - start


def _spawn(disable, repeat):
    env = dict(os.environ)
    env.pop("STANCEKIT_DISABLE_NUMBA", None)
    if disable:
        env["STANCEKIT_DISABLE_NUMBA"] = "1"
    proc = subprocess.run(
        [sys.executable, os.path.abspath(__file__), "--inner", "--repeat", str(repeat)],
        env=env, capture_output=True, text=True, check=True)
    return json.loads(proc.stdout.splitlines()[-1])


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3,
                        help="timed repetitions per workload (best is kept)")
    parser.add_argument("--inner", action="store_true", help=argparse.SUPPRESS)
    args = parser.parse_args(argv)
    if args.inner:
        run_inner(args.repeat)
        return 0

    fast = _spawn(disable=False, repeat=args.repeat)
    slow = _spawn(disable=True, repeat=args.repeat)
    if not fast["numba"]:
        print("note: numba is not importable here; both columns run the fallback")
    width = max(len(n) for n in fast["results"])
    print(f"{'workload':<{width}}  {'jitted':>10}  {'fallback':>10}  {'speedup':>8}")
    for name, t_fast in fast["results"].items():
        t_slow = slow["results"][name]
        print(f"{name:<{width}}  {t_fast:>9.3f}s  {t_slow:>9.3f}s  "
              f"{t_slow / t_fast:>7.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
