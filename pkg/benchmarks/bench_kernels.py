"""Compare the compiled and pure-Python kernel backends.

    python benchmarks/bench_kernels.py [--repeat 5]

Prints the best wall time per kernel and backend, the speed-up, and the max
absolute difference between the backends' outputs.
"""

import argparse
import time

import numpy as np

from symmatch._kernels import available_backends, dijkstra, nearest_rows, pairwise_dist
from symmatch.geom import gen_shape
from symmatch.geom.geodesic import build_graph, knn_edges


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def cases(n_points, k):
    rng = np.random.default_rng(0)
    a = rng.normal(size=(n_points, k))
    b = rng.normal(size=(n_points, k))
    cloud, _ = gen_shape(0, 1, n_points)
    rows, cols = knn_edges(cloud.coords, 8)
    g = build_graph(cloud.coords, rows, cols)
    sources = np.linspace(0, n_points - 1, 16).astype(np.int64)
    return {
        f"pairwise_dist {n_points}x{n_points}x{k}": lambda be: pairwise_dist(a, b, backend=be),
        f"nearest_rows {n_points}x{n_points}x{k}": lambda be: nearest_rows(a, b, backend=be),
        f"dijkstra n={n_points}, 16 sources": lambda be: dijkstra(g.indptr, g.indices, g.data, sources, backend=be),
    }


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--points", type=int, default=2048)
    p.add_argument("--k", type=int, default=24)
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)
    backends = available_backends()
    if "cython" not in backends:
        print("compiled kernels not built; timing the pure-Python backend only")
    print(f"{'kernel':40s} " + " ".join(f"{b:>10s}" for b in backends) + "   speed-up   max |diff|")
    for name, fn in cases(args.points, args.k).items():
        res = {b: best_of(lambda: fn(b), args.repeat) for b in backends}
        line = f"{name:40s} " + " ".join(f"{res[b][0] * 1e3:8.2f}ms" for b in backends)
        if len(backends) == 2:
            diff = float(np.max(np.abs(np.asarray(res["python"][1], float) - np.asarray(res["cython"][1], float))))
            line += f"   {res['python'][0] / res['cython'][0]:7.1f}x   {diff:.1e}"
        print(line)


if __name__ == "__main__":
    main()
