#!/usr/bin/env python
"""Time the numba kernels against the numpy fallbacks.

Covers the two hot loops: exact ball masses (all vertices x a radius
schedule) and the farthest-pair search. Each row also reports the largest
difference between the two backends.

Usage:
    python benchmarks/bench_kernels.py
    python benchmarks/bench_kernels.py --subdivs 3 4 5 6 --repeat 3 --output bench.json
"""
import argparse
import json
import time

import numpy as np

from varifold_lab import _accel, zoo
from varifold_lab.mesh import ball_masses, diameter
from varifold_lab.monotonicity import default_radii


def best_of(fn, repeat):
    times, out = [], None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def bench_mesh(subdiv, repeat, max_numpy_vertices):
    v = zoo.generate(zoo.ZooSpec("perturbed_sphere", {"subdiv": subdiv, "eps": 0.05}))
    radii = default_radii(v)
    rows = []
    cases = {
        "ball_masses": lambda b: ball_masses(v, v.vertices, radii, backend=b),
        "diameter": lambda b: np.array(diameter(v, backend=b)[0]),
    }
    for name, fn in cases.items():
        fn("numba")  # compile outside the timing
        t_nb, r_nb = best_of(lambda: fn("numba"), repeat)
        if v.n_vertices <= max_numpy_vertices:
            t_np, r_np = best_of(lambda: fn("numpy"), repeat)
            diff = float(np.max(np.abs(r_nb - r_np)))
        else:
            t_np, diff = float("nan"), float("nan")
        rows.append({"kernel": name, "subdiv": subdiv, "n_vertices": v.n_vertices,
                     "numba_s": t_nb, "numpy_s": t_np, "speedup": t_np / t_nb, "max_abs_diff": diff})
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--subdivs", type=int, nargs="+", default=[3, 4])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--threads", type=int, default=None)
    ap.add_argument("--max-numpy-vertices", type=int, default=50_000,
                    help="skip the numpy path above this size")
    ap.add_argument("--output", help="write rows as JSON")
    args = ap.parse_args(argv)

    if not _accel.HAVE_NUMBA:
        raise SystemExit("numba is not importable; nothing to compare")
    _accel.set_num_threads(args.threads)

    rows = []
    print(f"{'kernel':<12} {'subdiv':>6} {'verts':>7} {'numba s':>9} {'numpy s':>9} {'speedup':>8} {'max diff':>10}")
    for k in args.subdivs:
        for r in bench_mesh(k, args.repeat, args.max_numpy_vertices):
            rows.append(r)
            print(f"{r['kernel']:<12} {r['subdiv']:>6} {r['n_vertices']:>7} {r['numba_s']:>9.4f} "
                  f"{r['numpy_s']:>9.4f} {r['speedup']:>8.1f} {r['max_abs_diff']:>10.2e}", flush=True)
    if args.output:
        with open(args.output, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
