"""Time the compiled kernels against the numpy fallback.

The last column names the implementation ``eigopt._core`` dispatches to.

Usage: python3 benchmarks/bench_kernels.py [--cells 80 80] [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from eigopt import _core
from eigopt._core import BACKEND, _fallback
from eigopt.assembly_eig import mesh_unit_matrices
from eigopt.mesh import build_grid

try:
    from eigopt._core import _kernels
except ImportError:
    _kernels = None


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--cells", type=int, nargs="+", default=[80, 80])
    ap.add_argument("--rmin", type=float, default=0.15)
    ap.add_argument("--vectors", type=int, default=16)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    dim = len(args.cells)
    mesh = build_grid(dim, args.cells, [c * 0.05 for c in args.cells])
    spacing = [s / c for s, c in zip(mesh.lengths, mesh.cells)]
    unit = mesh_unit_matrices(mesh, 0.3)
    rng = np.random.default_rng(0)
    ue = rng.standard_normal((args.vectors, mesh.n_elements, unit.K.shape[0]))

    cases = {
        "filter_triplets": lambda mod: mod.filter_triplets(mesh.cells, spacing, mesh.volumes, args.rmin),
        "element_energies": lambda mod: mod.element_energies(ue, unit.K),
    }
    print(f"active backend: {BACKEND}; mesh {args.cells}, {mesh.n_elements} elements")
    print(f"{'kernel':18s} {'numpy [ms]':>11s} {'cython [ms]':>12s} {'speedup':>8s}  used")
    for name, call in cases.items():
        used = "numpy" if getattr(_core, name) is getattr(_fallback, name) else "cython"
        t_py = min(timeit.repeat(lambda: call(_fallback), number=1, repeat=args.repeat)) * 1e3
        if _kernels is None:
            print(f"{name:18s} {t_py:11.2f} {'n/a':>12s} {'n/a':>8s}  {used}")
            continue
        t_cy = min(timeit.repeat(lambda: call(_kernels), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:18s} {t_py:11.2f} {t_cy:12.2f} {t_py / t_cy:7.2f}x  {used}")


if __name__ == "__main__":
    main()
