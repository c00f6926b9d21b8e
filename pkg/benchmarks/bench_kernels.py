"""Compare the compiled and numpy viscous element kernels.

Usage: python benchmarks/bench_kernels.py [--nx 32 --nz 16 --repeat 5]
"""
import argparse
import timeit

import numpy as np

from shearthin import kernels
from shearthin.discretization import build_space
from shearthin.geometry import ThinDomain, build_thin_mesh


def inputs(nx, nz, seed=0):
    space = build_space(build_thin_mesh(ThinDomain.constant(1.0, 0.5), nx, nz))
    rng = np.random.default_rng(seed)
    nc = len(space.cell_dofs)
    ctot = rng.normal(size=(nc, 12))
    cbar = rng.normal(size=(nc, 12))
    amp = rng.uniform(0, 1, size=space.qweights.shape)
    return space.strain_basis, space.qweights, ctot, cbar, amp


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nx", type=int, default=32)
    ap.add_argument("--nz", type=int, default=16)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    G, w, ctot, cbar, amp = inputs(args.nx, args.nz)
    const = (1.0, 1.5, 1e-2, 3.0, 1e-8)
    compiled = kernels._load_compiled()
    variants = {"numpy": kernels.viscous_element_numpy}
    if compiled is not None:
        variants["cython"] = lambda *a: compiled.viscous_element(*a)
    print(f"cells = {len(ctot)}, quadrature points per cell = {w.shape[1]}")
    results = {}
    for name, fn in variants.items():
        for jac in (False, True):
            call = lambda: fn(G, w, ctot, cbar, amp, *const, jac)
            best = min(timeit.repeat(call, number=1, repeat=args.repeat))
            results[(name, jac)] = (best, call())
            print(f"{name:<7} jacobian={str(jac):<5} best of {args.repeat}: {1e3 * best:8.2f} ms")
    if compiled is not None:
        for jac in (False, True):
            (tn, rn), (tc, rc) = results[("numpy", jac)], results[("cython", jac)]
            diff = np.max(np.abs(rn[0] - rc[0]))
            if jac:
                diff = max(diff, np.max(np.abs(rn[1] - rc[1])))
            print(f"jacobian={jac}: speedup {tn / tc:.1f}x, max abs difference {diff:.2e}")
    else:
        print("compiled extension not available; only the numpy kernel was timed")


if __name__ == "__main__":
    main()
