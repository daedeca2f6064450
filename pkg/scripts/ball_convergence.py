#!/usr/bin/env python3
"""Eigenvalue convergence study on the unit ball.

Solves the axisymmetric-sector first eigenvalue on a refinement sequence,
prints the error table against the spheromak value (smallest positive root
of tan x = x), and the Richardson-extrapolated result.
"""

import argparse

import numpy as np

from curlopt import geometry as geo
from curlopt import gs_solver as gs
from curlopt import meshing as msh


def bisect(f, lo, hi, iters=200):
    flo = f(lo)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if flo * f(mid) <= 0:
            hi = mid
        else:
            lo, flo = mid, f(mid)
    return 0.5 * (lo + hi)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--h", type=float, default=0.1, help="coarsest mesh size")
    ap.add_argument("--levels", type=int, default=4)
    args = ap.parse_args()

    oracle = bisect(lambda x: np.tan(x) - x, np.pi + 0.2, 1.5 * np.pi - 1e-9)
    print(f"oracle mu1 (tan x = x): {oracle:.12f}\n")

    ball = geo.domain_from_spec({
        "kind": "axis_touching",
        "boundary": {"type": "circle", "center_z": 0.0, "center_r": 0.0,
                     "radius": 1.0}})
    mesh = msh.mesh_section(ball, args.h)
    mus = []
    print(f"{'h':>9} {'ndof':>7} {'mu1':>14} {'error':>11} {'rate':>6}")
    for lev in range(args.levels):
        forms = gs.assemble(mesh)
        sol = gs.solve(forms)
        mus.append(sol.mu1)
        rate = (np.log2((mus[-3] - mus[-2]) / (mus[-2] - mus[-1]))
                if lev >= 2 else float("nan"))
        print(f"{mesh.h:9.4f} {forms.n_dof:7d} {sol.mu1:14.8f} "
              f"{sol.mu1 - oracle:11.2e} {rate:6.2f}")
        if lev + 1 < args.levels:
            mesh = msh.refine(mesh)

    mu_ext = mus[-1] + (mus[-1] - mus[-2]) / 3.0
    print(f"\nRichardson extrapolation: {mu_ext:.8f} "
          f"(error {mu_ext - oracle:+.2e})")


if __name__ == "__main__":
    main()
