#!/usr/bin/env python3
"""Volume lower bound vs. measured eigenvalue over a small family of domains.

For every domain: mu1 >= (4 pi / (3 |Omega|))^(1/3), with the slack
reported; also the Biot-Savart norm ratio ||BS u1|| / ||u1|| against its
bound (3 |Omega| / 4 pi)^(1/3) on a voxelized eigenfield.
"""

import argparse

from curlopt import bounds as bd
from curlopt import field_recon as fr
from curlopt import geometry as geo
from curlopt import gs_solver as gs
from curlopt import meshing as msh

FAMILY = [
    ("ball", {"kind": "axis_touching",
              "boundary": {"type": "circle", "center_z": 0.0, "center_r": 0.0,
                           "radius": 1.0}}),
    ("torus R3 a1", {"kind": "toroidal",
                     "boundary": {"type": "circle", "center_z": 0.0,
                                  "center_r": 3.0, "radius": 1.0}}),
    ("torus R2 a0.7", {"kind": "toroidal",
                       "boundary": {"type": "circle", "center_z": 0.0,
                                    "center_r": 2.0, "radius": 0.7}}),
    ("torus R4 a1", {"kind": "toroidal",
                     "boundary": {"type": "circle", "center_z": 0.0,
                                  "center_r": 4.0, "radius": 1.0}}),
    ("fourier torus", {"kind": "toroidal",
                       "boundary": {"type": "fourier", "center_z": 0.0,
                                    "center_r": 3.0, "radius": 1.0,
                                    "modes": [[0.0, 0.0], [0.08, 0.0],
                                              [0.0, 0.05]]}}),
]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--h", type=float, default=0.1)
    ap.add_argument("--grid", type=int, default=20, help="voxel grid per axis")
    args = ap.parse_args()

    print(f"{'domain':>14} {'volume':>9} {'bound':>8} {'mu1':>9} {'slack':>8} "
          f"{'bs_ratio':>9} {'bs_bound':>9}")
    for name, spec in FAMILY:
        dom = geo.domain_from_spec(spec)
        vol = geo.volume(dom)
        mesh = msh.mesh_section(dom, args.h)
        sol = gs.solve(gs.assemble(mesh))
        rep = bd.bound_report(vol, sol.mu1)
        ef = fr.reconstruct(sol, mesh)
        vox = bd.rasterize_eigenfield(mesh, ef, args.grid)
        nb = bd.verify_bs_norm_bound(vox, volume=vol)
        flag = "" if rep.slack > 0 and nb.passed else "  <-- VIOLATION"
        print(f"{name:>14} {vol:9.3f} {rep.bound:8.4f} {rep.mu1_measured:9.5f} "
              f"{rep.slack:8.4f} {nb.ratio:9.4f} {nb.bound:9.4f}{flag}")


if __name__ == "__main__":
    main()
