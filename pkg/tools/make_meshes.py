"""Generate the placeholder binary STL meshes shipped with the scene.

Usage: python tools/make_meshes.py [outdir]
"""
import os
import sys

import numpy as np

from tmsnav.scene.stl import write_binary_stl

# (half extents mm, centre offset mm)
BOXES = {
    "robot_base": ((80, 80, 60), (0, 0, 60)),
    "flange": ((40, 40, 10), (0, 0, -10)),
    "coil": ((70, 35, 12), (0, 0, 0)),
    "tag": ((25, 25, 2), (0, 0, 0)),
    "head": ((75, 95, 110), (0, 0, 0)),
    "stylus": ((6, 6, 60), (0, 0, -50)),
}


def box(half, centre):
    hx, hy, hz = half
    c = np.asarray(centre, dtype=float)
    v = np.array([[sx * hx, sy * hy, sz * hz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)]) + c
    faces = [(0, 1, 3, 2), (4, 6, 7, 5), (0, 4, 5, 1), (2, 3, 7, 6), (0, 2, 6, 4), (1, 5, 7, 3)]
    tris = []
    for a, b, cc, d in faces:
        tris += [(v[a], v[b], v[cc]), (v[a], v[cc], v[d])]
    return np.array(tris)


def main(outdir):
    os.makedirs(outdir, exist_ok=True)
    for name, (half, centre) in BOXES.items():
        write_binary_stl(os.path.join(outdir, name + ".stl"), box(half, centre))


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else
         os.path.join(os.path.dirname(__file__), "..", "src", "tmsnav", "data", "meshes"))
