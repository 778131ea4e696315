#!/usr/bin/env python3
"""Emit the two in-repo maps (foyer, lab) as ASCII occupancy grids.

20 x 15 m at 0.1 m resolution. Door and pillar topology is hand-placed:
two halls joined by doorways for the foyer, two rooms with benches for the
lab. Run from the repo root: python3 tools/make_maps.py
"""
from pathlib import Path

import numpy as np

W, H = 200, 150   # cells; x = cols, y = rows
RES = 0.1


def blank():
    occ = np.zeros((H, W), dtype=bool)
    occ[0, :] = occ[-1, :] = True
    occ[:, 0] = occ[:, -1] = True
    return occ


def rect(occ, c0, c1, r0, r1):
    occ[r0:r1, c0:c1] = True


def foyer():
    occ = blank()
    # dividing wall at y = 5 m with two 2 m doorways
    rect(occ, 1, 199, 50, 52)
    occ[50:52, 50:70] = False
    occ[50:52, 130:150] = False
    # pillars in the main hall
    for cx in (50, 100, 150):
        rect(occ, cx - 2, cx + 2, 98, 102)
    # one pillar in the entry hall
    rect(occ, 98, 102, 23, 27)
    # short wall stubs flanking the main hall (alcoves)
    rect(occ, 1, 30, 110, 112)
    rect(occ, 170, 199, 110, 112)
    return occ


def lab():
    occ = blank()
    # dividing wall at x = 10 m with two doorways
    rect(occ, 100, 102, 1, 149)
    occ[30:50, 100:102] = False
    occ[100:120, 100:102] = False
    # benches
    rect(occ, 20, 26, 60, 90)       # left room, vertical bench
    rect(occ, 120, 160, 20, 26)     # right room, top bench
    rect(occ, 130, 170, 120, 126)   # right room, bottom bench
    rect(occ, 40, 80, 20, 26)       # left room, top bench
    # pillars
    rect(occ, 48, 52, 118, 122)
    rect(occ, 148, 152, 73, 77)
    return occ


def write(occ, path):
    lines = [f"resolution {RES}"]
    for r in range(occ.shape[0]):
        lines.append("".join("#" if occ[r, c] else "." for c in range(occ.shape[1])))
    Path(path).write_text("\n".join(lines) + "\n")
    print(f"{path}: {occ.sum()} occupied / {occ.size} cells")


if __name__ == "__main__":
    out = Path(__file__).resolve().parent.parent / "src" / "socnav" / "maps"
    out.mkdir(parents=True, exist_ok=True)
    write(foyer(), out / "foyer.map")
    write(lab(), out / "lab.map")
