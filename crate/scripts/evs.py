"""Minimal EVS1 writer shared by the dataset converters.

Layout (little endian): b"EVS1", u32 width, u32 height, u32 label
(0xFFFFFFFF = none), u64 count, then count records of u64 t (us), u16 x,
u16 y, u8 p. Records must be sorted by t.
"""

import os
import struct

import numpy as np

RECORD = np.dtype([("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "u1")])


def write_evs(path, t, x, y, p, width, height, label=None):
    order = np.argsort(t, kind="stable")
    rec = np.empty(len(t), dtype=RECORD)
    rec["t"], rec["x"], rec["y"], rec["p"] = t[order], x[order], y[order], p[order]
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "wb") as f:
        lab = 0xFFFFFFFF if label is None else int(label)
        f.write(b"EVS1" + struct.pack("<IIIQ", width, height, lab, len(rec)))
        f.write(rec.tobytes())


class Manifest:
    def __init__(self, root):
        self.root = root
        self.lines = []

    def add(self, split, rel):
        self.lines.append(f"{split} {rel}")

    def save(self):
        with open(os.path.join(self.root, "manifest.txt"), "w") as f:
            f.write("\n".join(self.lines) + "\n")
