"""Convert SHD (shd_train.h5, shd_test.h5) to EVS1, one row of 700 channels.

    python scripts/shd_to_evs.py /path/to/shd $LSM_DATA_ROOT/shd

Requires h5py. Spike times are seconds in the release and become
microseconds; every spike gets polarity 1.
"""

import os
import sys

import h5py
import numpy as np

from evs import Manifest, write_evs


def main(src, dst):
    manifest = Manifest(dst)
    for split in ("train", "test"):
        with h5py.File(os.path.join(src, f"shd_{split}.h5"), "r") as f:
            times, units, labels = f["spikes"]["times"], f["spikes"]["units"], f["labels"][:]
            for i in range(len(labels)):
                t = np.round(np.asarray(times[i]) * 1e6).astype(np.uint64)
                x = np.asarray(units[i]).astype(np.uint16)
                zeros = np.zeros_like(x)
                rel = f"{split}/{i:05d}.evs"
                write_evs(os.path.join(dst, rel), t, x, zeros, np.ones_like(x, dtype=np.uint8), 700, 1, labels[i])
                manifest.add(split, rel)
    manifest.save()


if __name__ == "__main__":
    main(*sys.argv[1:3])
