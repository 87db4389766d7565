"""Convert DVSGesture to EVS1 through tonic's loader.

    python scripts/dvsgesture_to_evs.py /path/to/cache $LSM_DATA_ROOT/dvsgesture

Requires tonic (downloads the dataset into the cache directory on first use).
"""

import os
import sys

import numpy as np
import tonic

from evs import Manifest, write_evs


def main(cache, dst):
    manifest = Manifest(dst)
    for split, train in (("train", True), ("test", False)):
        ds = tonic.datasets.DVSGesture(save_to=cache, train=train)
        for i in range(len(ds)):
            ev, label = ds[i]
            t = ev["t"].astype(np.int64)
            t = (t - t.min()).astype(np.uint64)
            rel = f"{split}/{i:05d}.evs"
            write_evs(os.path.join(dst, rel), t, ev["x"].astype(np.uint16), ev["y"].astype(np.uint16),
                      ev["p"].astype(np.uint8), 128, 128, label)
            manifest.add(split, rel)
    manifest.save()


if __name__ == "__main__":
    main(*sys.argv[1:3])
