"""Convert the N-MNIST release (Train/<digit>/*.bin, Test/<digit>/*.bin) to EVS1.

    python scripts/nmnist_to_evs.py /path/to/N-MNIST $LSM_DATA_ROOT/nmnist

Each .bin record is 5 bytes: x, y, then polarity (top bit) and a 23-bit
microsecond timestamp.
"""

import os
import sys

import numpy as np

from evs import Manifest, write_evs


def read_bin(path):
    raw = np.fromfile(path, dtype=np.uint8).reshape(-1, 5).astype(np.uint32)
    x, y = raw[:, 0], raw[:, 1]
    p = raw[:, 2] >> 7
    t = ((raw[:, 2] & 0x7F) << 16) | (raw[:, 3] << 8) | raw[:, 4]
    return t.astype(np.uint64), x, y, p


def main(src, dst):
    manifest = Manifest(dst)
    for split, folder in (("train", "Train"), ("test", "Test")):
        for digit in range(10):
            d = os.path.join(src, folder, str(digit))
            for name in sorted(os.listdir(d)):
                if not name.endswith(".bin"):
                    continue
                t, x, y, p = read_bin(os.path.join(d, name))
                rel = f"{split}/{digit}/{name[:-4]}.evs"
                write_evs(os.path.join(dst, rel), t, x, y, p, 34, 34, digit)
                manifest.add(split, rel)
    manifest.save()


if __name__ == "__main__":
    main(*sys.argv[1:3])
