"""Write the 5000-digit MNIST subset bundled in the mlxtend wheel as IDX files.

    pip download mlxtend==0.24.0 --no-deps -d /tmp/wheels
    python scripts/fetch_mnist_subset.py /tmp/wheels/mlxtend-0.24.0-py3-none-any.whl data/

Produces ``mnist5k-images-idx3-ubyte`` and ``mnist5k-labels-idx1-ubyte``.
"""

import argparse
import gzip
import io
import os
import zipfile

import numpy as np

from gsnlab.datasets import write_idx

MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("wheel")
    ap.add_argument("out_dir")
    args = ap.parse_args()
    with zipfile.ZipFile(args.wheel) as z:
        raw = gzip.decompress(z.read(MEMBER))
    arr = np.loadtxt(io.BytesIO(raw), delimiter=",", dtype=np.int64)
    images = arr[:, :784].reshape(-1, 28, 28).astype(np.uint8)
    labels = arr[:, 784].astype(np.uint8)
    os.makedirs(args.out_dir, exist_ok=True)
    write_idx(os.path.join(args.out_dir, "mnist5k-images-idx3-ubyte"), images)
    write_idx(os.path.join(args.out_dir, "mnist5k-labels-idx1-ubyte"), labels)
    print(f"wrote {len(images)} images, label counts {np.bincount(labels).tolist()}")


if __name__ == "__main__":
    main()
