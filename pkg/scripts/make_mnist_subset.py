"""Build the bundled MNIST subset from the 5000-sample CSV shipped in mlxtend.

    pip download --no-deps mlxtend -d /tmp/wheels
    python scripts/make_mnist_subset.py /tmp/wheels/mlxtend-*.whl data/mnist-subset

The 500-per-class samples are shuffled with a fixed seed and split into
4000 training and 1000 test images, written as gzipped IDX files under the
usual MNIST file names.
"""
import argparse
import gzip
import io
import zipfile
from pathlib import Path

import numpy as np

from securedl.learning import MNIST_FILES, write_idx

MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("wheel")
    parser.add_argument("out_dir")
    parser.add_argument("--n-test", type=int, default=1000)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    raw = gzip.decompress(zipfile.ZipFile(args.wheel).read(MEMBER))
    table = np.loadtxt(io.BytesIO(raw), delimiter=",", dtype=np.int64)
    images = table[:, :-1].astype(np.uint8).reshape(-1, 28, 28)
    labels = table[:, -1].astype(np.uint8)
    order = np.random.default_rng(args.seed).permutation(len(labels))
    test, train = order[: args.n_test], order[args.n_test:]

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for split, idx in (("train", train), ("test", test)):
        img_name, lbl_name = MNIST_FILES[split]
        write_idx(out / f"{img_name}.gz", images[idx])
        write_idx(out / f"{lbl_name}.gz", labels[idx])
        print(f"{split}: {len(idx)} samples")


if __name__ == "__main__":
    main()
