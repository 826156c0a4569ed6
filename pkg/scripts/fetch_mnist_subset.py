"""Export the MNIST sample bundled with mlxtend to IDX files under data/mnist.

Usage: python3 scripts/fetch_mnist_subset.py [OUT_DIR] [N_TRAIN]
"""

import sys
from pathlib import Path

from splinelc.learn.datasets import export_mlxtend_mnist


def main(argv):
    out = Path(argv[1]) if len(argv) > 1 else Path(__file__).resolve().parents[1] / "data" / "mnist"
    n_train = int(argv[2]) if len(argv) > 2 else 1000
    for name, path in export_mlxtend_mnist(out, n_train=n_train).items():
        print(f"{name}: {path}")


if __name__ == "__main__":
    main(sys.argv)
