"""
Repeated MNIST from IDX files
=============================

Load MNIST (fetch it first with scripts/fetch_mnist.py), build a two-copy
pool with Gaussian pixel noise, and check that no two rows coincide.
"""

import sys
from pathlib import Path

from infoacq.datasets import duplicate_pairs, load_idx, make_repeated, subsample

root = Path(__file__).resolve().parents[1] / "data" / "mnist"
if not (root / "train-images-idx3-ubyte.gz").exists():
    sys.exit("MNIST not found; run scripts/fetch_mnist.py first")

mnist = load_idx(root / "train-images-idx3-ubyte.gz", root / "train-labels-idx1-ubyte.gz")
print("train set:", mnist.inputs.shape, "pixel range", mnist.inputs.min(), mnist.inputs.max())

small = subsample(mnist, 5000, rng=0)
exact = make_repeated(small, 2, 0.0, rng=0)
noisy = make_repeated(small, 2, 0.1, rng=0)
print("pool size:", len(noisy))
print("duplicate pairs with sigma=0:  ", len(duplicate_pairs(exact.inputs)))
print("duplicate pairs with sigma=0.1:", len(duplicate_pairs(noisy.inputs)))
