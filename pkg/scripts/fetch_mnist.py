"""Write MNIST as gzipped IDX files under ``data/mnist/``.

Pulls the pickled MNIST split bundled in the ``mnist-hub`` wheel from PyPI
(ranged requests, so flaky proxies that drop long transfers still work) and
converts it to the canonical four IDX files. Train = the pickle's train +
validation parts (60,000 images), test = its test part (10,000 images).

    python scripts/fetch_mnist.py [--wheel path/to/mnist_hub.whl] [--out data/mnist]
"""
import argparse
import gzip
import io
import pickle
import urllib.request
import zipfile
from pathlib import Path

import numpy as np

from infoacq.datasets import write_idx

WHEEL_URL = ("https://files.pythonhosted.org/packages/16/ee/"
             "c214691a43f7775e542b2a2fa974462139fe249dccb2bff7bcdc8888cfa3/"
             "mnist_hub-0.1.4-py3-none-any.whl")
WHEEL_SIZE = 20_279_490
CHUNK = 1_000_000


def download(url=WHEEL_URL, size=WHEEL_SIZE, retries=5) -> bytes:
    parts = []
    for start in range(0, size, CHUNK):
        end = min(start + CHUNK, size) - 1
        for attempt in range(retries):
            try:
                req = urllib.request.Request(url, headers={"Range": f"bytes={start}-{end}"})
                with urllib.request.urlopen(req, timeout=60) as resp:
                    parts.append(resp.read())
                break
            except OSError:
                if attempt == retries - 1:
                    raise
        print(f"\r{end + 1}/{size} bytes", end="", flush=True)
    print()
    return b"".join(parts)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--wheel", help="use an already downloaded mnist-hub wheel")
    parser.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "data" / "mnist"))
    args = parser.parse_args()

    blob = Path(args.wheel).read_bytes() if args.wheel else download()
    with zipfile.ZipFile(io.BytesIO(blob)) as z:
        raw = gzip.decompress(z.read("mnist/data/mnist.pkl.gz"))
    train, valid, test = pickle.loads(raw, encoding="latin1")

    def to_uint8(x):
        # Stored as byte / 256.
        return np.rint(np.asarray(x, dtype=np.float64) * 256).astype(np.uint8).reshape(-1, 28, 28)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    splits = {
        "train": (np.concatenate([train[0], valid[0]]), np.concatenate([train[1], valid[1]])),
        "t10k": test,
    }
    for name, (x, y) in splits.items():
        img, lab = out / f"{name}-images-idx3-ubyte", out / f"{name}-labels-idx1-ubyte"
        write_idx(to_uint8(x), np.asarray(y), img, lab)
        for path in (img, lab):
            Path(f"{path}.gz").write_bytes(gzip.compress(path.read_bytes(), mtime=0))
            path.unlink()
        print(f"{name}: {len(y)} examples -> {img}.gz")


if __name__ == "__main__":
    main()
