#!/usr/bin/env python3
"""Build gzip IDX MNIST files from the npm `mnist` package tarball.

The package ships 10,000 real MNIST digits as per-class JSON arrays of
pixel values in [0, 1]. Each class is split 80/20 into train/test, both
sets are shuffled with a fixed seed, and the result is written as

    train-images-idx3-ubyte.gz  train-labels-idx1-ubyte.gz
    t10k-images-idx3-ubyte.gz   t10k-labels-idx1-ubyte.gz

Usage: mnist_from_npm.py [--tarball mnist-1.1.0.tgz] [--out data/mnist]
(`npm pack mnist@1.1.0` fetches the tarball.)
"""

import argparse
import gzip
import json
import random
import struct
import tarfile
from pathlib import Path

SIDE = 28
PIXELS = SIDE * SIDE


def load_digits(tarball):
    per_class = {}
    with tarfile.open(tarball, "r:gz") as tar:
        for label in range(10):
            member = tar.getmember(f"package/src/digits/{label}.json")
            values = json.load(tar.extractfile(member))["data"]
            count = len(values) // PIXELS
            per_class[label] = [
                bytes(round(v * 255) for v in values[i * PIXELS:(i + 1) * PIXELS]) for i in range(count)
            ]
    return per_class


def write_gz(path, payload):
    # mtime=0 keeps the archive bytes reproducible.
    with open(path, "wb") as raw, gzip.GzipFile(fileobj=raw, mode="wb", mtime=0, filename="") as gz:
        gz.write(payload)


def write_idx(out_dir, prefix, rows):
    images = struct.pack(">IIII", 0x00000803, len(rows), SIDE, SIDE) + b"".join(img for img, _ in rows)
    labels = struct.pack(">II", 0x00000801, len(rows)) + bytes(label for _, label in rows)
    write_gz(out_dir / f"{prefix}-images-idx3-ubyte.gz", images)
    write_gz(out_dir / f"{prefix}-labels-idx1-ubyte.gz", labels)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--tarball", default="/tmp/mnist-1.1.0.tgz")
    ap.add_argument("--out", default="data/mnist")
    ap.add_argument("--train-fraction", type=float, default=0.8)
    ap.add_argument("--seed", type=int, default=20240501)
    args = ap.parse_args()

    per_class = load_digits(args.tarball)
    train, test = [], []
    for label, images in per_class.items():
        cut = round(len(images) * args.train_fraction)
        train += [(img, label) for img in images[:cut]]
        test += [(img, label) for img in images[cut:]]
    rng = random.Random(args.seed)
    rng.shuffle(train)
    rng.shuffle(test)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_idx(out, "train", train)
    write_idx(out, "t10k", test)
    print(f"wrote {len(train)} train / {len(test)} test images to {out}")


if __name__ == "__main__":
    main()
