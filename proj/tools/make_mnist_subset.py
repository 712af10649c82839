#!/usr/bin/env python3
"""Write the 5,000-image MNIST subset shipped with mlxtend as IDX files.

Images are 2x2 mean-pooled from 28x28 to 14x14 and split per class into
400 training and 100 test images with a fixed seed, so the output is
reproducible. Requires `pip install mlxtend`.
"""
import argparse
import pathlib
import struct

import numpy as np
from mlxtend.data import mnist_data


def write_images(path, images):
    count, rows, cols = images.shape
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, count, rows, cols))
        f.write(images.astype(np.uint8).tobytes())


def write_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(labels.astype(np.uint8).tobytes())


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default=str(pathlib.Path(__file__).resolve().parent.parent / "data"))
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--test-per-class", type=int, default=100)
    args = parser.parse_args()

    features, labels = mnist_data()
    images = features.reshape(-1, 28, 28)
    pooled = images.reshape(-1, 14, 2, 14, 2).mean(axis=(2, 4))
    pooled = np.rint(pooled).clip(0, 255).astype(np.uint8)
    labels = labels.astype(np.uint8)

    rng = np.random.default_rng(args.seed)
    train_idx, test_idx = [], []
    for c in range(10):
        idx = np.flatnonzero(labels == c)
        rng.shuffle(idx)
        test_idx.extend(idx[: args.test_per_class])
        train_idx.extend(idx[args.test_per_class:])
    train_idx = np.sort(np.array(train_idx))
    test_idx = np.sort(np.array(test_idx))

    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_images(out / "mnist14-train-images-idx3-ubyte", pooled[train_idx])
    write_labels(out / "mnist14-train-labels-idx1-ubyte", labels[train_idx])
    write_images(out / "mnist14-test-images-idx3-ubyte", pooled[test_idx])
    write_labels(out / "mnist14-test-labels-idx1-ubyte", labels[test_idx])
    print(f"train={len(train_idx)} test={len(test_idx)} -> {out}")


if __name__ == "__main__":
    main()
