#!/usr/bin/env python3
"""Build IDX-format MNIST files from the digits bundled in the npm `mnist` package.

The npm package ships 10,000 MNIST digits as per-class JSON arrays of
784 floats in [0, 1] (rounded to three decimals). This script shuffles them
with a fixed seed and writes an 8000/2000 train/test split in the standard
IDX layout (big-endian magic, counts, dims, then raw u8 payload).

Usage:
    npm pack mnist && tar xzf mnist-*.tgz
    python3 scripts/mnist_from_npm.py package/src/digits data/mnist
"""
import json
import random
import struct
import sys
from pathlib import Path


def main(src: Path, dst: Path, n_train: int = 8000) -> None:
    samples = []
    for label in range(10):
        flat = json.loads((src / f"{label}.json").read_text())["data"]
        assert len(flat) % 784 == 0
        for i in range(len(flat) // 784):
            pix = bytes(min(255, max(0, round(v * 255))) for v in flat[i * 784:(i + 1) * 784])
            samples.append((pix, label))
    random.Random(20171101).shuffle(samples)
    dst.mkdir(parents=True, exist_ok=True)
    splits = {"train": samples[:n_train], "t10k": samples[n_train:]}
    for name, part in splits.items():
        with open(dst / f"{name}-images-idx3-ubyte", "wb") as f:
            f.write(struct.pack(">IIII", 2051, len(part), 28, 28))
            for pix, _ in part:
                f.write(pix)
        with open(dst / f"{name}-labels-idx1-ubyte", "wb") as f:
            f.write(struct.pack(">II", 2049, len(part)))
            f.write(bytes(label for _, label in part))
        print(f"{name}: {len(part)} samples")


if __name__ == "__main__":
    main(Path(sys.argv[1]), Path(sys.argv[2]))
