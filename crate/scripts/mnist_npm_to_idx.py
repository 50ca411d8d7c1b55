#!/usr/bin/env python3
"""Convert the digit JSON files shipped in the npm `mnist` package into IDX files.

The package stores 28x28 MNIST digits as 784 floats rounded to three decimals
(byte / 255). round(v * 255) recovers the original byte exactly, so the output
is a faithful IDX container:

    <out>/images-idx3-ubyte   magic 2051, n, 28, 28, pixels
    <out>/labels-idx1-ubyte   magic 2049, n, labels

Usage: mnist_npm_to_idx.py <path/to/package/src/digits> <out_dir>
"""
import json
import os
import struct
import sys


def main():
    if len(sys.argv) != 3:
        sys.exit(__doc__)
    src, out = sys.argv[1], sys.argv[2]
    os.makedirs(out, exist_ok=True)
    images = bytearray()
    labels = bytearray()
    for digit in range(10):
        with open(os.path.join(src, f"{digit}.json")) as fh:
            data = json.load(fh)["data"]
        if len(data) % 784:
            sys.exit(f"{digit}.json: length {len(data)} is not a multiple of 784")
        for i in range(0, len(data), 784):
            images.extend(int(round(v * 255)) for v in data[i:i + 784])
            labels.append(digit)
    n = len(labels)
    with open(os.path.join(out, "images-idx3-ubyte"), "wb") as fh:
        fh.write(struct.pack(">IIII", 2051, n, 28, 28))
        fh.write(images)
    with open(os.path.join(out, "labels-idx1-ubyte"), "wb") as fh:
        fh.write(struct.pack(">II", 2049, n))
        fh.write(labels)
    print(f"wrote {n} images to {out}")


if __name__ == "__main__":
    main()
