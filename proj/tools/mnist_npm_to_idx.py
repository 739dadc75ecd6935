#!/usr/bin/env python3
"""Convert the digit JSON files shipped in the `mnist` npm package into IDX files.

The npm package bundles 10,000 genuine MNIST digits (pixel values pre-scaled to
[0, 1] with three decimals). This writes them as

    <out>/train-images-idx3-ubyte
    <out>/train-labels-idx1-ubyte

interleaving the classes round-robin so the file looks like an ordinary
MNIST-style dump. Usage:

    npm pack mnist && tar xzf mnist-*.tgz
    python3 tools/mnist_npm_to_idx.py package/src/digits /path/to/data/mnist
"""

import argparse
import json
import pathlib
import struct


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("digits_dir", type=pathlib.Path)
    parser.add_argument("out_dir", type=pathlib.Path)
    args = parser.parse_args()

    per_class = []
    for digit in range(10):
        with open(args.digits_dir / f"{digit}.json") as fh:
            flat = json.load(fh)["data"]
        if len(flat) % 784:
            raise SystemExit(f"{digit}.json: length {len(flat)} is not a multiple of 784")
        per_class.append([flat[i:i + 784] for i in range(0, len(flat), 784)])

    images, labels = [], []
    cursor = [0] * 10
    while any(cursor[d] < len(per_class[d]) for d in range(10)):
        for d in range(10):
            if cursor[d] < len(per_class[d]):
                images.append(per_class[d][cursor[d]])
                labels.append(d)
                cursor[d] += 1

    args.out_dir.mkdir(parents=True, exist_ok=True)
    with open(args.out_dir / "train-images-idx3-ubyte", "wb") as fh:
        fh.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        for img in images:
            fh.write(bytes(min(255, max(0, round(v * 255))) for v in img))
    with open(args.out_dir / "train-labels-idx1-ubyte", "wb") as fh:
        fh.write(struct.pack(">II", 0x00000801, len(labels)))
        fh.write(bytes(labels))
    print(f"wrote {len(images)} samples to {args.out_dir}")


if __name__ == "__main__":
    main()
