#!/usr/bin/env python3
"""Build MNIST IDX files from the 10,000 digits bundled in the `mnist` npm package.

The official MNIST mirrors are not always reachable, so this script packs the
npm package (which ships real MNIST digits as JSON), rescales pixels to bytes,
shuffles with a fixed seed and writes a 5,000/5,000 train/test split in the
standard big-endian IDX layout:

    data/mnist/train-images-idx3-ubyte   data/mnist/train-labels-idx1-ubyte
    data/mnist/test-images-idx3-ubyte    data/mnist/test-labels-idx1-ubyte

Official files, when available, can be dropped into the same directory instead.
"""
import argparse
import json
import os
import random
import struct
import subprocess
import tarfile
import tempfile


def write_images(path, images):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        for img in images:
            f.write(bytes(img))


def write_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=os.path.join(os.path.dirname(__file__), "..", "data", "mnist"))
    ap.add_argument("--package-dir", help="already-extracted npm package directory")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    with tempfile.TemporaryDirectory() as tmp:
        pkg = args.package_dir
        if pkg is None:
            subprocess.run(["npm", "pack", "mnist@1.1.0"], cwd=tmp, check=True)
            tgz = [p for p in os.listdir(tmp) if p.endswith(".tgz")][0]
            with tarfile.open(os.path.join(tmp, tgz)) as t:
                t.extractall(tmp)
            pkg = os.path.join(tmp, "package")

        samples = []
        for digit in range(10):
            with open(os.path.join(pkg, "src", "digits", f"{digit}.json")) as f:
                raw = json.load(f)["data"]
            for k in range(len(raw) // 784):
                px = raw[k * 784:(k + 1) * 784]
                samples.append(([min(255, max(0, round(v * 255))) for v in px], digit))

    random.Random(args.seed).shuffle(samples)
    half = len(samples) // 2
    os.makedirs(args.out, exist_ok=True)
    for name, part in (("train", samples[:half]), ("test", samples[half:])):
        write_images(os.path.join(args.out, f"{name}-images-idx3-ubyte"), [s[0] for s in part])
        write_labels(os.path.join(args.out, f"{name}-labels-idx1-ubyte"), [s[1] for s in part])
        print(f"{name}: {len(part)} samples")


if __name__ == "__main__":
    main()
