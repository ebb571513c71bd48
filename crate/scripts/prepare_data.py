#!/usr/bin/env python3
"""Assemble a dataset root from locally available sources.

Layout produced under DATA_ROOT:

    mnist/{train,t10k}-{images-idx3,labels-idx1}-ubyte
    fashion/{train,t10k}-{images-idx3,labels-idx1}-ubyte
    backgrounds/*.png

Sources:
    --mnist DIR        directory holding the four MNIST IDX files
    --fashion-json DIR directory holding per-class JSON dumps (0.json .. 9.json,
                       each {"data": [[784 ints], ...]}); the first 6000 items
                       of every class become training data, the next 1000 test
    --backgrounds F... color photographs copied (as PNG) into backgrounds/
"""
import argparse
import json
import shutil
import struct
from pathlib import Path

import numpy as np
from PIL import Image


def write_idx_images(path, images):
    n, h, w = images.shape
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x803, n, h, w))
        f.write(images.astype(np.uint8).tobytes())


def write_idx_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x801, len(labels)))
        f.write(np.asarray(labels, dtype=np.uint8).tobytes())


def fashion_from_json(src, dst, train_per_class=6000, test_per_class=1000):
    per_class = []
    for c in range(10):
        rows = json.load(open(src / f"{c}.json"))["data"]
        # some dumps carry empty placeholder rows
        data = np.asarray([r for r in rows if len(r) == 784], dtype=np.uint8)
        assert data.shape[1] == 784 and len(data) >= train_per_class + test_per_class
        per_class.append(data.reshape(-1, 28, 28))
    dst.mkdir(parents=True, exist_ok=True)
    for split, lo, hi in (("train", 0, train_per_class),
                          ("t10k", train_per_class, train_per_class + test_per_class)):
        images, labels = [], []
        # round-robin over classes keeps the file order class-interleaved
        for i in range(lo, hi):
            for c in range(10):
                images.append(per_class[c][i])
                labels.append(c)
        write_idx_images(dst / f"{split}-images-idx3-ubyte", np.stack(images))
        write_idx_labels(dst / f"{split}-labels-idx1-ubyte", labels)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("data_root", type=Path)
    ap.add_argument("--mnist", type=Path)
    ap.add_argument("--fashion-json", type=Path)
    ap.add_argument("--backgrounds", type=Path, nargs="*", default=[])
    args = ap.parse_args()

    root = args.data_root
    root.mkdir(parents=True, exist_ok=True)
    if args.mnist:
        (root / "mnist").mkdir(exist_ok=True)
        for name in ("train-images-idx3-ubyte", "train-labels-idx1-ubyte",
                     "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"):
            shutil.copy(args.mnist / name, root / "mnist" / name)
    if args.fashion_json:
        fashion_from_json(args.fashion_json, root / "fashion")
    if args.backgrounds:
        bg = root / "backgrounds"
        bg.mkdir(exist_ok=True)
        for src in args.backgrounds:
            img = Image.open(src).convert("RGB")
            img.save(bg / (src.stem + ".png"))


if __name__ == "__main__":
    main()
