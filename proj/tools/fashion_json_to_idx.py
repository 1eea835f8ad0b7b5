#!/usr/bin/env python3
"""Convert the per-class JSON bundle of the `fashion-mnist` npm package to IDX.

The npm package ships 70 000 images grouped by class without the original
train/test split. This script rebuilds a deterministic 60 000 / 10 000 split:
the first 6 000 images of each class go to training, the next 1 000 to test,
and any surplus is dropped. Samples are interleaved round-robin over classes
so neither file is class-sorted.

    npm pack fashion-mnist && tar xzf fashion-mnist-*.tgz
    python3 tools/fashion_json_to_idx.py package/src/clothes data/fashion
"""
import json
import struct
import sys
from pathlib import Path

TRAIN_PER_CLASS = 6000
TEST_PER_CLASS = 1000


def write_images(path, images):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        for img in images:
            f.write(bytes(img))


def write_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def interleave(per_class):
    images, labels = [], []
    for i in range(len(per_class[0])):
        for c, rows in enumerate(per_class):
            images.append(rows[i])
            labels.append(c)
    return images, labels


def main():
    if len(sys.argv) != 3:
        sys.exit(f"usage: {sys.argv[0]} <clothes-json-dir> <out-dir>")
    src, out = Path(sys.argv[1]), Path(sys.argv[2])
    out.mkdir(parents=True, exist_ok=True)
    train, test = [], []
    for c in range(10):
        # the bundle carries a few empty placeholder rows
        rows = [r for r in json.loads((src / f"{c}.json").read_text())["data"] if r]
        if len(rows) < TRAIN_PER_CLASS + TEST_PER_CLASS:
            sys.exit(f"class {c}: only {len(rows)} images")
        for r in rows:
            if len(r) != 784 or min(r) < 0 or max(r) > 255:
                sys.exit(f"class {c}: malformed image row")
        train.append(rows[:TRAIN_PER_CLASS])
        test.append(rows[TRAIN_PER_CLASS:TRAIN_PER_CLASS + TEST_PER_CLASS])
    for split, per_class in (("train", train), ("t10k", test)):
        images, labels = interleave(per_class)
        write_images(out / f"{split}-images-idx3-ubyte", images)
        write_labels(out / f"{split}-labels-idx1-ubyte", labels)
        print(f"{split}: {len(images)} images")


if __name__ == "__main__":
    main()
