#!/usr/bin/env python3
"""Convert the per-digit JSON arrays of the npm `mnist` package into IDX files.

Each src/digits/<d>.json holds {"data": [...]}, a flat list of 28x28 images with pixel
values already divided by 255 and rounded to three decimals; they are mapped back to bytes.

    python3 tools/digits_json_to_idx.py <package>/src/digits OUT_PREFIX --per-digit 7 --count 64
    python3 tools/digits_json_to_idx.py <package>/src/digits OUT_PREFIX --split 800

The first form writes OUT_PREFIX-images-idx3-ubyte / -labels-idx1-ubyte with samples taken
round-robin over the digits. The second writes a train/test pair, putting the first N samples
of every digit into train and the rest into test.
"""

import argparse
import json
import struct
from pathlib import Path

SIDE = 28


def load_digits(root):
    digits = []
    for d in range(10):
        raw = json.loads((Path(root) / f"{d}.json").read_text())["data"]
        n = len(raw) // (SIDE * SIDE)
        images = [
            bytes(min(255, max(0, round(v * 255))) for v in raw[i * SIDE * SIDE:(i + 1) * SIDE * SIDE])
            for i in range(n)
        ]
        digits.append(images)
    return digits


def write_idx(prefix, samples):
    with open(f"{prefix}-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 2051, len(samples), SIDE, SIDE))
        for image, _ in samples:
            f.write(image)
    with open(f"{prefix}-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 2049, len(samples)))
        f.write(bytes(label for _, label in samples))


def round_robin(digits, start, stop):
    out = []
    for i in range(start, stop):
        for d, images in enumerate(digits):
            if i < len(images):
                out.append((images[i], d))
    return out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("digits_dir")
    ap.add_argument("prefix")
    ap.add_argument("--per-digit", type=int, default=7)
    ap.add_argument("--count", type=int, default=64)
    ap.add_argument("--split", type=int)
    args = ap.parse_args()

    digits = load_digits(args.digits_dir)
    if args.split:
        longest = max(len(images) for images in digits)
        write_idx(f"{args.prefix}-train", round_robin(digits, 0, args.split))
        write_idx(f"{args.prefix}-test", round_robin(digits, args.split, longest))
    else:
        write_idx(args.prefix, round_robin(digits, 0, args.per_digit)[: args.count])


if __name__ == "__main__":
    main()
