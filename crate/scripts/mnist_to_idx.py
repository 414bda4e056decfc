#!/usr/bin/env python3
"""Convert a CSV of MNIST digits into IDX image and label files.

Each CSV row holds 784 pixel values (0-255) followed by the digit label.
The input may be a plain or gzipped CSV, or a zip archive (for example a
Python wheel) containing such a file, given as ``archive.zip:member``.

The rows are shuffled with a fixed seed and split into a training and a
test part, written as ``train-images-idx3-ubyte`` and friends.
"""

import argparse
import gzip
import io
import struct
import zipfile
from pathlib import Path

import numpy as np


def read_rows(source: str) -> np.ndarray:
    if ":" in source and zipfile.is_zipfile(source.split(":", 1)[0]):
        archive, member = source.split(":", 1)
        with zipfile.ZipFile(archive) as z:
            raw = z.read(member)
    else:
        raw = Path(source).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    rows = np.loadtxt(io.BytesIO(raw), delimiter=",", dtype=np.int64)
    if rows.ndim != 2 or rows.shape[1] != 785:
        raise SystemExit(f"expected 785 columns per row, got shape {rows.shape}")
    return rows


def write_images(path: Path, pixels: np.ndarray) -> None:
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(pixels), 28, 28))
        f.write(pixels.astype(np.uint8).tobytes())


def write_labels(path: Path, labels: np.ndarray) -> None:
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(labels.astype(np.uint8).tobytes())


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("source", help="CSV, CSV.gz or archive.zip:member")
    ap.add_argument("out_dir", type=Path)
    ap.add_argument("--n-test", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rows = read_rows(args.source)
    if not (0 < args.n_test < len(rows)):
        raise SystemExit(f"--n-test must lie in (0, {len(rows)})")
    rows = rows[np.random.default_rng(args.seed).permutation(len(rows))]
    test, train = rows[: args.n_test], rows[args.n_test :]

    args.out_dir.mkdir(parents=True, exist_ok=True)
    for name, part in (("train", train), ("t10k", test)):
        write_images(args.out_dir / f"{name}-images-idx3-ubyte", part[:, :784])
        write_labels(args.out_dir / f"{name}-labels-idx1-ubyte", part[:, 784])
        print(f"{name}: {len(part)} images")


if __name__ == "__main__":
    main()
