"""Convert a LINQS citation dump (``*.cites`` + ``*.content``) to the package format.

Usage: python3 scripts/convert_linqs.py CITES CONTENT OUT_DIR

A line ``a b`` in the cites file means paper ``b`` cites paper ``a``; it becomes
the directed edge ``b -> a``.  Nodes are numbered in content-file order and
classes in sorted order of their names.
"""
import gzip
import sys
from pathlib import Path

import numpy as np


def main(cites, content, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ids, feats, names = [], [], []
    for line in open(content, encoding="utf-8"):
        parts = line.split()
        if parts:
            ids.append(parts[0])
            feats.append(parts[1:-1])
            names.append(parts[-1])
    index = {p: i for i, p in enumerate(ids)}
    classes = sorted(set(names))
    labels = [classes.index(c) for c in names]
    edges = set()
    skipped = 0
    for line in open(cites, encoding="utf-8"):
        parts = line.split()
        if len(parts) != 2:
            continue
        a, b = parts
        if a not in index or b not in index or a == b:
            skipped += 1
            continue
        edges.add((index[b], index[a]))
    with open(out / "edges.txt", "w", encoding="utf-8") as fh:
        fh.write(f"# n={len(ids)}\n")
        for u, v in sorted(edges):
            fh.write(f"{u} {v}\n")
    X = np.array(feats, dtype=np.int8)
    with gzip.open(out / "features.csv.gz", "wt", encoding="utf-8") as fh:
        for row in X:
            fh.write(",".join(map(str, row)) + "\n")
    with open(out / "labels.txt", "w", encoding="utf-8") as fh:
        fh.write("# classes: " + " ".join(classes) + "\n")
        fh.write("\n".join(map(str, labels)) + "\n")
    print(f"{len(ids)} nodes, {len(edges)} edges ({skipped} skipped), "
          f"{X.shape[1]} features, {len(classes)} classes")


if __name__ == "__main__":
    if len(sys.argv) != 4:
        sys.exit(__doc__)
    main(*sys.argv[1:])
