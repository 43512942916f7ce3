#!/usr/bin/env python3
"""Convert a Planetoid-format citation dataset into a text bundle.

Reads the `ind.<name>.*` pickle files (tx, allx, y, ty, ally, graph,
test.index) and writes the bundle directory consumed by `cg3 train`:
meta.json, features.csv, edges.csv, labels.csv, splits.json. The standard
split is preserved: the first labeled block trains, the next 500 nodes
validate, and test.index tests.

Requires numpy and scipy (the pickles contain scipy sparse matrices).

Usage:
    python tooling/planetoid_to_bundle.py --raw-dir path/to/raw --name cora --out data/cora-bundle
"""

import argparse
import json
import pickle
import sys
from pathlib import Path

import numpy as np
import scipy.sparse as sp


def load_pickle(raw_dir: Path, name: str, part: str):
    with open(raw_dir / f"ind.{name}.{part}", "rb") as fh:
        return pickle.load(fh, encoding="latin1")


def load_test_index(raw_dir: Path, name: str) -> np.ndarray:
    lines = (raw_dir / f"ind.{name}.test.index").read_text().split()
    return np.array([int(v) for v in lines], dtype=np.int64)


def assemble(raw_dir: Path, name: str):
    tx = load_pickle(raw_dir, name, "tx")
    allx = load_pickle(raw_dir, name, "allx")
    y = load_pickle(raw_dir, name, "y")
    ty = np.asarray(load_pickle(raw_dir, name, "ty"))
    ally = np.asarray(load_pickle(raw_dir, name, "ally"))
    graph = load_pickle(raw_dir, name, "graph")
    test_idx = load_test_index(raw_dir, name)

    # allx covers nodes [0, base); row k of tx/ty belongs to node test_idx[k].
    # Ids in (base, max] that test.index skips are isolated nodes: they keep
    # zero features and an unknown label, and join no split.
    base = allx.shape[0]
    n = max(int(test_idx.max()) + 1, len(graph), base)
    features = sp.lil_matrix((n, allx.shape[1]), dtype=np.float64)
    features[:base, :] = allx
    features[test_idx, :] = tx
    features = features.tocsr()

    labels = np.full(n, -1, dtype=np.int64)
    known = ally.sum(axis=1) > 0
    labels[:base][known] = ally.argmax(axis=1)[known]
    known_t = ty.sum(axis=1) > 0
    labels[test_idx[known_t]] = ty[known_t].argmax(axis=1)

    edges = set()
    for i, nbrs in graph.items():
        for j in nbrs:
            if i != j and i < n and j < n:
                edges.add((min(i, j), max(i, j)))

    train = list(range(y.shape[0]))
    # The conventional 500-node validation block, clamped to the labeled region.
    val = list(range(y.shape[0], min(y.shape[0] + 500, base)))
    test = sorted(int(v) for v in test_idx)
    padded = sorted(set(range(base, n)) - set(test))
    return features, labels, int(ally.shape[1]), sorted(edges), train, val, test, padded


def fmt(v: float) -> str:
    # Shortest exact decimal for the common 0/1 entries, full precision otherwise.
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def write_bundle(out_dir: Path, features, labels, classes, edges, train, val, test):
    out_dir.mkdir(parents=True, exist_ok=True)
    n, d = features.shape

    (out_dir / "meta.json").write_text(
        json.dumps({"nodes": n, "features": d, "classes": classes}) + "\n"
    )

    dense = np.asarray(features.todense(), dtype=np.float64)
    with open(out_dir / "features.csv", "w") as fh:
        for row in dense:
            fh.write(",".join(fmt(v) for v in row) + "\n")

    with open(out_dir / "edges.csv", "w") as fh:
        for i, j in edges:
            fh.write(f"{i},{j}\n")

    with open(out_dir / "labels.csv", "w") as fh:
        for v in labels:
            fh.write(f"{int(v)}\n")

    (out_dir / "splits.json").write_text(
        json.dumps({"train": train, "val": val, "test": test}) + "\n"
    )


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--raw-dir", type=Path, required=True, help="directory holding the ind.<name>.* files")
    ap.add_argument("--name", required=True, help="dataset name as used in the file names, e.g. cora")
    ap.add_argument("--out", type=Path, required=True, help="bundle directory to create")
    args = ap.parse_args()

    features, labels, classes, edges, train, val, test, padded = assemble(args.raw_dir, args.name)
    write_bundle(args.out, features, labels, classes, edges, train, val, test)

    n, d = features.shape
    print(f"wrote {n} nodes, {len(edges)} undirected edges, {d} features, {classes} classes to {args.out}")
    print(f"splits: {len(train)} train / {len(val)} val / {len(test)} test")
    if padded:
        print(f"padded {len(padded)} isolated nodes with zero features and label -1")
    return 0


if __name__ == "__main__":
    sys.exit(main())
