#!/usr/bin/env python3
"""Convert Planetoid ``ind.<name>.*`` pickles into the fedgraph dataset layout.

Uses the standard public split: training nodes are the first ``len(y)`` ids,
test nodes come from ``ind.<name>.test.index``. Test ids missing from the
dump (Citeseer has 15) become featureless unlabeled nodes.

Citeseer and Pubmed dumps ship inside the ``pgl`` wheel on PyPI (see
``convert_linqs.py``)::

    python scripts/convert_planetoid.py pgl/pgl/data/citeseer citeseer data/citeseer
"""
import argparse
import os
import pickle
import sys

import numpy as np
import scipy.sparse as sp


def load(path, name, part):
    with open(os.path.join(path, f"ind.{name}.{part}"), "rb") as f:
        if sys.version_info > (3, 0):
            return pickle.load(f, encoding="latin1")
        return pickle.load(f)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("path")
    ap.add_argument("name")
    ap.add_argument("out")
    args = ap.parse_args()

    x, y, tx, ty, allx, ally, graph = (
        load(args.path, args.name, p) for p in ("x", "y", "tx", "ty", "allx", "ally", "graph")
    )
    with open(os.path.join(args.path, f"ind.{args.name}.test.index")) as f:
        test_idx = [int(line) for line in f]
    lo, hi = min(test_idx), max(test_idx)

    n_all = allx.shape[0]
    n = max(hi + 1, n_all)
    d = allx.shape[1]
    c = ally.shape[1]

    feats = sp.lil_matrix((n, d))
    feats[:n_all] = allx
    labels = -np.ones(n, dtype=int)
    has = ally.sum(1).A1 if hasattr(ally, "A1") else np.asarray(ally).sum(1)
    labels[:n_all] = np.where(has > 0, np.asarray(ally).argmax(1), -1)
    tx = sp.csr_matrix(tx)
    ty = np.asarray(ty)
    for row, node in enumerate(sorted(test_idx)):
        feats[node] = tx[row]
        labels[node] = ty[row].argmax() if ty[row].sum() > 0 else -1
    feats = feats.tocsr()

    edges = set()
    for u, nbrs in graph.items():
        for v in nbrs:
            if u != v and u < n and v < n:
                edges.add((min(u, v), max(u, v)))

    train = list(range(len(np.asarray(y))))
    test = sorted(v for v in test_idx if labels[v] >= 0)

    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "meta.tsv"), "w") as f:
        f.write(f"{n}\t{d}\t{c}\n")
    with open(os.path.join(args.out, "edges.tsv"), "w") as f:
        for u, v in sorted(edges):
            f.write(f"{u}\t{v}\n")
    with open(os.path.join(args.out, "features.tsv"), "w") as f:
        for i in range(n):
            row = feats[i].toarray().ravel()
            f.write(" ".join("0" if v == 0 else repr(float(v)) for v in row) + "\n")
    with open(os.path.join(args.out, "labels.tsv"), "w") as f:
        for v in labels:
            f.write(f"{v}\n")
    for name, ids in (("train.txt", train), ("test.txt", test)):
        with open(os.path.join(args.out, name), "w") as f:
            for v in ids:
                f.write(f"{v}\n")
    print(f"n={n} d={d} c={c} edges={len(edges)} train={len(train)} test={len(test)}")


if __name__ == "__main__":
    main()
