#!/usr/bin/env python3
"""Convert a LINQS-format citation dump (``<name>.content`` + ``<name>.cites``)
into the fedgraph dataset layout.

Node ids follow line order of the content file. Class ids follow the sorted
class names. The split is Planetoid-style: ``--per-class`` training nodes per
class and ``--test`` test nodes, both drawn from one seeded permutation.

The Cora dump used for ``data/cora`` ships inside the ``pgl`` wheel on PyPI::

    pip download --no-deps pgl==2.2.6
    python -c "import zipfile; zipfile.ZipFile('pgl-2.2.6-...whl').extractall('pgl')"
    python scripts/convert_linqs.py pgl/pgl/data/cora/cora data/cora
"""
import argparse
import os

import numpy as np


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("prefix", help="path prefix, e.g. .../cora/cora")
    ap.add_argument("out")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--per-class", type=int, default=20)
    ap.add_argument("--test", type=int, default=1000)
    args = ap.parse_args()

    ids, feats, names = [], [], []
    with open(args.prefix + ".content") as f:
        for line in f:
            tok = line.split()
            ids.append(tok[0])
            feats.append(tok[1:-1])
            names.append(tok[-1])
    classes = sorted(set(names))
    labels = np.array([classes.index(c) for c in names])
    index = {p: i for i, p in enumerate(ids)}
    n, d, c = len(ids), len(feats[0]), len(classes)

    edges = set()
    with open(args.prefix + ".cites") as f:
        for line in f:
            a, b = line.split()
            if a not in index or b not in index:
                continue
            u, v = index[a], index[b]
            if u != v:
                edges.add((min(u, v), max(u, v)))

    perm = np.random.default_rng(args.seed).permutation(n)
    train, taken = [], np.zeros(c, dtype=int)
    for v in perm:
        if taken[labels[v]] < args.per_class:
            taken[labels[v]] += 1
            train.append(int(v))
    chosen = set(train)
    test = [int(v) for v in perm if v not in chosen][: args.test]

    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "meta.tsv"), "w") as f:
        f.write(f"{n}\t{d}\t{c}\n")
    with open(os.path.join(args.out, "edges.tsv"), "w") as f:
        for u, v in sorted(edges):
            f.write(f"{u}\t{v}\n")
    with open(os.path.join(args.out, "features.tsv"), "w") as f:
        for row in feats:
            f.write(" ".join(row) + "\n")
    with open(os.path.join(args.out, "labels.tsv"), "w") as f:
        for y in labels:
            f.write(f"{y}\n")
    for name, ids_ in (("train.txt", sorted(train)), ("test.txt", sorted(test))):
        with open(os.path.join(args.out, name), "w") as f:
            for v in ids_:
                f.write(f"{v}\n")
    print(f"n={n} d={d} c={c} edges={len(edges)} train={len(train)} test={len(test)}")
    print("classes: " + ", ".join(f"{i}={name}" for i, name in enumerate(classes)))


if __name__ == "__main__":
    main()
