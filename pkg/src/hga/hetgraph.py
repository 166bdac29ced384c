"""Heterogeneous graph data model, on-disk format, and synthetic generator."""
from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass

import numpy as np

UNLABELED = -1


class GraphFormatError(ValueError):
    """Raised when a dataset directory fails validation."""


@dataclass(frozen=True)
class EdgeType:
    name: str
    src: str
    dst: str


@dataclass(frozen=True)
class HetGraph:
    node_types: tuple
    target_type: str
    edge_types: tuple            # tuple of EdgeType
    features: dict               # type -> (n_type, f_type) float64 array
    edges: dict                  # etype name -> (m, 2) int array of (src, dst)
    hom_adjacency: np.ndarray    # (n, n) symmetric 0/1, zero diagonal
    labels: np.ndarray           # (n,) int, -1 = unlabeled
    num_classes: int
    train_idx: np.ndarray
    test_idx: np.ndarray

    def __post_init__(self):
        validate_graph(self)

    @property
    def n_target(self) -> int:
        return self.features[self.target_type].shape[0]

    @property
    def edge_type_names(self) -> list:
        return [et.name for et in self.edge_types]


def validate_graph(g: HetGraph) -> None:
    if g.target_type not in g.node_types:
        raise GraphFormatError(f"target type {g.target_type!r} not in node types")
    if len(set(g.node_types)) + len({et.name for et in g.edge_types}) <= 2:
        raise GraphFormatError("need more than two node/edge types in total")
    counts = {t: g.features[t].shape[0] for t in g.node_types}
    for et in g.edge_types:
        pairs = g.edges[et.name]
        if pairs.size:
            if pairs[:, 0].min() < 0 or pairs[:, 0].max() >= counts[et.src]:
                raise GraphFormatError(f"dangling edge in {et.name!r}: src id out of range")
            if pairs[:, 1].min() < 0 or pairs[:, 1].max() >= counts[et.dst]:
                raise GraphFormatError(f"dangling edge in {et.name!r}: dst id out of range")
    n = counts[g.target_type]
    A = g.hom_adjacency
    if A.shape != (n, n):
        raise GraphFormatError("hom adjacency shape mismatch")
    if not np.array_equal(A, A.T):
        raise GraphFormatError("hom adjacency must be symmetric")
    if np.any(np.diag(A) != 0):
        raise GraphFormatError("hom adjacency must have zero diagonal")
    if g.labels.shape != (n,):
        raise GraphFormatError("labels length mismatch")
    bad = (g.labels != UNLABELED) & ((g.labels < 0) | (g.labels >= g.num_classes))
    if np.any(bad):
        raise GraphFormatError(f"label out of range at node {int(np.nonzero(bad)[0][0])}")
    if np.intersect1d(g.train_idx, g.test_idx).size:
        raise GraphFormatError("train and test splits overlap")
    for name, idx in (("train", g.train_idx), ("test", g.test_idx)):
        if idx.size and (idx.min() < 0 or idx.max() >= n):
            raise GraphFormatError(f"{name} index out of range")
    if np.any(g.labels[g.train_idx] == UNLABELED):
        raise GraphFormatError("every train node must be labeled")


# ---------------------------------------------------------------------------
# On-disk format


def save_graph(g: HetGraph, dir_path: str) -> None:
    os.makedirs(dir_path, exist_ok=True)
    schema = {
        "node_types": list(g.node_types),
        "target_type": g.target_type,
        "edge_types": [{"name": et.name, "src": et.src, "dst": et.dst}
                       for et in g.edge_types],
        "num_classes": g.num_classes,
        "feature_dims": {t: g.features[t].shape[1] for t in g.node_types},
    }
    with open(os.path.join(dir_path, "schema.json"), "w", newline="\n") as fh:
        json.dump(schema, fh, indent=2)
    for t in g.node_types:
        X = g.features[t]
        with open(os.path.join(dir_path, f"features_{t}.csv"), "w", newline="\n") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["id"] + [f"f{j}" for j in range(X.shape[1])])
            for i in range(X.shape[0]):
                w.writerow([i] + [repr(float(v)) for v in X[i]])
    for et in g.edge_types:
        with open(os.path.join(dir_path, f"edges_{et.name}.csv"), "w", newline="\n") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["src", "dst"])
            for s, d in g.edges[et.name]:
                w.writerow([int(s), int(d)])
    iu, ju = np.nonzero(np.triu(g.hom_adjacency))
    with open(os.path.join(dir_path, "hom_edges.csv"), "w", newline="\n") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["src", "dst"])
        for s, d in zip(iu, ju):
            w.writerow([int(s), int(d)])
    with open(os.path.join(dir_path, "labels.csv"), "w", newline="\n") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "label"])
        for i, y in enumerate(g.labels):
            w.writerow([i, int(y)])
    with open(os.path.join(dir_path, "split.json"), "w", newline="\n") as fh:
        json.dump({"train": [int(i) for i in g.train_idx],
                   "test": [int(i) for i in g.test_idx]}, fh, indent=2)


def _read_csv(path: str):
    if not os.path.exists(path):
        raise GraphFormatError(f"missing file: {path}")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def load_graph(dir_path: str) -> HetGraph:
    schema_path = os.path.join(dir_path, "schema.json")
    if not os.path.exists(schema_path):
        raise GraphFormatError(f"missing file: {schema_path}")
    with open(schema_path) as fh:
        schema = json.load(fh)
    node_types = tuple(schema["node_types"])
    feature_dims = schema["feature_dims"]
    features = {}
    for t in node_types:
        path = os.path.join(dir_path, f"features_{t}.csv")
        header, rows = _read_csv(path)
        f = int(feature_dims[t])
        if len(header) != f + 1:
            raise GraphFormatError(f"{path}: expected {f} feature columns, got {len(header) - 1}")
        X = np.empty((len(rows), f), dtype=np.float64)
        for r, row in enumerate(rows):
            if int(row[0]) != r:
                raise GraphFormatError(f"{path}: row {r + 2}: ids must be dense from 0")
            X[r] = [float(v) for v in row[1:]]
        features[t] = X
    edge_types = tuple(EdgeType(e["name"], e["src"], e["dst"])
                       for e in schema["edge_types"])
    edges = {}
    for et in edge_types:
        path = os.path.join(dir_path, f"edges_{et.name}.csv")
        _, rows = _read_csv(path)
        edges[et.name] = np.array([[int(r[0]), int(r[1])] for r in rows],
                                  dtype=np.int64).reshape(-1, 2)
    n = features[schema["target_type"]].shape[0]
    _, rows = _read_csv(os.path.join(dir_path, "hom_edges.csv"))
    A = np.zeros((n, n), dtype=np.float64)
    for r, row in enumerate(rows):
        s, d = int(row[0]), int(row[1])
        if not (0 <= s < n and 0 <= d < n):
            raise GraphFormatError(f"hom_edges.csv: row {r + 2}: dangling edge")
        A[s, d] = A[d, s] = 1.0
    np.fill_diagonal(A, 0.0)
    path = os.path.join(dir_path, "labels.csv")
    _, rows = _read_csv(path)
    labels = np.full(n, UNLABELED, dtype=np.int64)
    c = int(schema["num_classes"])
    for r, row in enumerate(rows):
        i, y = int(row[0]), int(row[1])
        if y != UNLABELED and not (0 <= y < c):
            raise GraphFormatError(f"{path}: row {r + 2}: label out of range")
        labels[i] = y
    split_path = os.path.join(dir_path, "split.json")
    if not os.path.exists(split_path):
        raise GraphFormatError(f"missing file: {split_path}")
    with open(split_path) as fh:
        split = json.load(fh)
    return HetGraph(
        node_types=node_types,
        target_type=schema["target_type"],
        edge_types=edge_types,
        features=features,
        edges=edges,
        hom_adjacency=A,
        labels=labels,
        num_classes=c,
        train_idx=np.array(sorted(split["train"]), dtype=np.int64),
        test_idx=np.array(sorted(split["test"]), dtype=np.int64),
    )


# ---------------------------------------------------------------------------
# Synthetic generator


@dataclass(frozen=True)
class SyntheticSpec:
    n_target: int = 600
    n_classes: int = 3
    feature_dim: int = 32
    class_separation: float = 7.0
    n_aux: int = 120              # nodes per auxiliary type
    n_aux_types: int = 2          # first type is class-informative, last is noise
    aux_feature_dim: int = 16
    p_in: float = 0.05
    p_out: float = 0.005
    noise_rate: float = 0.0       # fraction of hom edges rewired at random
    train_per_class: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.n_classes < 2:
            raise ValueError("need at least 2 classes")
        if not self.p_in > self.p_out:
            raise ValueError("p_in must exceed p_out")
        if self.train_per_class * self.n_classes > self.n_target:
            raise ValueError("too many labeled nodes requested")


def generate_synthetic(spec: SyntheticSpec) -> HetGraph:
    """Planted-partition graph with class-separated target features.

    Auxiliary node features are pure noise; class signal for auxiliary types
    is carried by the wiring (first edge type class-informative, last random).
    """
    rng = np.random.default_rng(spec.seed)
    n, c, f = spec.n_target, spec.n_classes, spec.feature_dim
    labels = np.arange(n) % c
    means = rng.standard_normal((c, f))
    means *= spec.class_separation / np.linalg.norm(means, axis=1, keepdims=True)
    X = means[labels] + rng.standard_normal((n, f))

    same = labels[:, None] == labels[None, :]
    prob = np.where(same, spec.p_in, spec.p_out)
    upper = np.triu(rng.random((n, n)) < prob, k=1)
    if spec.noise_rate > 0.0:
        ii, jj = np.nonzero(upper)
        rewire = rng.random(ii.size) < spec.noise_rate
        upper[ii[rewire], jj[rewire]] = False
        for _ in range(int(rewire.sum())):
            a, b = rng.integers(0, n, size=2)
            if a != b:
                upper[min(a, b), max(a, b)] = True
    A = (upper | upper.T).astype(np.float64)

    node_types = ["target"] + [f"aux{t}" for t in range(spec.n_aux_types)]
    features = {"target": X}
    edges = {}
    edge_types = []
    for t in range(spec.n_aux_types):
        tname = f"aux{t}"
        features[tname] = rng.standard_normal((spec.n_aux, spec.aux_feature_dim))
        informative = t < spec.n_aux_types - 1 or spec.n_aux_types == 1
        aux_class = np.arange(spec.n_aux) % c
        pairs = []
        for i in range(n):
            deg = 1 + rng.integers(0, 3)
            if informative:
                pool = np.nonzero(aux_class == labels[i])[0]
            else:
                pool = np.arange(spec.n_aux)
            pairs.extend((i, int(j)) for j in rng.choice(pool, size=deg, replace=False))
        ename = f"target-{tname}"
        edge_types.append(EdgeType(ename, "target", tname))
        edges[ename] = np.array(pairs, dtype=np.int64)

    train = []
    for y in range(c):
        members = np.nonzero(labels == y)[0]
        train.extend(rng.choice(members, size=spec.train_per_class, replace=False))
    train = np.array(sorted(train), dtype=np.int64)
    test = np.setdiff1d(np.arange(n), train)
    return HetGraph(
        node_types=tuple(node_types),
        target_type="target",
        edge_types=tuple(edge_types),
        features=features,
        edges=edges,
        hom_adjacency=A,
        labels=labels.astype(np.int64),
        num_classes=c,
        train_idx=train,
        test_idx=test,
    )


def homophily_ratio(weighted_adj: np.ndarray, labels: np.ndarray) -> float:
    """Fraction of edge weight joining same-class pairs; unlabeled excluded."""
    W = np.asarray(weighted_adj, dtype=np.float64)
    if np.any(W < 0):
        raise ValueError("adjacency must be nonnegative")
    labeled = labels != UNLABELED
    keep = np.outer(labeled, labeled)
    total = float((W * keep).sum())
    if total == 0.0:
        raise ValueError("no edges")
    same = labels[:, None] == labels[None, :]
    return float((W * keep * same).sum()) / total
