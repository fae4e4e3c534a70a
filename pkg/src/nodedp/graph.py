"""Directed graph container, file formats, and synthetic generators.

Nodes carry dense 0-based integer ids, a float64 feature row, and an integer
class label. Edges are directed, deduplicated, and never self-loops (stripped
at ingest). Adjacency is stored CSR-style in both directions; the two views
are kept mirror-consistent and checked by :meth:`Graph.validate`.

File formats:

* node CSV ``id,label,f_1,...,f_d`` (header row optional),
* edge list, one ``src dst`` pair per line (whitespace separated),
* a JSON debug export bundling both.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import GraphIntegrityError, ParseError


def _csr_from_pairs(n: int, src: np.ndarray, dst: np.ndarray):
    """Build (ptr, idx) with idx sorted within each row."""
    order = np.lexsort((dst, src))
    src, dst = src[order], dst[order]
    ptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(ptr, src + 1, 1)
    np.cumsum(ptr, out=ptr)
    return ptr, dst.copy()


@dataclass
class Graph:
    """Immutable-by-convention directed graph with node features and labels."""

    features: np.ndarray  # (n, d) float64
    labels: np.ndarray  # (n,) int64
    out_ptr: np.ndarray  # (n+1,) int64
    out_idx: np.ndarray  # (E,) int64, sorted within each row
    in_ptr: np.ndarray
    in_idx: np.ndarray
    num_classes: int = field(default=0)

    def __post_init__(self):
        if self.num_classes <= 0:
            self.num_classes = int(self.labels.max()) + 1 if len(self.labels) else 0

    # -- construction ------------------------------------------------------

    @classmethod
    def from_arrays(cls, features, labels, edges, num_classes: int = 0) -> "Graph":
        """Build from a (E, 2) array of directed edges.

        Self-loops are dropped; duplicate edges collapse to one.
        """
        features = np.ascontiguousarray(features, dtype=np.float64)
        labels = np.ascontiguousarray(labels, dtype=np.int64)
        n = features.shape[0]
        if labels.shape[0] != n:
            raise GraphIntegrityError("features and labels disagree on node count")
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if len(edges):
            if edges.min() < 0 or edges.max() >= n:
                bad = edges[(edges < 0).any(1) | (edges >= n).any(1)][0]
                raise GraphIntegrityError(
                    f"edge ({bad[0]}, {bad[1]}) references a missing node (n={n})"
                )
            edges = edges[edges[:, 0] != edges[:, 1]]
            edges = np.unique(edges, axis=0)
        src = edges[:, 0] if len(edges) else np.empty(0, dtype=np.int64)
        dst = edges[:, 1] if len(edges) else np.empty(0, dtype=np.int64)
        out_ptr, out_idx = _csr_from_pairs(n, src, dst)
        in_ptr, in_idx = _csr_from_pairs(n, dst, src)
        return cls(features, labels, out_ptr, out_idx, in_ptr, in_idx, num_classes)

    # -- basic queries -----------------------------------------------------

    @property
    def num_nodes(self) -> int:
        return self.features.shape[0]

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    @property
    def num_edges(self) -> int:
        return int(self.out_idx.shape[0])

    def out_neighbors(self, i: int) -> np.ndarray:
        return self.out_idx[self.out_ptr[i] : self.out_ptr[i + 1]]

    def in_neighbors(self, i: int) -> np.ndarray:
        return self.in_idx[self.in_ptr[i] : self.in_ptr[i + 1]]

    @property
    def out_degrees(self) -> np.ndarray:
        return np.diff(self.out_ptr)

    @property
    def in_degrees(self) -> np.ndarray:
        return np.diff(self.in_ptr)

    def has_edge(self, u: int, v: int) -> bool:
        row = self.out_neighbors(u)
        j = np.searchsorted(row, v)
        return j < len(row) and row[j] == v

    def edge_array(self) -> np.ndarray:
        """(E, 2) array of directed edges, sorted by (src, dst)."""
        src = np.repeat(np.arange(self.num_nodes), self.out_degrees)
        return np.column_stack([src, self.out_idx])

    # -- integrity ---------------------------------------------------------

    def validate(self) -> None:
        """Check structural invariants; raises GraphIntegrityError."""
        n = self.num_nodes
        for name, ptr, idx in (
            ("out", self.out_ptr, self.out_idx),
            ("in", self.in_ptr, self.in_idx),
        ):
            if ptr.shape[0] != n + 1 or ptr[0] != 0 or ptr[-1] != idx.shape[0]:
                raise GraphIntegrityError(f"{name} pointer array malformed")
            if np.any(np.diff(ptr) < 0):
                raise GraphIntegrityError(f"{name} pointer array not monotone")
            if len(idx) and (idx.min() < 0 or idx.max() >= n):
                raise GraphIntegrityError(f"{name} adjacency references missing node")
            for i in range(n):
                row = idx[ptr[i] : ptr[i + 1]]
                if np.any(np.diff(row) <= 0):
                    raise GraphIntegrityError(
                        f"{name} row {i} not strictly sorted (duplicate edge?)"
                    )
                j = np.searchsorted(row, i)
                if j < len(row) and row[j] == i:
                    raise GraphIntegrityError(f"self-loop at node {i}")
        # mirror consistency: out edges == transposed in edges
        e_out = self.edge_array()
        src_in = np.repeat(np.arange(n), self.in_degrees)
        e_in = np.column_stack([self.in_idx, src_in])
        e_in = e_in[np.lexsort((e_in[:, 1], e_in[:, 0]))]
        if e_out.shape != e_in.shape or not np.array_equal(e_out, e_in):
            raise GraphIntegrityError("in/out adjacency views disagree")
        if self.labels.min(initial=0) < 0:
            raise GraphIntegrityError("negative label")
        if len(self.labels) and self.labels.max() >= self.num_classes:
            raise GraphIntegrityError("label outside [0, num_classes)")

    def equals(self, other: "Graph") -> bool:
        return (
            self.num_classes == other.num_classes
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.out_ptr, other.out_ptr)
            and np.array_equal(self.out_idx, other.out_idx)
        )


# -- file formats ----------------------------------------------------------


def _looks_like_header(row) -> bool:
    try:
        float(row[0])
        return False
    except ValueError:
        return True


def load_graph(node_path, edge_path, symmetrize: bool = False, num_classes: int = 0) -> Graph:
    """Read a graph from node CSV + edge list.

    ``symmetrize=True`` treats the edge list as undirected and emits both
    directions. Malformed rows raise ParseError with the line number;
    duplicate node ids and dangling edges raise errors naming the offender.
    """
    ids, labels, feats = [], [], []
    with open(node_path, newline="") as fh:
        reader = csv.reader(fh)
        start = 1
        rows = list(reader)
        if rows and _looks_like_header(rows[0]):
            rows = rows[1:]
            start = 2
        width = None
        for line_no, row in enumerate(rows, start=start):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) < 2:
                raise ParseError(node_path, line_no, "expected id,label,features...")
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise ParseError(
                    node_path, line_no, f"expected {width} columns, got {len(row)}"
                )
            try:
                ids.append(int(row[0]))
                labels.append(int(row[1]))
                feats.append([float(x) for x in row[2:]])
            except ValueError as exc:
                raise ParseError(node_path, line_no, str(exc)) from None
    n = len(ids)
    id_arr = np.asarray(ids, dtype=np.int64)
    if n:
        uniq, counts = np.unique(id_arr, return_counts=True)
        if (counts > 1).any():
            raise GraphIntegrityError(f"duplicate node id {int(uniq[counts > 1][0])}")
        if uniq[0] != 0 or uniq[-1] != n - 1:
            raise GraphIntegrityError("node ids are not dense 0..n-1")
    order = np.argsort(id_arr)
    features = np.asarray(feats, dtype=np.float64)[order] if n else np.empty((0, 0))
    label_arr = np.asarray(labels, dtype=np.int64)[order] if n else np.empty(0, np.int64)

    pairs = []
    with open(edge_path) as fh:
        for line_no, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if len(parts) != 2:
                raise ParseError(edge_path, line_no, "expected 'src dst'")
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError as exc:
                raise ParseError(edge_path, line_no, str(exc)) from None
            if not (0 <= u < n) or not (0 <= v < n):
                raise GraphIntegrityError(
                    f"{edge_path}:{line_no}: edge ({u}, {v}) references a missing node"
                )
            pairs.append((u, v))
            if symmetrize:
                pairs.append((v, u))
    edges = np.asarray(pairs, dtype=np.int64) if pairs else np.empty((0, 2), np.int64)
    return Graph.from_arrays(features, label_arr, edges, num_classes)


def save_graph(g: Graph, node_path, edge_path) -> None:
    """Write node CSV (with header) and edge list; load round-trips exactly."""
    d = g.num_features
    with open(node_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "label"] + [f"f_{j + 1}" for j in range(d)])
        for i in range(g.num_nodes):
            writer.writerow(
                [i, int(g.labels[i])] + [repr(float(x)) for x in g.features[i]]
            )
    with open(edge_path, "w") as fh:
        for u, v in g.edge_array():
            fh.write(f"{u} {v}\n")


def graph_to_json(g: Graph) -> str:
    """Debug export: nodes with features/labels plus the edge list."""
    payload = {
        "num_nodes": g.num_nodes,
        "num_features": g.num_features,
        "num_classes": g.num_classes,
        "labels": g.labels.tolist(),
        "features": g.features.tolist(),
        "edges": g.edge_array().tolist(),
    }
    return json.dumps(payload, indent=2, sort_keys=True)


# -- generators ------------------------------------------------------------


def gen_erdos_renyi(
    n: int, p: float, d: int, num_classes: int, rng: np.random.Generator
) -> Graph:
    """Directed Erdos-Renyi G(n, p): each ordered pair (i, j), i != j,
    is an edge independently with probability p. Features are standard
    normal, labels uniform over classes."""
    if not (0.0 <= p <= 1.0):
        raise ValueError(f"edge probability p={p} outside [0, 1]")
    mask = rng.random((n, n)) < p
    np.fill_diagonal(mask, False)
    src, dst = np.nonzero(mask)
    features = rng.normal(0.0, 1.0, size=(n, d))
    labels = rng.integers(0, num_classes, size=n)
    return Graph.from_arrays(features, labels, np.column_stack([src, dst]), num_classes)


def gen_planted_classes(
    n: int,
    num_classes: int,
    d: int,
    separation: float,
    p_intra: float,
    p_inter: float,
    rng: np.random.Generator,
) -> Graph:
    """Planted-classes task: class-c features are N(mu_c, I) with
    ||mu_a - mu_b|| = separation for every pair; ordered node pairs get an
    edge with probability p_intra (same class) or p_inter (different)."""
    if d < num_classes:
        raise ValueError(f"need d >= num_classes to embed {num_classes} equidistant means in R^{d}")
    for name, p in (("p_intra", p_intra), ("p_inter", p_inter)):
        if not (0.0 <= p <= 1.0):
            raise ValueError(f"{name}={p} outside [0, 1]")
    # scaled standard-basis simplex: ||mu_a - mu_b|| = separation for a != b
    means = np.zeros((num_classes, d))
    means[np.arange(num_classes), np.arange(num_classes)] = separation / np.sqrt(2.0)
    labels = np.arange(n, dtype=np.int64) % num_classes
    rng.shuffle(labels)
    features = rng.normal(0.0, 1.0, size=(n, d)) + means[labels]
    same = labels[:, None] == labels[None, :]
    prob = np.where(same, p_intra, p_inter)
    mask = rng.random((n, n)) < prob
    np.fill_diagonal(mask, False)
    src, dst = np.nonzero(mask)
    return Graph.from_arrays(
        features, labels, np.column_stack([src, dst]), num_classes
    )


# -- incremental edits -----------------------------------------------------


def add_node_with_out_edges(
    g: Graph, feature, label: int, targets, in_sources=()
) -> Graph:
    """Return a new graph with one appended node (id = old n) owning
    out-edges to ``targets`` and in-edges from ``in_sources``."""
    n = g.num_nodes
    targets = np.asarray(sorted(set(int(t) for t in targets)), dtype=np.int64)
    sources = np.asarray(sorted(set(int(s) for s in in_sources)), dtype=np.int64)
    for arr, what in ((targets, "target"), (sources, "source")):
        if len(arr) and (arr.min() < 0 or arr.max() >= n):
            raise GraphIntegrityError(f"{what} id outside existing graph")
    features = np.vstack([g.features, np.asarray(feature, dtype=np.float64)[None, :]])
    labels = np.append(g.labels, np.int64(label))
    new_edges = [g.edge_array()]
    if len(targets):
        new_edges.append(np.column_stack([np.full(len(targets), n), targets]))
    if len(sources):
        new_edges.append(np.column_stack([sources, np.full(len(sources), n)]))
    edges = np.vstack(new_edges)
    return Graph.from_arrays(features, labels, edges, max(g.num_classes, int(label) + 1))


def remove_last_node(g: Graph) -> Graph:
    """Drop the highest-id node and every edge touching it."""
    n = g.num_nodes
    if n == 0:
        raise GraphIntegrityError("graph has no nodes")
    edges = g.edge_array()
    keep = (edges[:, 0] != n - 1) & (edges[:, 1] != n - 1)
    return Graph.from_arrays(
        g.features[: n - 1], g.labels[: n - 1], edges[keep], g.num_classes
    )


# -- splits ----------------------------------------------------------------


@dataclass(frozen=True)
class NodeSplit:
    train_ids: np.ndarray
    test_ids: np.ndarray

    def to_json(self) -> str:
        return json.dumps(
            {"train_ids": self.train_ids.tolist(), "test_ids": self.test_ids.tolist()}
        )

    @classmethod
    def from_json(cls, text: str) -> "NodeSplit":
        obj = json.loads(text)
        return cls(
            np.asarray(obj["train_ids"], dtype=np.int64),
            np.asarray(obj["test_ids"], dtype=np.int64),
        )


def split_train_test(
    g: Graph, train_fraction: float = 0.8, rng: np.random.Generator | None = None
) -> NodeSplit:
    """Disjoint random node split; train gets floor(fraction * n) nodes."""
    if not (0.0 < train_fraction < 1.0):
        raise ValueError(f"train_fraction={train_fraction} outside (0, 1)")
    rng = rng if rng is not None else np.random.default_rng(0)
    perm = rng.permutation(g.num_nodes)
    cut = int(train_fraction * g.num_nodes)
    return NodeSplit(
        train_ids=np.sort(perm[:cut]).astype(np.int64),
        test_ids=np.sort(perm[cut:]).astype(np.int64),
    )
