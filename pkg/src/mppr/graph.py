"""Graph containers, file ingestion and degree normalization.

Sparse matrices are carried as canonical ``scipy.sparse.csr_array`` objects:
sorted indices, no duplicate entries and no explicitly stored zeros.
"""
from __future__ import annotations

import gzip
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .exceptions import GraphFormatError, ShapeError

_HEADER = re.compile(r"^#\s*n\s*=\s*(\d+)\s*$")


def canonical(M) -> sp.csr_array:
    """Return ``M`` as a csr_array with sorted indices and no stored zeros."""
    M = sp.csr_array(M, copy=True)
    M.sum_duplicates()
    M.eliminate_zeros()
    M.sort_indices()
    return M


@dataclass(frozen=True)
class Graph:
    """Directed, unweighted graph with dense node features.

    ``edges`` is an ``(m, 2)`` integer array of unique directed pairs sorted
    lexicographically.  ``labels`` uses -1 for unlabeled nodes.
    """

    n: int
    edges: np.ndarray
    features: np.ndarray
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if edges.size and (edges.min() < 0 or edges.max() >= self.n):
            raise IndexError(f"edge endpoint outside [0, {self.n})")
        if np.any(edges[:, 0] == edges[:, 1]):
            raise GraphFormatError("self-loops are not allowed")
        edges = np.unique(edges, axis=0)
        object.__setattr__(self, "edges", edges)
        X = np.asarray(self.features, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if X.shape[0] != self.n:
            raise ShapeError(f"feature matrix has {X.shape[0]} rows, graph has {self.n} nodes")
        object.__setattr__(self, "features", X)
        if self.labels is not None:
            y = np.asarray(self.labels, dtype=np.int64).ravel()
            if y.shape[0] != self.n:
                raise ShapeError(f"label vector has {y.shape[0]} entries, graph has {self.n} nodes")
            if np.any(y < -1):
                raise ValueError("labels must be class indices or -1 (unlabeled)")
            object.__setattr__(self, "labels", y)

    @property
    def n_classes(self) -> int:
        if self.labels is None or not np.any(self.labels >= 0):
            return 0
        return int(self.labels.max()) + 1

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def symmetrized(self) -> "Graph":
        """Copy of the graph with every edge reciprocated."""
        both = np.vstack([self.edges, self.edges[:, ::-1]])
        return Graph(self.n, both, self.features, self.labels)

    def undirected_edges(self) -> np.ndarray:
        """Unique ``(u, v)`` pairs with ``u < v`` covering every edge (read-only, cached)."""
        cached = self.__dict__.get("_undirected")
        if cached is None:
            if len(self.edges) == 0:
                cached = np.empty((0, 2), dtype=np.int64)
            else:
                cached = np.unique(np.sort(self.edges, axis=1), axis=0)
            cached.setflags(write=False)
            object.__setattr__(self, "_undirected", cached)
        return cached

    def subgraph(self, nodes) -> "Graph":
        """Induced subgraph on ``nodes`` (relabelled to 0..k-1 in the given order)."""
        nodes = np.asarray(nodes, dtype=np.int64)
        remap = np.full(self.n, -1, dtype=np.int64)
        remap[nodes] = np.arange(len(nodes))
        e = remap[self.edges]
        e = e[(e >= 0).all(axis=1)]
        labels = None if self.labels is None else self.labels[nodes]
        return Graph(len(nodes), e, self.features[nodes], labels)


def _open_text(path):
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, "rt", encoding="utf-8")
    return open(path, "r", encoding="utf-8")


def read_edge_list(path):
    """Parse an edge-list file into ``(edges, n_header)``.

    ``n_header`` is None when the file carries no ``# n=<count>`` line.
    """
    pairs = []
    n_header = None
    with _open_text(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                m = _HEADER.match(line)
                if m:
                    n_header = int(m.group(1))
                continue
            parts = line.split()
            if len(parts) != 2:
                raise GraphFormatError("expected two node ids per line", path, lineno)
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError:
                raise GraphFormatError(f"non-integer node id in {line!r}", path, lineno) from None
            if u < 0 or v < 0:
                raise GraphFormatError("node ids must be nonnegative", path, lineno)
            if u == v:
                raise GraphFormatError(f"self-loop on node {u}", path, lineno)
            if n_header is not None and max(u, v) >= n_header:
                raise IndexError(f"{path}:{lineno}: node id {max(u, v)} >= n={n_header}")
            pairs.append((u, v))
    edges = np.array(pairs, dtype=np.int64).reshape(-1, 2)
    return edges, n_header


def read_features(path) -> np.ndarray:
    try:
        X = np.loadtxt(path, delimiter=",", ndmin=2, dtype=float)
    except ValueError as exc:
        raise GraphFormatError(str(exc), path) from None
    return X


def read_labels(path) -> np.ndarray:
    labels = []
    with _open_text(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            try:
                labels.append(int(line))
            except ValueError:
                raise GraphFormatError(f"invalid label {line!r}", path, lineno) from None
    return np.array(labels, dtype=np.int64)


def load_graph(edge_path, feature_path, label_path=None, symmetrize=False) -> Graph:
    """Load a graph from an edge list, a feature CSV and an optional label file.

    The node count is taken from the ``# n=`` header when present, otherwise
    it is ``1 + max id``.  Duplicate edges are dropped.  With ``symmetrize``
    every edge is reciprocated after loading.
    """
    edges, n_header = read_edge_list(edge_path)
    X = read_features(feature_path)
    if n_header is not None:
        n = n_header
    else:
        n = int(edges.max()) + 1 if len(edges) else X.shape[0]
    if X.shape[0] != n:
        raise ShapeError(f"{feature_path}: {X.shape[0]} feature rows for {n} nodes")
    labels = None
    if label_path is not None:
        labels = read_labels(label_path)
        if labels.shape[0] != n:
            raise ShapeError(f"{label_path}: {labels.shape[0]} labels for {n} nodes")
    g = Graph(n, edges, X, labels)
    return g.symmetrized() if symmetrize else g


def load_edges(edge_path) -> Graph:
    """Load only the structure; the graph gets a zero-width feature matrix."""
    edges, n_header = read_edge_list(edge_path)
    n = n_header if n_header is not None else (int(edges.max()) + 1 if len(edges) else 0)
    return Graph(n, edges, np.zeros((n, 0)))


def save_graph(g: Graph, edge_path, feature_path=None, label_path=None) -> None:
    """Write ``g`` in the formats accepted by :func:`load_graph`."""
    with open(edge_path, "w", encoding="utf-8") as fh:
        fh.write(f"# n={g.n}\n")
        for u, v in g.edges:
            fh.write(f"{u}\t{v}\n")
    if feature_path is not None:
        fmt = "%d" if np.all(g.features == np.round(g.features)) else "%.17g"
        np.savetxt(feature_path, g.features, delimiter=",", fmt=fmt)
    if label_path is not None and g.labels is not None:
        np.savetxt(label_path, g.labels, fmt="%d")


def to_adjacency(g: Graph) -> sp.csr_array:
    """Binary adjacency with ``A[u, v] = 1`` for each directed edge."""
    e = g.edges
    A = sp.csr_array((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(g.n, g.n))
    return canonical(A)


def _check_square(A):
    if A.shape[0] != A.shape[1]:
        raise ShapeError(f"expected a square matrix, got {A.shape}")


def normalize_sym(A) -> sp.csr_array:
    """``D^{-1/2} (A + I) D^{-1/2}`` with ``D`` the row sums of ``A + I``."""
    A = sp.csr_array(A, dtype=float)
    _check_square(A)
    n = A.shape[0]
    At = canonical(A + sp.eye_array(n, format="csr"))
    d = np.asarray(At.sum(axis=1)).ravel()
    rows = np.repeat(np.arange(n), np.diff(At.indptr))
    # d_i * d_j is commutative, so symmetric input gives exactly symmetric output
    At.data = At.data / np.sqrt(d[rows] * d[At.indices])
    return At


def row_stochastic(A) -> sp.csr_array:
    """Divide each row by its sum; all-zero rows become the uniform row ``1/n``."""
    A = canonical(sp.csr_array(A, dtype=float))
    _check_square(A)
    n = A.shape[0]
    d = np.asarray(A.sum(axis=1)).ravel()
    rows = np.repeat(np.arange(n), np.diff(A.indptr))
    A.data = A.data / d[rows]
    dangling = np.flatnonzero(d == 0)
    if len(dangling):
        fill = sp.csr_array(
            (np.full(len(dangling) * n, 1.0 / n),
             (np.repeat(dangling, n), np.tile(np.arange(n), len(dangling)))),
            shape=(n, n),
        )
        A = canonical(A + fill)
    return A


def dump_matrix(M, path) -> None:
    """Write ``M`` as ``rows cols nnz`` followed by ``row col value`` lines."""
    M = canonical(M)
    coo = M.tocoo()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{M.shape[0]} {M.shape[1]} {M.nnz}\n")
        for r, c, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{r} {c} {v:.17g}\n")


def load_matrix(path) -> sp.csr_array:
    with _open_text(path) as fh:
        header = fh.readline().split()
        if len(header) != 3:
            raise GraphFormatError("expected header 'rows cols nnz'", path, 1)
        n_rows, n_cols, nnz = (int(x) for x in header)
        body = np.loadtxt(fh, ndmin=2) if nnz else np.empty((0, 3))
    if body.shape[0] != nnz:
        raise GraphFormatError(f"header declares {nnz} entries, found {body.shape[0]}", path)
    rows = body[:, 0].astype(np.int64)
    cols = body[:, 1].astype(np.int64)
    return canonical(sp.csr_array((body[:, 2], (rows, cols)), shape=(n_rows, n_cols)))
