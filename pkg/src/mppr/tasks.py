"""Node classification and link prediction pipelines."""
from __future__ import annotations

import logging
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .config import ExperimentConfig
from .exceptions import CapacityError, SplitError
from .graph import Graph, to_adjacency
from .metrics import accuracy, average_precision, roc_auc
from .motifs import BlendedAdjacency, blend, motif_adjacency
from .neural import (AdamState, adam_step, backward, edge_loss_grad, forward, init_mlp,
                     log_softmax_rows, node_loss_grad, sigmoid)
from .ppr import PropagationOperator, apply_beta, mppr_matrix

log = logging.getLogger(__name__)


# --------------------------------------------------------------------------- splits

@dataclass(frozen=True)
class NodeSplit:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    seed: int


def split_nodes(labels, n_train_per_class=20, n_val=500, seed=0) -> NodeSplit:
    """Stratified training set, random validation set, remaining labeled nodes as test."""
    if isinstance(labels, Graph):
        labels = labels.labels
    if labels is None:
        raise SplitError("graph has no labels")
    y = np.asarray(labels)
    rng = np.random.default_rng(seed)
    train = []
    for c in range(int(y.max()) + 1):
        members = np.flatnonzero(y == c)
        if len(members) < n_train_per_class:
            raise SplitError(f"class {c} has {len(members)} nodes, need {n_train_per_class}")
        train.append(rng.choice(members, n_train_per_class, replace=False))
    train = np.sort(np.concatenate(train))
    rest = np.setdiff1d(np.flatnonzero(y >= 0), train)
    if len(rest) < n_val:
        raise SplitError(f"only {len(rest)} labeled nodes left for a validation set of {n_val}")
    rest = rng.permutation(rest)
    return NodeSplit(train, np.sort(rest[:n_val]), np.sort(rest[n_val:]), seed)


def largest_component(g: Graph) -> Graph:
    """Induced subgraph on the largest weakly connected component."""
    A = to_adjacency(g)
    _, comp = connected_components(A, directed=True, connection="weak")
    sizes = np.bincount(comp)
    keep = np.flatnonzero(comp == sizes.argmax())
    return g.subgraph(keep)


def bfs_tree(n, pairs, root=0) -> np.ndarray:
    """BFS spanning tree over undirected ``pairs``; neighbors visited in ascending order."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    S = sp.csr_array((np.ones(2 * len(pairs)),
                      (np.r_[pairs[:, 0], pairs[:, 1]], np.r_[pairs[:, 1], pairs[:, 0]])),
                     shape=(n, n))
    S.sum_duplicates()
    S.sort_indices()
    seen = np.zeros(n, dtype=bool)
    seen[root] = True
    queue = deque([root])
    tree = []
    while queue:
        u = queue.popleft()
        for v in S.indices[S.indptr[u]:S.indptr[u + 1]]:
            if not seen[v]:
                seen[v] = True
                tree.append((min(u, v), max(u, v)))
                queue.append(v)
    if not seen.all():
        raise SplitError("graph is not connected; select the largest component first")
    return np.array(tree, dtype=np.int64).reshape(-1, 2)


def _encode(pairs, n):
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    return pairs[:, 0] * n + pairs[:, 1]


def sample_negatives(g: Graph, k: int, seed=0, undirected=False, exclude=None) -> np.ndarray:
    """``k`` distinct node pairs ``u != v`` that are not edges of ``g``.

    In undirected mode pairs are returned as ``(min, max)`` and a pair is a
    non-edge when neither direction is an edge.  ``exclude`` lists further
    pairs that must not be drawn.  ``seed`` may be a ``numpy`` Generator.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n = g.n
    edges = g.undirected_edges() if undirected else g.edges
    forbidden = _encode(edges, n)
    if exclude is not None and len(exclude):
        ex = np.asarray(exclude, dtype=np.int64).reshape(-1, 2)
        if undirected:
            ex = np.sort(ex, axis=1)
        forbidden = np.union1d(forbidden, _encode(ex, n))
    forbidden = np.unique(forbidden)
    total = n * (n - 1) // 2 if undirected else n * (n - 1)
    capacity = total - len(forbidden)
    if k > capacity:
        raise CapacityError(f"asked for {k} negatives but only {capacity} non-edges exist")
    if k == 0:
        return np.empty((0, 2), dtype=np.int64)
    if k > capacity // 2:
        # dense regime: enumerate every candidate instead of rejection sampling
        u, v = np.triu_indices(n, 1) if undirected else np.nonzero(~np.eye(n, dtype=bool))
        keys = u * n + v
        keys = keys[~np.isin(keys, forbidden)]
        chosen = rng.choice(keys, k, replace=False)
    else:
        chosen = np.empty(0, dtype=np.int64)
        while len(chosen) < k:
            need = k - len(chosen)
            draw = rng.integers(0, n, size=(2 * need + 16, 2))
            draw = draw[draw[:, 0] != draw[:, 1]]
            if undirected:
                draw = np.sort(draw, axis=1)
            keys = draw[:, 0] * n + draw[:, 1]
            keys = keys[~np.isin(keys, forbidden) & ~np.isin(keys, chosen)]
            _, first = np.unique(keys, return_index=True)
            keys = keys[np.sort(first)]
            chosen = np.concatenate([chosen, keys[:need]])
    return np.stack([chosen // n, chosen % n], axis=1)


@dataclass(frozen=True)
class EdgeSplit:
    """Undirected positive pairs per split, matching negative pairs, and the BFS tree."""

    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    train_neg: np.ndarray
    val_neg: np.ndarray
    test_neg: np.ndarray
    tree: np.ndarray
    seed: int


def _allocate(n_items, weights, rng):
    """Integer counts summing to ``n_items`` proportional to ``weights``.

    Fractional remainders are settled by a seeded draw.
    """
    w = np.asarray(weights, dtype=float)
    if n_items == 0 or w.sum() == 0:
        return np.zeros(len(w), dtype=int)
    expected = n_items * w / w.sum()
    counts = np.floor(expected).astype(int)
    left = n_items - counts.sum()
    if left:
        frac = expected - counts
        picks = rng.choice(len(w), size=left, replace=False, p=frac / frac.sum())
        counts[picks] += 1
    return counts


def split_edges(g: Graph, ratios=(5, 1, 4), seed=0) -> EdgeSplit:
    """Transductive train/val/test edge split that keeps the training graph connected.

    Every edge of a BFS spanning tree (root 0) is forced into training; the
    other edges are shuffled and allocated to approach ``ratios``.
    """
    rng = np.random.default_rng(seed)
    pairs = g.undirected_edges()
    tree = bfs_tree(g.n, pairs)
    in_tree = np.isin(_encode(pairs, g.n), _encode(tree, g.n))
    rest = rng.permutation(pairs[~in_tree])
    r = np.asarray(ratios, dtype=float) / np.sum(ratios)
    targets = len(pairs) * r
    weights = [max(targets[0] - len(tree), 0.0), targets[1], targets[2]]
    n_extra, n_val, n_test = _allocate(len(rest), weights, rng)
    val = rest[:n_val]
    test = rest[n_val:n_val + n_test]
    train = np.vstack([tree, rest[n_val + n_test:]])
    sizes = [len(train), len(val), len(test)]
    neg = sample_negatives(g, sum(sizes), rng, undirected=True)
    train_neg, val_neg, test_neg = np.split(neg, np.cumsum(sizes)[:2])

    def order(a):
        return a[np.lexsort((a[:, 1], a[:, 0]))] if len(a) else a.reshape(0, 2)

    return EdgeSplit(order(train), order(val), order(test), train_neg, val_neg, test_neg,
                     order(tree), seed)


def train_graph(g: Graph, esplit: EdgeSplit) -> Graph:
    """Directed edges of ``g`` whose undirected pair belongs to the training split."""
    keys = _encode(np.sort(g.edges, axis=1), g.n)
    keep = np.isin(keys, _encode(esplit.train, g.n))
    return Graph(g.n, g.edges[keep], g.features, g.labels)


# --------------------------------------------------------------------------- operators

@dataclass(frozen=True)
class OperatorBundle:
    operator: PropagationOperator
    theta: BlendedAdjacency
    seconds: float


def edge_matrix(A, mode="symmetric"):
    """The edge term of the blend: ``A`` itself or its 0/1 symmetrization."""
    A = sp.csr_array(A, dtype=float)
    if mode == "symmetric":
        A = sp.csr_array(((A + A.T) > 0).astype(float))
    return A


def build_operator(A, cfg: ExperimentConfig) -> OperatorBundle:
    """Motif adjacency -> blend -> PPR matrix -> entrywise beta power.

    Motif counts always come from the directed ``A``; the edge term of the
    blend follows ``cfg.edge_adjacency``.
    """
    start = time.perf_counter()
    m = cfg.motif_id
    E = edge_matrix(A, cfg.edge_adjacency)
    if m is None or cfg.tau == 0.0:
        theta = BlendedAdjacency(0.0, E, m)
    else:
        theta = blend(E, motif_adjacency(A, m), cfg.tau)
    pi = mppr_matrix(theta, cfg.alpha, solver=cfg.solver, K=cfg.max_terms, tol=cfg.tol,
                     threshold=cfg.sparsify_threshold)
    op = apply_beta(pi, cfg.beta)
    return OperatorBundle(op, theta, time.perf_counter() - start)


# --------------------------------------------------------------------------- reports

@dataclass
class RunReport:
    task: str
    seed: int
    config_hash: str
    metrics: dict = field(default_factory=dict)
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    val_metric: list = field(default_factory=list)
    epoch_times: list = field(default_factory=list)
    epochs: int = 0
    best_epoch: int = 0
    total_time: float = 0.0
    operator_time: float = 0.0
    sparsify_threshold: Optional[float] = None

    @property
    def mean_epoch_time(self) -> float:
        return float(np.mean(self.epoch_times)) if self.epoch_times else 0.0

    def to_record(self, per_epoch=True) -> dict:
        rec = asdict(self)
        rec["mean_epoch_time"] = self.mean_epoch_time
        if not per_epoch:
            for key in ("train_loss", "val_loss", "val_metric", "epoch_times"):
                rec.pop(key)
        return rec


def aggregate(reports, config_hash=None) -> dict:
    """Mean and variance of every metric plus timing summaries across runs."""
    out = {"n_runs": len(reports), "config_hash": config_hash or reports[0].config_hash}
    keys = sorted({k for r in reports for k in r.metrics})
    for k in keys:
        vals = np.array([r.metrics[k] for r in reports if k in r.metrics], dtype=float)
        out[k] = {"mean": float(vals.mean()), "var": float(vals.var()),
                  "std": float(vals.std())}
    out["mean_epoch_time"] = float(np.mean([r.mean_epoch_time for r in reports]))
    out["mean_total_time"] = float(np.mean([r.total_time for r in reports]))
    out["mean_epochs"] = float(np.mean([r.epochs for r in reports]))
    return out


# --------------------------------------------------------------------------- training

class EarlyStopping:
    """Stop after ``patience`` epochs without improvement.

    An epoch improves when validation accuracy rises, or stays equal while
    validation loss falls.  The best snapshot is kept for restoring.
    """

    def __init__(self, patience=100):
        self.patience = patience
        self.best_acc = -np.inf
        self.best_loss = np.inf
        self.best_epoch = -1
        self.snapshot = None
        self.bad_epochs = 0

    def step(self, epoch, val_acc, val_loss, snapshot) -> bool:
        if val_acc > self.best_acc or (val_acc == self.best_acc and val_loss < self.best_loss):
            self.best_acc, self.best_loss = val_acc, val_loss
            self.best_epoch = epoch
            self.snapshot = snapshot()
            self.bad_epochs = 0
            return False
        self.bad_epochs += 1
        return self.bad_epochs >= self.patience


def prepare_features(X, cfg: ExperimentConfig):
    """Cast to the training dtype, optionally row-normalize, and go sparse when it pays."""
    X = np.asarray(X, dtype=np.float64)
    if cfg.normalize_features:
        s = X.sum(axis=1, keepdims=True)
        X = X / np.where(s == 0, 1.0, s)
    X = X.astype(cfg.dtype)
    if X.size and np.count_nonzero(X) < 0.1 * X.size:
        return sp.csr_array(X)
    return X


def _operator_matrix(bundle, dtype):
    M = bundle.operator.materialized
    return M.astype(dtype) if sp.issparse(M) else np.ascontiguousarray(M, dtype=dtype)


def _node_eval(model, X, M, labels, idx):
    Z = forward(model, X, M, mode="eval").Z
    logp = log_softmax_rows(Z[idx])
    loss = float(-logp[np.arange(len(idx)), labels[idx]].mean())
    return Z, accuracy(Z, labels, idx), loss


def train_node_classification(g: Graph, split: NodeSplit, cfg: ExperimentConfig,
                              operator: Optional[OperatorBundle] = None, seed=None):
    """Full-batch training of the MLP + propagation classifier with early stopping.

    ``cfg.ablation`` selects where propagation is applied: ``"train"``,
    ``"predict"``, both (``"train_predict"``) or neither (``"none"``).
    Returns ``(model, report)``.
    """
    seed = split.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    dtype = np.dtype(cfg.dtype).type
    X = prepare_features(g.features, cfg)
    labels = g.labels
    use_train = cfg.ablation in ("train", "train_predict")
    use_pred = cfg.ablation in ("predict", "train_predict")
    report = RunReport("nc", int(seed), cfg.config_hash())
    M = None
    if use_train or use_pred:
        if operator is None:
            operator = build_operator(to_adjacency(g), cfg)
        report.operator_time = operator.seconds
        report.sparsify_threshold = operator.operator.base.threshold
        M = _operator_matrix(operator, dtype)
    M_train = M if use_train else None
    M_pred = M if use_pred else None

    model = init_mlp(g.n_features, cfg.hidden, g.n_classes, rng, cfg.dropout, cfg.l2,
                     cfg.input_dropout, dtype)
    state = AdamState.zeros_like(model)
    stopper = EarlyStopping(cfg.patience)
    start = time.perf_counter()
    for epoch in range(cfg.max_epochs):
        t0 = time.perf_counter()
        trace = forward(model, X, M_train, "train", rng, cfg.operator_dropout)
        loss, dZ = node_loss_grad(trace.Z, labels, split.train, cfg.loss_reduction)
        grads = backward(trace, model, dZ, loss)
        model, state = adam_step(model, grads, state, cfg.lr)
        _, val_acc, val_loss = _node_eval(model, X, M_pred, labels, split.val)
        report.epoch_times.append(time.perf_counter() - t0)
        report.train_loss.append(grads.loss)
        report.val_loss.append(val_loss)
        report.val_metric.append(val_acc)
        if stopper.step(epoch, val_acc, val_loss, model.copy):
            break
    report.total_time = time.perf_counter() - start
    report.epochs = epoch + 1
    report.best_epoch = stopper.best_epoch
    model = stopper.snapshot
    Z, val_acc, _ = _node_eval(model, X, M_pred, labels, split.val)
    report.metrics = {"test_accuracy": accuracy(Z, labels, split.test),
                      "val_accuracy": val_acc,
                      "train_accuracy": accuracy(Z, labels, split.train)}
    return model, report


def score_edges(Z, pairs) -> np.ndarray:
    """``sigmoid(z_u . z_v)`` for every pair."""
    Z = np.asarray(Z)
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if len(pairs) and (pairs.min() < 0 or pairs.max() >= Z.shape[0]):
        raise IndexError(f"pair references a node outside [0, {Z.shape[0]})")
    s = np.einsum("ij,ij->i", Z[pairs[:, 0]], Z[pairs[:, 1]])
    return sigmoid(s.astype(np.float64))


def link_metrics(Z, pos, neg) -> dict:
    scores = np.r_[score_edges(Z, pos), score_edges(Z, neg)]
    labels = np.r_[np.ones(len(pos)), np.zeros(len(neg))]
    return {"auc": roc_auc(scores, labels), "ap": average_precision(scores, labels)}


# batches touching more than this share of the nodes use the whole operator
WHOLE_OPERATOR_FRACTION = 0.6


def train_link_prediction(g: Graph, esplit: EdgeSplit, cfg: ExperimentConfig,
                          operator: Optional[OperatorBundle] = None, seed=None):
    """Mini-batch training of the MLP encoder + propagation with a dot-product decoder.

    The operator is built from the training edges only.  Every epoch draws
    fresh negatives (one per training positive) from the non-edges of the
    full graph.  Runs a fixed number of epochs; returns ``(model, report)``.
    """
    seed = esplit.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    dtype = np.dtype(cfg.dtype).type
    X = prepare_features(g.features, cfg)
    report = RunReport("lp", int(seed), cfg.config_hash())
    if operator is None:
        operator = build_operator(to_adjacency(train_graph(g, esplit)), cfg)
    report.operator_time = operator.seconds
    report.sparsify_threshold = operator.operator.base.threshold
    M = _operator_matrix(operator, dtype)
    M_train = M if cfg.ablation in ("train", "train_predict") else None
    M_pred = M if cfg.ablation in ("predict", "train_predict") else None

    model = init_mlp(g.n_features, cfg.hidden, cfg.out_dim, rng, cfg.dropout, cfg.l2,
                     cfg.input_dropout, dtype)
    state = AdamState.zeros_like(model)
    pos = esplit.train
    val_pairs = np.vstack([esplit.val, esplit.val_neg])
    val_targets = np.r_[np.ones(len(esplit.val)), np.zeros(len(esplit.val_neg))]
    val_rows, val_local = np.unique(val_pairs, return_inverse=True)
    val_local = val_local.reshape(-1, 2)
    # the validation rows of the operator are fixed, so slice them once
    M_val = None if M_pred is None else np.ascontiguousarray(M_pred[val_rows])
    # Each batch gathers the operator rows of its endpoints, into one reused
    # buffer when the operator is dense.  A symmetric dense operator without
    # dropout is instead propagated whole (and reused as its own transpose)
    # when the batch touches most rows, since the full product is then cheaper.
    dense = M_train is not None and not sp.issparse(M_train)
    symmetric = dense and cfg.operator_dropout == 0 and np.array_equal(M_train, M_train.T)
    row_buffer = None
    if dense:
        row_buffer = np.empty((min(2 * 2 * cfg.batch_size, g.n), g.n), dtype=M_train.dtype)
    start = time.perf_counter()
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        order = rng.permutation(len(pos))
        neg = sample_negatives(g, len(pos), rng, undirected=True)
        losses = []
        for b in range(0, len(pos), cfg.batch_size):
            idx = order[b:b + cfg.batch_size]
            pairs = np.vstack([pos[idx], neg[b:b + len(idx)]])
            targets = np.r_[np.ones(len(idx)), np.zeros(len(idx))]
            op, rows, whole = M_train, None, False
            if M_train is not None:
                # only the batch's endpoints need propagated embeddings
                rows, local = np.unique(pairs, return_inverse=True)
                whole = symmetric and len(rows) > WHOLE_OPERATOR_FRACTION * g.n
                if whole:
                    rows = None
                else:
                    pairs = local.reshape(-1, 2)
                    if row_buffer is not None:
                        op = np.take(M_train, rows, axis=0, out=row_buffer[:len(rows)],
                                     mode="clip")
                        rows = None
            trace = forward(model, X, op, "train", rng, cfg.operator_dropout, rows=rows,
                            symmetric=whole)
            loss, dZ = edge_loss_grad(trace.Z, pairs, targets, cfg.loss_reduction)
            grads = backward(trace, model, dZ, loss)
            model, state = adam_step(model, grads, state, cfg.lr)
            losses.append(grads.loss)
        if M_pred is not None:
            Z = forward(model, X, M_val, "eval").Z
            val_loss, _ = edge_loss_grad(Z, val_local, val_targets, "mean")
        else:
            Z = forward(model, X, None, "eval").Z
            val_loss, _ = edge_loss_grad(Z, val_pairs, val_targets, "mean")
        report.epoch_times.append(time.perf_counter() - t0)
        report.train_loss.append(float(np.mean(losses)))
        report.val_loss.append(val_loss)
    report.total_time = time.perf_counter() - start
    report.epochs = cfg.epochs
    report.best_epoch = cfg.epochs - 1
    Z = forward(model, X, M_pred, "eval").Z
    val = link_metrics(Z, esplit.val, esplit.val_neg)
    test = link_metrics(Z, esplit.test, esplit.test_neg)
    report.metrics = {"auc": test["auc"], "ap": test["ap"],
                      "val_auc": val["auc"], "val_ap": val["ap"]}
    return model, report


# --------------------------------------------------------------------------- experiments

def prepare_graph(g: Graph, cfg: ExperimentConfig) -> Graph:
    if cfg.symmetrize:
        g = g.symmetrized()
    if cfg.largest_component:
        g = largest_component(g)
    return g


def run_experiment(g: Graph, cfg: ExperimentConfig, return_models=False):
    """Run ``cfg.runs`` independent repetitions; run ``i`` uses seed ``cfg.seed + i``.

    Node classification shares one operator across runs; link prediction
    builds one per run from that run's training graph.  Runs are distributed
    over ``cfg.workers`` threads and returned in seed order.
    """
    g = prepare_graph(g, cfg)
    shared = None
    if cfg.task == "nc" and cfg.ablation != "none":
        shared = build_operator(to_adjacency(g), cfg)

    def one(i):
        seed = cfg.seed + i
        split_seed = seed if cfg.resplit else cfg.seed
        if cfg.task == "nc":
            split = split_nodes(g.labels, cfg.n_train_per_class, cfg.n_val, split_seed)
            return train_node_classification(g, split, cfg, shared, seed)
        esplit = split_edges(g, cfg.edge_ratios, split_seed)
        return train_link_prediction(g, esplit, cfg, seed=seed)

    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            results = list(pool.map(one, range(cfg.runs)))
    else:
        results = [one(i) for i in range(cfg.runs)]
    for _, rep in results:
        log.info("run seed=%d metrics=%s epochs=%d", rep.seed, rep.metrics, rep.epochs)
    if return_models:
        return results
    return [rep for _, rep in results]
