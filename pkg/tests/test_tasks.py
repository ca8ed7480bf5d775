import json
from collections import deque

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from mppr.config import ExperimentConfig
from mppr.exceptions import CapacityError, SplitError
from mppr.graph import Graph, to_adjacency
from mppr.tasks import (EarlyStopping, aggregate, bfs_tree, build_operator, largest_component,
                        run_experiment, sample_negatives, score_edges, split_edges, split_nodes,
                        train_graph, train_link_prediction, train_node_classification)

from synthetic import caveman, two_clusters


def connected(n, pairs):
    nbrs = [[] for _ in range(n)]
    for u, v in pairs:
        nbrs[u].append(v)
        nbrs[v].append(u)
    seen = {0}
    q = deque([0])
    while q:
        for w in nbrs[q.popleft()]:
            if w not in seen:
                seen.add(w)
                q.append(w)
    return len(seen) == n


def random_connected_graph(n, extra, rng):
    # random tree plus extra random edges
    edges = [(int(rng.integers(0, i)), i) for i in range(1, n)]
    for _ in range(extra):
        u, v = rng.choice(n, 2, replace=False)
        edges.append((int(u), int(v)))
    perm = rng.permutation(n)
    edges = [(perm[u], perm[v]) for u, v in edges]
    return Graph(n, np.array(edges), np.zeros((n, 1)))


def cycle(n):
    return Graph(n, np.array([(i, (i + 1) % n) for i in range(n)]), np.zeros((n, 1)))


# --------------------------------------------------------------------------- node splits

def test_split_nodes_sizes_and_determinism():
    y = np.repeat(np.arange(7), 100)
    s = split_nodes(y, 20, 500, seed=3)
    assert len(s.train) == 140
    assert np.all(np.bincount(y[s.train]) == 20)
    assert len(s.val) == 500 and len(s.test) == 700 - 640
    t = split_nodes(y, 20, 500, seed=3)
    assert all(np.array_equal(a, b) for a, b in ((s.train, t.train), (s.val, t.val), (s.test, t.test)))
    assert not np.array_equal(split_nodes(y, 20, 500, seed=4).train, s.train)


def test_split_nodes_disjoint_cover_on_small_graph():
    y = np.array([0, 1, 2] * 10)
    y[[4, 17]] = -1
    s = split_nodes(y, 3, 6, seed=0)
    parts = [set(s.train), set(s.val), set(s.test)]
    assert all(not (a & b) for i, a in enumerate(parts) for b in parts[i + 1:])
    assert set().union(*parts) == set(np.flatnonzero(y >= 0))


def test_split_nodes_errors():
    with pytest.raises(SplitError):
        split_nodes(np.array([0, 0, 1]), 2, 0)
    with pytest.raises(SplitError):
        split_nodes(np.array([0, 0, 1, 1]), 1, 5)


# --------------------------------------------------------------------------- edge splits

def test_bfs_tree_is_pinned():
    pairs = np.array([[0, 2], [0, 1], [1, 2], [2, 3], [1, 3]])
    assert bfs_tree(4, pairs).tolist() == [[0, 1], [0, 2], [1, 3]]


def test_tree_input_stays_in_train():
    g = random_connected_graph(15, 0, np.random.default_rng(0))
    es = split_edges(g, (5, 1, 4), seed=1)
    assert len(es.train) == 14 and len(es.val) == 0 and len(es.test) == 0


def test_cycle_extra_edge_ratio_draw():
    outcomes = []
    for seed in range(300):
        es = split_edges(cycle(10), (5, 1, 4), seed=seed)
        assert len(es.train) == 9 and len(es.val) + len(es.test) == 1
        outcomes.append(len(es.test))
    share = np.mean(outcomes)
    # the single free edge goes to val : test in proportion 1 : 4
    assert 0.7 < share < 0.9


@settings(max_examples=100, deadline=None)
@given(st.integers(4, 40), st.integers(0, 80), st.integers(0, 2**31))
def test_edge_split_invariants(n, extra, seed):
    rng = np.random.default_rng(seed)
    g = random_connected_graph(n, extra, rng)
    # one negative per positive needs at least as many non-edges as edges
    assume(2 * len(g.undirected_edges()) <= n * (n - 1) // 2)
    es = split_edges(g, (5, 1, 4), seed=seed)
    keys = [set(map(tuple, a.tolist())) for a in (es.train, es.val, es.test)]
    assert all(not (a & b) for i, a in enumerate(keys) for b in keys[i + 1:])
    assert set().union(*keys) == set(map(tuple, g.undirected_edges().tolist()))
    assert set(map(tuple, es.tree.tolist())) <= keys[0]
    assert connected(n, es.train)
    edges = set(map(tuple, g.undirected_edges().tolist()))
    for pos, neg in ((es.train, es.train_neg), (es.val, es.val_neg), (es.test, es.test_neg)):
        assert len(pos) == len(neg)
        assert not edges & set(map(tuple, neg.tolist()))
    # when the tree fits in the training share, counts are within one of 5:1:4
    m = len(edges)
    if len(es.tree) <= 0.5 * m:
        assert abs(len(es.val) - 0.1 * m) < 1
        assert abs(len(es.test) - 0.4 * m) < 1


def test_too_dense_for_negatives():
    g = Graph(4, np.array([(u, v) for u in range(4) for v in range(u + 1, 4)]), np.zeros((4, 1)))
    with pytest.raises(CapacityError):
        split_edges(g)


def test_disconnected_graph_rejected():
    g = Graph(4, np.array([[0, 1], [2, 3]]), np.zeros((4, 1)))
    with pytest.raises(SplitError):
        split_edges(g)


def test_largest_component():
    g = Graph(6, np.array([[0, 1], [2, 3], [3, 4], [5, 4]]), np.arange(6.0), np.arange(6))
    h = largest_component(g)
    assert h.n == 4 and h.labels.tolist() == [2, 3, 4, 5]


# --------------------------------------------------------------------------- negatives

def test_negative_capacity():
    n = 5
    full = Graph(n, np.array([(u, v) for u in range(n) for v in range(n) if u != v]),
                 np.zeros((n, 1)))
    with pytest.raises(CapacityError):
        sample_negatives(full, 1)
    assert len(sample_negatives(full, 0)) == 0


def test_negatives_on_empty_graph():
    g = Graph(3, np.empty((0, 2)), np.zeros((3, 1)))
    neg = sample_negatives(g, 3, seed=0)
    assert len(set(map(tuple, neg.tolist()))) == 3
    assert np.all(neg[:, 0] != neg[:, 1])
    # all six ordered pairs are available; asking for every one of them works too
    assert len(set(map(tuple, sample_negatives(g, 6, seed=1).tolist()))) == 6


def test_many_negatives_avoid_edges_and_repeats():
    rng = np.random.default_rng(0)
    g = random_connected_graph(400, 600, rng)
    for undirected in (False, True):
        neg = sample_negatives(g, 10_000, seed=2, undirected=undirected)
        keys = set(map(tuple, neg.tolist()))
        assert len(keys) == 10_000
        assert np.all(neg[:, 0] != neg[:, 1])
        if undirected:
            assert np.all(neg[:, 0] < neg[:, 1])
            assert not keys & set(map(tuple, g.undirected_edges().tolist()))
        else:
            assert not keys & set(map(tuple, g.edges.tolist()))


def test_negatives_respect_exclusions():
    g = Graph(4, np.array([[0, 1]]), np.zeros((4, 1)))
    ex = np.array([[0, 2], [1, 2], [2, 3]])
    neg = sample_negatives(g, 2, seed=0, undirected=True, exclude=ex)
    assert set(map(tuple, neg.tolist())) == {(0, 3), (1, 3)}


# --------------------------------------------------------------------------- scoring

def test_score_edges_examples():
    Z = np.array([[1.0, 0.0], [0.0, 1.0]])
    assert np.allclose(score_edges(Z, [[0, 1]]), 0.5)
    z = np.array([[np.sqrt(10), 0.0], [np.sqrt(10), 0.0], [-np.sqrt(10), 0.0]])
    assert score_edges(z, [[0, 1]])[0] == pytest.approx(1 / (1 + np.exp(-10)))
    assert score_edges(z, [[0, 2]])[0] == pytest.approx(4.54e-5, rel=1e-3)
    with pytest.raises(IndexError):
        score_edges(Z, [[0, 5]])


def test_identical_embeddings_are_uninformative():
    from mppr.tasks import link_metrics
    Z = np.ones((50, 4))
    rng = np.random.default_rng(0)
    pos, neg = rng.integers(0, 50, (100, 2)), rng.integers(0, 50, (100, 2))
    assert link_metrics(Z, pos, neg)["auc"] == 0.5


# --------------------------------------------------------------------------- training

def nc_config(**kw):
    base = dict(motif="m7", max_epochs=200, patience=50, n_train_per_class=10, n_val=50,
                largest_component=False, hidden=16, normalize_features=False, solver="direct")
    base.update(kw)
    return ExperimentConfig(**base)


def test_early_stopping_rule():
    es = EarlyStopping(patience=2)
    assert not es.step(0, 0.5, 1.0, lambda: "a")
    assert not es.step(1, 0.5, 0.9, lambda: "b")  # same accuracy, lower loss
    assert es.snapshot == "b"
    assert not es.step(2, 0.5, 0.95, lambda: "c")
    assert es.step(3, 0.4, 0.1, lambda: "d")
    assert es.snapshot == "b" and es.best_epoch == 1


@pytest.mark.parametrize("motif", ["m1", "m5", "m7", None])
def test_two_clusters_separable(motif):
    g = two_clusters(shift=1.5, seed=1)
    s = split_nodes(g.labels, 10, 50, seed=0)
    _, rep = train_node_classification(g, s, nc_config(motif=motif), seed=0)
    assert rep.metrics["test_accuracy"] >= 0.95
    assert rep.epochs <= 200
    assert all(t > 0 for t in rep.epoch_times)
    assert all(0 <= v <= 1 for v in rep.metrics.values())
    assert len(rep.train_loss) == len(rep.val_loss) == rep.epochs


def test_ablation_ordering_on_two_clusters():
    g = two_clusters(shift=0.35, seed=2)
    means = {}
    for mode in ("none", "predict", "train_predict"):
        cfg = nc_config(ablation=mode, runs=5)
        means[mode] = np.mean([r.metrics["test_accuracy"] for r in run_experiment(g, cfg)])
    assert means["none"] <= means["predict"] <= means["train_predict"], means


def test_ablation_none_is_plain_mlp():
    g = two_clusters(seed=3)
    s = split_nodes(g.labels, 10, 50, seed=0)
    a = train_node_classification(g, s, nc_config(ablation="none"), seed=0)[1]
    b = train_node_classification(g, s, nc_config(ablation="none", motif="m1", tau=0.3,
                                                  alpha=0.5, beta=1.0), seed=0)[1]
    assert a.metrics == b.metrics and a.operator_time == 0


def test_reports_are_deterministic():
    g = two_clusters(seed=4)
    cfg = nc_config(runs=2, max_epochs=40)
    a = [r.metrics for r in run_experiment(g, cfg)]
    b = [r.metrics for r in run_experiment(g, cfg.with_overrides(workers=2))]
    assert a == b


def test_caveman_link_prediction():
    g = caveman()
    cfg = ExperimentConfig(task="lp", motif="m5", epochs=150, lr=0.01, hidden=16, out_dim=8,
                           dropout=0.0, operator_dropout=0.0, input_dropout=0.0, l2=0.0,
                           normalize_features=False, largest_component=False, solver="direct")
    aucs = []
    for seed in range(3):
        es = split_edges(g, (5, 1, 4), seed=seed)
        _, rep = train_link_prediction(g, es, cfg, seed=seed)
        aucs.append(rep.metrics["auc"])
        assert len(rep.train_loss) == 150
    assert np.mean(aucs) >= 0.9, aucs


def test_operator_uses_training_edges_only():
    g = caveman()
    es = split_edges(g, (5, 1, 4), seed=0)
    tg = train_graph(g, es)
    held = set(map(tuple, np.vstack([es.val, es.test]).tolist()))
    assert not held & set(map(tuple, np.sort(tg.edges, axis=1).tolist()))
    assert len(tg.edges) == len(es.train)
    cfg = ExperimentConfig(task="lp", motif=None, alpha=1.0, solver="direct")
    bundle = build_operator(to_adjacency(tg), cfg)
    E = bundle.theta.matrix.toarray()
    for u, v in held:
        assert E[u, v] == 0 and E[v, u] == 0


def test_aggregate_and_records():
    g = two_clusters(seed=5)
    reps = run_experiment(g, nc_config(runs=3, max_epochs=30))
    agg = aggregate(reps)
    accs = [r.metrics["test_accuracy"] for r in reps]
    assert agg["test_accuracy"]["mean"] == pytest.approx(np.mean(accs))
    assert agg["test_accuracy"]["var"] == pytest.approx(np.var(accs))
    assert agg["n_runs"] == 3 and agg["mean_epoch_time"] > 0
    rec = reps[0].to_record()
    json.dumps(rec)
    assert rec["config_hash"] == nc_config(runs=3, max_epochs=30).config_hash()
    assert [r.seed for r in reps] == [0, 1, 2]
