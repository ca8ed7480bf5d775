"""
Semi-supervised node classification
===================================

Trains the MLP-plus-propagation classifier on a planted two-community graph
and compares where propagation is applied. Pass a directory holding
edges.txt / features.csv.gz / labels.txt (for example data/cora) to run on
real data instead; that takes a few minutes per mode.

    python3 demos/node_classification.py [data_dir]
"""
import sys
import time

import numpy as np

from mppr import ExperimentConfig, Graph, aggregate, load_graph, run_experiment


def planted_graph(n_per=150, seed=0):
    # two communities, dense inside, sparse across; noisy features
    rng = np.random.default_rng(seed)
    y = np.repeat([0, 1], n_per)
    p = np.where(y[:, None] == y[None, :], 0.05, 0.004)
    A = rng.random((2 * n_per, 2 * n_per)) < p
    np.fill_diagonal(A, False)
    X = np.abs(rng.normal(size=(2 * n_per, 30)) + np.where(y[:, None] == 0, 0.3, -0.3))
    return Graph(2 * n_per, np.argwhere(A), X, y)


if len(sys.argv) > 1:
    d = sys.argv[1]
    g = load_graph(f"{d}/edges.txt", f"{d}/features.csv.gz", f"{d}/labels.txt")
    base = ExperimentConfig(runs=3)
else:
    g = planted_graph()
    base = ExperimentConfig(runs=3, n_train_per_class=10, n_val=60, max_epochs=400,
                            patience=50)
print(f"{g.n} nodes, {len(g.edges)} directed edges, {g.n_classes} classes")

# "none" is a feature-only MLP; "predict" propagates only at inference;
# "train_predict" propagates in both phases
for mode in ("none", "predict", "train_predict"):
    t = time.time()
    summary = aggregate(run_experiment(g, base.with_overrides(ablation=mode)))
    acc = summary["test_accuracy"]
    print(f"{mode:14s} accuracy {acc['mean']:.3f} +- {acc['std']:.3f}  "
          f"epochs {summary['mean_epochs']:.0f}  {time.time() - t:.1f}s")

# tau = 0 is plain edge-based PPR propagation
summary = aggregate(run_experiment(g, base.with_overrides(tau=0.0)))
print(f"{'edge PPR':14s} accuracy {summary['test_accuracy']['mean']:.3f}")
