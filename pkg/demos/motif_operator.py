"""
From edges to a propagation operator
====================================

A four-node directed graph, its seven triangle-motif adjacencies, and how
mixing motif counts into the edge weights changes personalized PageRank.
"""
import numpy as np
import scipy.sparse as sp

from mppr import MotifId, all_motif_adjacencies, apply_beta, blend, mppr_matrix
from mppr.tasks import edge_matrix

np.set_printoptions(precision=3, suppress=True)

# v0 receives an edge from everyone; v1 <-> v2 and v2 <-> v3 are reciprocal
edges = [(1, 2), (2, 1), (2, 3), (3, 2), (1, 0), (2, 0), (3, 0)]
rows, cols = zip(*edges)
A = sp.csr_array((np.ones(len(edges)), (rows, cols)), shape=(4, 4))
print("adjacency\n", A.toarray())

# Each motif matrix counts, for every node pair, the motif instances
# containing both nodes. Only some motifs occur here.
for m, ma in all_motif_adjacencies(A).items():
    W = ma.matrix
    if W.nnz:
        print(f"{m.name}: {int(W.sum() // 2)} pair-instances")
        print(W.toarray())

# The blend keeps a share (1 - tau) of the plain edge weights
E = edge_matrix(A, "symmetric")
M7 = all_motif_adjacencies(A)[MotifId.M7]
for tau in (0.0, 0.5, 0.9):
    theta = blend(E, M7, tau)
    print(f"tau={tau}: blended weights\n", theta.matrix.toarray())

# PageRank with restart probability alpha, from every node at once.
# Pairs that share motifs end up closer.
alpha = 0.1
plain = mppr_matrix(blend(E, M7, 0.0), alpha).matrix
motif = mppr_matrix(blend(E, M7, 0.9), alpha).matrix
print("edge-only PPR\n", plain)
print("motif PPR\n", motif)
print("v0-v2 affinity: %.3f -> %.3f" % (plain[0, 2], motif[0, 2]))

# An entrywise power beta < 1 lifts small entries relative to large ones
op = apply_beta(mppr_matrix(blend(E, M7, 0.9), alpha), 0.5)
print("after beta = 0.5\n", op.materialized)

# The operator acts on per-node feature rows
H = np.eye(4)[:, :2]
print("propagated first two indicator columns\n", op @ H)
