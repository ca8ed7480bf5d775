"""Independent reference implementations used as test oracles."""
from itertools import combinations, permutations

import numpy as np

# Induced 3x3 edge patterns of the seven triangle motifs, written out
# independently of the package's own tables.
MOTIF_PATTERNS = {
    1: [(0, 1), (1, 2), (2, 0)],
    2: [(0, 1), (1, 0), (1, 2), (2, 0)],
    3: [(0, 1), (1, 0), (1, 2), (2, 1), (0, 2)],
    4: [(0, 1), (1, 0), (1, 2), (2, 1), (0, 2), (2, 0)],
    5: [(0, 1), (1, 2), (0, 2)],
    6: [(0, 1), (0, 2), (1, 2), (2, 1)],
    7: [(1, 0), (2, 0), (1, 2), (2, 1)],
}


def _pattern(k):
    P = np.zeros((3, 3), dtype=int)
    for u, v in MOTIF_PATTERNS[k]:
        P[u, v] = 1
    return P


def brute_force_motif_adjacency(A, k):
    """Enumerate all node triples; count pairs co-occurring in an instance of motif k."""
    A = np.asarray(A, dtype=int)
    n = A.shape[0]
    P = _pattern(k)
    W = np.zeros((n, n), dtype=int)
    for triple in combinations(range(n), 3):
        sub = A[np.ix_(triple, triple)]
        if any(np.array_equal(sub[np.ix_(p, p)], P) for p in permutations(range(3))):
            for i, j in combinations(triple, 2):
                W[i, j] += 1
                W[j, i] += 1
    return W


def random_digraph(n, density, rng):
    A = (rng.random((n, n)) < density).astype(int)
    np.fill_diagonal(A, 0)
    return A


def neumann_ppr(T, alpha, terms=1000):
    T = np.asarray(T, dtype=float)
    n = T.shape[0]
    term = alpha * np.eye(n)
    total = term.copy()
    for _ in range(terms):
        term = (1 - alpha) * T @ term
        total += term
    return total


def auc_by_pairs(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = 0.0
    for p in pos:
        for q in neg:
            total += 1.0 if p > q else 0.5 if p == q else 0.0
    return total / (len(pos) * len(neg))


def central_difference(f, x, idx, h=1e-5):
    old = x[idx]
    x[idx] = old + h
    up = f()
    x[idx] = old - h
    down = f()
    x[idx] = old
    return (up - down) / (2 * h)
