import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from mppr.exceptions import DomainError, ShapeError
from mppr.motifs import (MotifId, all_motif_adjacencies, blend, masked_product,
                         motif_adjacency, split_uni_bi)

from oracles import MOTIF_PATTERNS, brute_force_motif_adjacency, random_digraph

# v1..v4 -> 0..3: v2<->v3, v3<->v4, and v2, v3, v4 each point at v1
FIXTURE_EDGES = [(1, 2), (2, 1), (2, 3), (3, 2), (1, 0), (2, 0), (3, 0)]


def fixture_adjacency():
    A = np.zeros((4, 4), dtype=int)
    for u, v in FIXTURE_EDGES:
        A[u, v] = 1
    return sp.csr_array(A)


def dense(M):
    return M.toarray() if sp.issparse(M) else np.asarray(M)


def test_seven_motifs():
    assert [m.value for m in MotifId] == list(range(1, 8))
    assert MotifId.parse("m7") is MotifId.M7
    assert MotifId.parse("M3") is MotifId.M3
    assert MotifId.parse(5) is MotifId.M5
    with pytest.raises(DomainError):
        MotifId.parse("m8")


def test_patterns_match_independent_table():
    for m in MotifId:
        P = np.zeros((3, 3), dtype=int)
        for u, v in MOTIF_PATTERNS[m.value]:
            P[u, v] = 1
        assert np.array_equal(m.pattern, P)


def test_split_examples():
    S = sp.csr_array(np.array([[0, 1], [1, 0]]))
    U, B = split_uni_bi(S)
    assert U.nnz == 0 and np.array_equal(dense(B), dense(S))
    D = sp.csr_array(np.array([[0, 1, 1], [0, 0, 1], [0, 0, 0]]))
    U, B = split_uni_bi(D)
    assert B.nnz == 0 and np.array_equal(dense(U), dense(D))
    A = np.zeros((3, 3), dtype=int)
    A[0, 1] = A[1, 0] = A[1, 2] = 1
    U, B = split_uni_bi(sp.csr_array(A))
    assert sorted(zip(*np.nonzero(dense(B)))) == [(0, 1), (1, 0)]
    assert sorted(zip(*np.nonzero(dense(U)))) == [(1, 2)]


def test_split_rejects_non_binary():
    with pytest.raises(DomainError):
        split_uni_bi(sp.csr_array(np.array([[0, 2], [0, 0]])))
    with pytest.raises(DomainError):
        split_uni_bi(sp.csr_array(np.array([[1, 0], [0, 0]])))


@settings(max_examples=80, deadline=None)
@given(st.integers(2, 10), st.floats(0, 1), st.integers(0, 2**31))
def test_split_partitions_adjacency(n, density, seed):
    A = random_digraph(n, density, np.random.default_rng(seed))
    U, B = split_uni_bi(sp.csr_array(A))
    assert np.array_equal(dense(U) + dense(B), A)
    assert np.array_equal(dense(B), dense(B).T)


def test_fixture_m7_pair_count():
    W = dense(motif_adjacency(fixture_adjacency(), MotifId.M7).matrix)
    assert W[0, 2] == 2 and W[2, 0] == 2


def test_empty_graph_gives_zero_matrices():
    A = sp.csr_array((5, 5))
    for m, ma in all_motif_adjacencies(A).items():
        assert ma.matrix.nnz == 0, m


def test_masked_product_matches_dense():
    rng = np.random.default_rng(3)
    X = sp.random_array((7, 7), density=0.4, rng=rng, format="csr")
    Y = sp.random_array((7, 7), density=0.4, rng=rng, format="csr")
    mask = sp.random_array((7, 7), density=0.3, rng=rng, format="csr")
    expected = (X @ Y).toarray() * mask.toarray()
    assert np.allclose(dense(masked_product(X, Y, mask)), expected)


@pytest.mark.parametrize("m", list(MotifId))
def test_random_graph_matches_oracle(m):
    rng = np.random.default_rng(100 + m.value)
    for _ in range(5):
        A = random_digraph(10, 0.35, rng)
        got = dense(motif_adjacency(sp.csr_array(A), m).matrix)
        assert np.array_equal(got, brute_force_motif_adjacency(A, m.value))


@settings(max_examples=40, deadline=None)
@given(st.integers(3, 9), st.floats(0.05, 0.9), st.integers(0, 2**31))
def test_output_symmetric_zero_diagonal_integer(n, density, seed):
    A = sp.csr_array(random_digraph(n, density, np.random.default_rng(seed)))
    for m, ma in all_motif_adjacencies(A).items():
        W = dense(ma.matrix)
        assert np.array_equal(W, W.T)
        assert not np.any(np.diag(W))
        assert np.array_equal(W, np.round(W)) and W.min() >= 0


def test_bidirectional_only_graph_m4():
    rng = np.random.default_rng(11)
    for _ in range(10):
        S = np.triu(rng.random((9, 9)) < 0.5, 1).astype(int)
        S = S + S.T
        A = sp.csr_array(S)
        _, B = split_uni_bi(A)
        expected = dense(B @ B) * dense(B)
        assert np.array_equal(dense(motif_adjacency(A, MotifId.M4).matrix), expected)
        assert np.array_equal(expected, brute_force_motif_adjacency(S, 4))
        for m in MotifId:
            if m is not MotifId.M4:
                assert motif_adjacency(A, m).matrix.nnz == 0


def test_zeta_is_kept_on_request():
    ma = motif_adjacency(fixture_adjacency(), MotifId.M1, keep_zeta=True)
    assert ma.zeta is not None
    assert motif_adjacency(fixture_adjacency(), MotifId.M1).zeta is None


def test_blend_examples():
    A = fixture_adjacency()
    AM = motif_adjacency(A, MotifId.M7)
    assert np.array_equal(dense(blend(A, AM, 0.0).matrix), dense(A))
    assert np.array_equal(dense(blend(A, AM, 1.0).matrix), dense(AM.matrix))
    theta = blend(A, AM, 0.9)
    # A(v3, v1) = 1 and A^M7(v3, v1) = 2
    assert dense(theta.matrix)[2, 0] == pytest.approx(1.9, abs=1e-15)
    assert theta.motif is MotifId.M7 and theta.tau == 0.9


def test_blend_errors():
    A = fixture_adjacency()
    AM = motif_adjacency(A, MotifId.M7)
    with pytest.raises(DomainError):
        blend(A, AM, 1.5)
    with pytest.raises(DomainError):
        blend(A, AM, -0.1)
    with pytest.raises(ShapeError):
        blend(sp.csr_array((3, 3)), AM, 0.5)


@settings(max_examples=40, deadline=None)
@given(st.integers(3, 9), st.floats(0.1, 0.8), st.floats(0, 1), st.integers(0, 2**31))
def test_blend_is_entrywise_exact(n, density, tau, seed):
    A = sp.csr_array(random_digraph(n, density, np.random.default_rng(seed)))
    AM = motif_adjacency(A, MotifId.M5)
    got = dense(blend(A, AM, tau).matrix)
    assert np.array_equal(got, (1 - tau) * dense(A) + tau * dense(AM.matrix))
