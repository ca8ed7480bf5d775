"""PageRank, personalized PageRank matrices and the propagation operator."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .exceptions import ConvergenceError, DomainError, ShapeError, SolverError
from .graph import canonical, normalize_sym
from .motifs import BlendedAdjacency

# above this size the operator is built as a thresholded sparse matrix
DENSE_LIMIT = 4096
SPARSIFY_THRESHOLD = 1e-4


@dataclass(frozen=True)
class PageRankState:
    psi: np.ndarray
    damping: float
    iterations: int
    residual: float


@dataclass(frozen=True)
class PprMatrix:
    """``alpha * (I - (1 - alpha) T)^-1`` for a fixed transition operator ``T``.

    ``matrix`` is dense unless the matrix was built in sparse (thresholded)
    mode, in which case ``threshold`` records the cut-off that was applied.
    """

    alpha: float
    matrix: object
    source: str = "edge"
    solver: str = "direct"
    terms: Optional[int] = None
    residual: float = 0.0
    threshold: Optional[float] = None

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.matrix)


@dataclass(frozen=True)
class PropagationOperator:
    """Entrywise ``beta`` power of a PPR matrix, ready to multiply node signals."""

    base: PprMatrix = field(repr=False)
    beta: float
    materialized: object = field(repr=False)

    @property
    def shape(self):
        return self.materialized.shape

    @property
    def n(self) -> int:
        return self.materialized.shape[0]

    def __matmul__(self, H):
        return propagate(self, H)


def _check_alpha(alpha):
    alpha = float(alpha)
    if not 0.0 < alpha <= 1.0:
        raise DomainError(f"alpha must lie in (0, 1], got {alpha}")
    return alpha


def pagerank(P, d=0.85, tol=1e-10, max_iter=1000) -> PageRankState:
    """Power iteration ``psi <- d P^T psi + (1 - d)/n``, started from uniform."""
    P = sp.csr_array(P, dtype=float)
    if P.shape[0] != P.shape[1]:
        raise ShapeError(f"P must be square, got {P.shape}")
    if not 0.0 < d <= 1.0:
        raise DomainError(f"damping must lie in (0, 1], got {d}")
    if tol <= 0:
        raise DomainError("tol must be positive")
    n = P.shape[0]
    PT = canonical(P.T)
    psi = np.full(n, 1.0 / n)
    residual = np.inf
    for t in range(1, max_iter + 1):
        nxt = d * (PT @ psi) + (1.0 - d) / n
        residual = float(np.abs(nxt - psi).sum())
        psi = nxt
        if residual < tol:
            return PageRankState(psi, d, t, residual)
    raise ConvergenceError(f"PageRank did not converge in {max_iter} iterations", residual)


def _clean_negatives(M, scale):
    # round-off in the solve can leave entries like -1e-17 where the exact
    # value is a nonnegative sum of products
    floor = -1e-10 * max(scale, 1.0)
    if M.size and M.min() < floor:
        raise SolverError(
            f"PPR solve produced entry {M.min():.3e}; (1 - alpha) T likely has spectral radius >= 1"
        )
    np.maximum(M, 0.0, out=M)
    return M


def _symmetric_inverse(system):
    # Cholesky inverse of a symmetric positive definite matrix, mirrored from
    # the upper triangle so the result is exactly symmetric
    c, _ = scipy.linalg.cho_factor(system, lower=False, check_finite=True)
    inv, info = scipy.linalg.lapack.dpotri(c, lower=0)
    if info != 0:
        raise np.linalg.LinAlgError(f"potri failed with info={info}")
    upper = np.triu(inv)
    return upper + np.triu(upper, 1).T


def ppr_matrix_direct(T, alpha, source="edge") -> PprMatrix:
    """Dense ``alpha (I - (1 - alpha) T)^-1`` by one factorization.

    Symmetric ``T`` makes the system positive definite, which is inverted
    through its Cholesky factor; otherwise LU is used.
    """
    alpha = _check_alpha(alpha)
    T = sp.csr_array(T, dtype=float)
    if T.shape[0] != T.shape[1]:
        raise ShapeError(f"T must be square, got {T.shape}")
    n = T.shape[0]
    if alpha == 1.0:
        return PprMatrix(alpha, np.eye(n), source, "direct")
    system = np.eye(n) - (1.0 - alpha) * T.toarray()
    M = None
    try:
        with np.errstate(all="raise"):
            if (T != T.T).nnz == 0:
                try:
                    M = alpha * _symmetric_inverse(system)
                except np.linalg.LinAlgError:
                    M = None  # not positive definite; LU below reports the problem
            if M is None:
                lu = scipy.linalg.lu_factor(system, check_finite=True)
                M = np.ascontiguousarray(scipy.linalg.lu_solve(lu, alpha * np.eye(n)))
    except (np.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
        raise SolverError(f"direct PPR solve failed: {exc}") from exc
    if not np.all(np.isfinite(M)):
        raise SolverError("direct PPR solve produced non-finite entries")
    return PprMatrix(alpha, _clean_negatives(M, np.abs(M).max()), source, "direct")


def ppr_matrix_neumann(T, alpha, K=1000, tol=1e-6, source="edge") -> PprMatrix:
    """Truncated series ``sum_k alpha (1 - alpha)^k T^k`` for ``k = 0..K``.

    Summation stops early once a term's max-norm drops below ``tol``;
    ``residual`` is the max-norm of the last term added.
    """
    alpha = _check_alpha(alpha)
    T = sp.csr_array(T, dtype=float)
    n = T.shape[0]
    term = alpha * np.eye(n)
    total = term.copy()
    residual = float(alpha)
    k = 0
    while k < K and residual >= tol and alpha < 1.0:
        k += 1
        term = (1.0 - alpha) * (T @ term)
        total += term
        residual = float(np.abs(term).max())
    return PprMatrix(alpha, total, source, "neumann", terms=k, residual=residual)


def ppr_matrix_sparse(T, alpha, K=1000, tol=1e-6, threshold=SPARSIFY_THRESHOLD,
                      block=256, source="edge") -> PprMatrix:
    """Neumann series computed block of columns at a time, keeping entries >= ``threshold``.

    Memory stays proportional to the retained entries, which makes graphs
    beyond :data:`DENSE_LIMIT` nodes tractable.
    """
    alpha = _check_alpha(alpha)
    T = sp.csr_array(T, dtype=float)
    n = T.shape[0]
    pieces = []
    worst = 0.0
    max_terms = 0
    for start in range(0, n, block):
        cols = np.arange(start, min(start + block, n))
        term = np.zeros((n, len(cols)))
        term[cols, np.arange(len(cols))] = alpha
        total = term.copy()
        residual = float(alpha)
        k = 0
        while k < K and residual >= tol and alpha < 1.0:
            k += 1
            term = (1.0 - alpha) * (T @ term)
            total += term
            residual = float(np.abs(term).max())
        worst = max(worst, residual)
        max_terms = max(max_terms, k)
        total[total < threshold] = 0.0
        chunk = sp.csc_array(total)
        pieces.append(chunk)
    M = canonical(sp.hstack(pieces, format="csr"))
    return PprMatrix(alpha, M, source, "neumann", terms=max_terms, residual=worst,
                     threshold=threshold)


def mppr_matrix(theta, alpha, solver="direct", K=1000, tol=1e-6,
                threshold=SPARSIFY_THRESHOLD) -> PprMatrix:
    """PPR matrix of the symmetrically normalized (self-looped) blended adjacency.

    ``solver`` is ``"direct"``, ``"neumann"`` or ``"sparse"``; ``"auto"``
    picks direct up to :data:`DENSE_LIMIT` nodes and sparse beyond.
    """
    W = theta.matrix if isinstance(theta, BlendedAdjacency) else theta
    tau = theta.tau if isinstance(theta, BlendedAdjacency) else 0.0
    source = "motif" if tau > 0 else "edge"
    T = normalize_sym(W)
    if solver == "auto":
        solver = "direct" if T.shape[0] <= DENSE_LIMIT else "sparse"
    if solver == "direct":
        return ppr_matrix_direct(T, alpha, source=source)
    if solver == "neumann":
        return ppr_matrix_neumann(T, alpha, K=K, tol=tol, source=source)
    if solver == "sparse":
        return ppr_matrix_sparse(T, alpha, K=K, tol=tol, threshold=threshold, source=source)
    raise DomainError(f"unknown solver {solver!r}")


def apply_beta(pi: PprMatrix, beta: float) -> PropagationOperator:
    """Raise every entry of ``pi`` to the power ``beta``; zeros stay zero."""
    beta = float(beta)
    if not 0.0 < beta <= 1.0:
        raise DomainError(f"beta must lie in (0, 1], got {beta}")
    M = pi.matrix
    if sp.issparse(M):
        M = canonical(M)
        if M.nnz and M.data.min() < 0:
            raise DomainError("PPR matrix has negative entries")
        out = M.copy()
        if beta != 1.0:
            out.data = np.power(out.data, beta)
    else:
        M = np.asarray(M)
        if M.size and M.min() < 0:
            raise DomainError("PPR matrix has negative entries")
        out = M.copy() if beta == 1.0 else np.power(M, beta)
    return PropagationOperator(pi, beta, out)


def propagate(op, H):
    """``Z = op @ H`` for a propagation operator (or any square matrix)."""
    M = op.materialized if isinstance(op, PropagationOperator) else op
    H = np.asarray(H)
    if H.ndim == 1:
        H = H.reshape(-1, 1)
    if M.shape[1] != H.shape[0]:
        raise ShapeError(f"operator is {M.shape}, signal has {H.shape[0]} rows")
    Z = M @ H
    return np.asarray(Z)


def identity_operator(n: int) -> PropagationOperator:
    """The operator obtained at ``alpha = 1``; propagation becomes a no-op."""
    base = PprMatrix(1.0, np.eye(n), "edge", "direct")
    return PropagationOperator(base, 1.0, base.matrix)
