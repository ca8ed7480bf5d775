"""Triangle-motif adjacency matrices and the edge/motif blend.

Each of the seven three-node motifs is computed from the unidirectional part
``U`` and the bidirectional part ``B`` of a binary adjacency matrix, using
products of the form ``(X @ Y) * Z`` that are evaluated only on the nonzero
pattern of the mask ``Z``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .exceptions import DomainError, ShapeError
from .graph import canonical


class MotifId(enum.Enum):
    M1 = 1
    M2 = 2
    M3 = 3
    M4 = 4
    M5 = 5
    M6 = 6
    M7 = 7

    @classmethod
    def parse(cls, value) -> "MotifId":
        """Accept ``MotifId``, ``7``, ``"7"``, ``"m7"`` or ``"M7"``."""
        if isinstance(value, cls):
            return value
        text = str(value).strip().upper().lstrip("M")
        try:
            return cls(int(text))
        except ValueError:
            raise DomainError(f"unknown motif {value!r}; expected m1..m7") from None

    @property
    def pattern(self) -> np.ndarray:
        """3x3 binary edge pattern ``B(M)``; all three nodes are anchors."""
        return _PATTERNS[self].copy()

    def __str__(self):
        return self.name


def _pattern(*edges):
    P = np.zeros((3, 3), dtype=np.int64)
    for u, v in edges:
        P[u, v] = 1
    return P


_PATTERNS = {
    # directed 3-cycle
    MotifId.M1: _pattern((0, 1), (1, 2), (2, 0)),
    # 3-cycle with one reciprocated edge
    MotifId.M2: _pattern((0, 1), (1, 0), (1, 2), (2, 0)),
    # two reciprocated edges and one one-way edge
    MotifId.M3: _pattern((0, 1), (1, 0), (1, 2), (2, 1), (0, 2)),
    # fully reciprocated triangle
    MotifId.M4: _pattern((0, 1), (1, 0), (1, 2), (2, 1), (0, 2), (2, 0)),
    # feed-forward loop
    MotifId.M5: _pattern((0, 1), (1, 2), (0, 2)),
    # one node pointing at both ends of a reciprocated edge
    MotifId.M6: _pattern((0, 1), (0, 2), (1, 2), (2, 1)),
    # both ends of a reciprocated edge pointing at a third node
    MotifId.M7: _pattern((1, 0), (2, 0), (1, 2), (2, 1)),
}


@dataclass(frozen=True)
class MotifAdjacency:
    motif: MotifId
    matrix: sp.csr_array
    zeta: Optional[sp.csr_array] = field(default=None, repr=False)

    @property
    def shape(self):
        return self.matrix.shape


@dataclass(frozen=True)
class BlendedAdjacency:
    tau: float
    matrix: sp.csr_array
    motif: Optional[MotifId] = None


def _require_binary(A) -> sp.csr_array:
    A = canonical(A)
    if A.shape[0] != A.shape[1]:
        raise ShapeError(f"adjacency must be square, got {A.shape}")
    if A.nnz and not np.all(A.data == 1):
        raise DomainError("adjacency must be binary (all stored values equal to 1)")
    if np.any(A.diagonal() != 0):
        raise DomainError("adjacency must have a zero diagonal")
    return A


def split_uni_bi(A):
    """Split ``A`` into one-way links ``U`` and reciprocated links ``B``.

    ``B[i, j] = 1`` iff both ``A[i, j]`` and ``A[j, i]`` are set; ``U = A - B``.
    """
    A = _require_binary(A)
    B = canonical(A.multiply(A.T))
    U = canonical(A - B)
    return U, B


def masked_product(X, Y, mask) -> sp.csr_array:
    """``(X @ Y) * mask`` evaluated only on the stored entries of ``mask``.

    Cost is proportional to the mask's nonzeros times the row/column
    lengths they touch; the full product is never formed.
    """
    mask = canonical(mask)
    n_rows, n_cols = mask.shape
    if mask.nnz == 0:
        return sp.csr_array((n_rows, n_cols), dtype=float)
    coo = mask.tocoo()
    rows, cols = coo.row, coo.col
    Xr = sp.csr_array(X)[rows]
    Yc = sp.csr_array(Y.T)[cols]
    vals = np.asarray(Xr.multiply(Yc).sum(axis=1)).ravel() * coo.data
    out = sp.csr_array((vals, (rows, cols)), shape=(n_rows, n_cols))
    return canonical(out)


def _zeta(m: MotifId, U, B):
    Ut = canonical(U.T)
    mp = masked_product
    if m is MotifId.M1:
        return mp(U, U, Ut)
    if m is MotifId.M2:
        return mp(B, U, Ut) + mp(U, B, Ut) + mp(U, U, B)
    if m is MotifId.M3:
        return mp(B, B, U) + mp(B, U, B) + mp(U, B, B)
    if m is MotifId.M4:
        return mp(B, B, B)
    if m is MotifId.M5:
        return mp(U, U, U) + mp(U, Ut, U) + mp(Ut, U, U)
    if m is MotifId.M6:
        return mp(U, B, U) + mp(B, Ut, Ut) + mp(Ut, U, B)
    return mp(Ut, B, Ut) + mp(B, U, U) + mp(U, Ut, B)


# motifs whose intermediate matrix is already symmetric
_SELF_SYMMETRIC = {MotifId.M4, MotifId.M6, MotifId.M7}


def motif_adjacency(A, motif, keep_zeta=False) -> MotifAdjacency:
    """Count, for every node pair, the instances of ``motif`` containing both nodes."""
    m = MotifId.parse(motif)
    U, B = split_uni_bi(A)
    zeta = canonical(_zeta(m, U, B))
    W = zeta if m in _SELF_SYMMETRIC else canonical(zeta + zeta.T)
    # counts are sums of products of 0/1 values, hence exact in float64
    W.data = np.rint(W.data)
    return MotifAdjacency(m, W, zeta if keep_zeta else None)


def all_motif_adjacencies(A) -> dict:
    return {m: motif_adjacency(A, m) for m in MotifId}


def blend(A, AM, tau: float) -> BlendedAdjacency:
    """Entrywise ``(1 - tau) * A + tau * AM``."""
    tau = float(tau)
    if not 0.0 <= tau <= 1.0:
        raise DomainError(f"tau must lie in [0, 1], got {tau}")
    motif = AM.motif if isinstance(AM, MotifAdjacency) else None
    W = AM.matrix if isinstance(AM, MotifAdjacency) else AM
    A = sp.csr_array(A, dtype=float)
    W = sp.csr_array(W, dtype=float)
    if A.shape != W.shape:
        raise ShapeError(f"shape mismatch: {A.shape} vs {W.shape}")
    out = canonical((1.0 - tau) * A + tau * W)
    return BlendedAdjacency(tau, out, motif)
