"""Two-layer MLP feature transformer with hand-written gradients.

The network computes ``H = Dropout(ReLU(X W0)) W1`` and the prediction is
``Z = Pi H`` for a fixed propagation matrix ``Pi``.  Gradients are pulled
back through ``Pi`` (as ``Pi^T dZ``) and then through the MLP.
"""
from __future__ import annotations

import json
import struct
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .exceptions import GraphFormatError, ShapeError
from .ppr import PropagationOperator

PROB_FLOOR = 1e-15

# number of probabilities clamped to PROB_FLOOR by nll_loss
clamp_events = 0


@dataclass
class MlpModel:
    W0: np.ndarray
    W1: np.ndarray
    dropout: float = 0.5
    l2: float = 0.005
    input_dropout: float = 0.0

    @property
    def hidden(self) -> int:
        return self.W0.shape[1]

    @property
    def n_in(self) -> int:
        return self.W0.shape[0]

    @property
    def n_out(self) -> int:
        return self.W1.shape[1]

    def copy(self) -> "MlpModel":
        return replace(self, W0=self.W0.copy(), W1=self.W1.copy())


def glorot(rng, n_in, n_out, dtype=np.float64):
    limit = np.sqrt(6.0 / (n_in + n_out))
    return rng.uniform(-limit, limit, size=(n_in, n_out)).astype(dtype)


def init_mlp(n_in, hidden, n_out, rng, dropout=0.5, l2=0.005, input_dropout=0.0,
             dtype=np.float64) -> MlpModel:
    """Glorot-uniform initialization from a seeded generator."""
    if not 0.0 <= dropout < 1.0 or not 0.0 <= input_dropout < 1.0:
        raise ValueError("dropout rates must lie in [0, 1)")
    W0 = glorot(rng, n_in, hidden, dtype)
    W1 = glorot(rng, hidden, n_out, dtype)
    return MlpModel(W0, W1, dropout, l2, input_dropout)


@dataclass
class ForwardTrace:
    X: object = field(repr=False)
    input_mask: Optional[np.ndarray] = field(default=None, repr=False)
    pre_activation: Optional[np.ndarray] = field(default=None, repr=False)
    hidden_mask: Optional[np.ndarray] = field(default=None, repr=False)
    hidden: Optional[np.ndarray] = field(default=None, repr=False)
    H: Optional[np.ndarray] = field(default=None, repr=False)
    operator: object = field(default=None, repr=False)
    operator_mask: object = field(default=None, repr=False)
    operator_symmetric: bool = False
    Z: Optional[np.ndarray] = field(default=None, repr=False)

    def masks(self) -> dict:
        return {"input": self.input_mask, "hidden": self.hidden_mask,
                "operator": self.operator_mask}


def _dropout_mask(rng, shape, rate, dtype):
    keep = rng.random(shape, dtype=np.float32 if dtype == np.float32 else np.float64) >= rate
    return keep.astype(dtype) * dtype(1.0 / (1.0 - rate))


def _matmul(X, W):
    out = X @ W
    return np.asarray(out)


def mlp_forward(model: MlpModel, X, mode="eval", rng=None, masks=None) -> ForwardTrace:
    """Run the MLP; ``mode="train"`` draws inverted-dropout masks from ``rng``.

    ``masks`` replays masks from an earlier trace instead of drawing new ones.
    ``X`` may be dense or a scipy sparse matrix.
    """
    if X.shape[1] != model.n_in:
        raise ShapeError(f"X has {X.shape[1]} columns, model expects {model.n_in}")
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    dtype = model.W0.dtype.type
    masks = masks or {}
    train = mode == "train"
    input_mask = None
    Xin = X
    if train and model.input_dropout > 0:
        input_mask = masks.get("input")
        if input_mask is None:
            input_mask = _dropout_mask(rng, X.shape, model.input_dropout, dtype)
        Xin = X.multiply(input_mask).tocsr() if sp.issparse(X) else X * input_mask
    S = _matmul(Xin, model.W0)
    R = np.maximum(S, 0)
    hidden_mask = None
    if train and model.dropout > 0:
        hidden_mask = masks.get("hidden")
        if hidden_mask is None:
            hidden_mask = _dropout_mask(rng, R.shape, model.dropout, dtype)
        R = R * hidden_mask
    H = R @ model.W1
    return ForwardTrace(X=Xin, input_mask=input_mask, pre_activation=S,
                        hidden_mask=hidden_mask, hidden=R, H=H)


def _operator_matrix(op):
    if op is None:
        return None
    return op.materialized if isinstance(op, PropagationOperator) else op


def drop_operator(M, rate, rng, mask=None):
    """Bernoulli dropout on the stored entries of ``M`` with inverted scaling."""
    if sp.issparse(M):
        M = sp.csr_array(M)
        if mask is None:
            mask = _dropout_mask(rng, M.data.shape, rate, M.dtype.type)
        out = M.copy()
        out.data = out.data * mask
        return out, mask
    if mask is None:
        mask = _dropout_mask(rng, M.shape, rate, M.dtype.type)
    return M * mask, mask


def forward(model: MlpModel, X, op=None, mode="eval", rng=None, operator_dropout=0.0,
            masks=None, rows=None, symmetric=False) -> ForwardTrace:
    """MLP followed by propagation ``Z = op @ H`` (``Z = H`` when ``op`` is None).

    With ``rows`` only those rows of ``Z`` are computed (``Z = op[rows] @ H``);
    :func:`backward` then expects ``dZ`` for those rows only.  ``symmetric``
    promises ``op == op.T`` so the backward pass can skip the transpose.
    """
    trace = mlp_forward(model, X, mode, rng, masks)
    M = _operator_matrix(op)
    if M is None:
        if rows is not None:
            raise ValueError("rows needs an operator")
        trace.Z = trace.H
        return trace
    if M.shape[1] != trace.H.shape[0]:
        raise ShapeError(f"operator is {M.shape}, H has {trace.H.shape[0]} rows")
    if rows is not None:
        M = M[np.asarray(rows)]
    op_mask = None
    if mode == "train" and operator_dropout > 0:
        M, op_mask = drop_operator(M, operator_dropout, rng, (masks or {}).get("operator"))
    trace.operator = M
    trace.operator_mask = op_mask
    trace.operator_symmetric = symmetric and rows is None and op_mask is None
    trace.Z = np.asarray(M @ trace.H)
    return trace


def softmax_rows(Z):
    Z = np.asarray(Z)
    shifted = Z - Z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def log_softmax_rows(Z):
    Z = np.asarray(Z)
    shifted = Z - Z.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def nll_loss(P, labels, mask) -> float:
    """``-sum log P[v, y_v]`` over the selected nodes.

    ``mask`` is a boolean mask or an index array.  Probabilities below
    1e-15 are clamped and counted in :data:`clamp_events`.
    """
    global clamp_events
    idx = np.flatnonzero(mask) if np.asarray(mask).dtype == bool else np.asarray(mask)
    p = np.asarray(P)[idx, np.asarray(labels)[idx]]
    low = p < PROB_FLOOR
    if np.any(low):
        clamp_events += int(low.sum())
        warnings.warn(f"{int(low.sum())} true-label probabilities clamped to {PROB_FLOOR}")
        p = np.maximum(p, PROB_FLOOR)
    return float(-np.log(p).sum())


def bce_loss(logits, labels) -> float:
    """Binary cross-entropy ``-sum y log s(x) + (1 - y) log(1 - s(x))`` from logits.

    Uses ``max(x, 0) - x y + log1p(exp(-|x|))`` which never overflows.
    """
    x = np.asarray(logits, dtype=float)
    y = np.asarray(labels, dtype=float)
    return float(np.sum(np.maximum(x, 0) - x * y + np.log1p(np.exp(-np.abs(x)))))


def sigmoid(x):
    x = np.asarray(x)
    out = np.empty_like(x, dtype=np.result_type(x, np.float32))
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def node_loss_grad(Z, labels, idx, reduction="sum"):
    """Cross-entropy over nodes ``idx`` and its gradient with respect to ``Z``."""
    idx = np.asarray(idx)
    logp = log_softmax_rows(Z[idx])
    y = np.asarray(labels)[idx]
    scale = 1.0 / len(idx) if reduction == "mean" else 1.0
    loss = -logp[np.arange(len(idx)), y].sum() * scale
    dZ = np.zeros_like(Z)
    g = np.exp(logp)
    g[np.arange(len(idx)), y] -= 1.0
    dZ[idx] = g * scale
    return float(loss), dZ


def edge_loss_grad(Z, pairs, targets, reduction="sum"):
    """Dot-product decoder BCE over ``pairs`` and its gradient with respect to ``Z``."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    u, v = pairs[:, 0], pairs[:, 1]
    s = np.einsum("ij,ij->i", Z[u], Z[v])
    t = np.asarray(targets, dtype=float)
    scale = 1.0 / len(pairs) if reduction == "mean" else 1.0
    loss = bce_loss(s, t) * scale
    g = ((sigmoid(s) - t) * scale).astype(Z.dtype)
    # dZ[u] += g z_v and dZ[v] += g z_u, i.e. dZ = G Z with G[u, v] = G[v, u] = g
    n = Z.shape[0]
    G = sp.csr_array((np.r_[g, g], (np.r_[u, v], np.r_[v, u])), shape=(n, n))
    dZ = np.asarray(G @ Z, dtype=Z.dtype)
    return float(loss), dZ


@dataclass
class GradientSet:
    dW0: np.ndarray
    dW1: np.ndarray
    loss: float


def l2_penalty(model: MlpModel) -> float:
    return 0.5 * model.l2 * float(np.sum(model.W0.astype(float) ** 2))


def backward(trace: ForwardTrace, model: MlpModel, dZ, loss=0.0) -> GradientSet:
    """Gradients of ``loss + l2/2 ||W0||^2`` given the upstream ``dZ``.

    ``dZ`` is pulled back through the (possibly dropped-out) operator stored
    in the trace, then through ``W1``, the dropout mask, the ReLU and ``W0``.
    """
    dZ = np.asarray(dZ)
    if trace.Z is not None and dZ.shape != trace.Z.shape:
        raise ShapeError(f"dZ has shape {dZ.shape}, trace output has {trace.Z.shape}")
    if trace.operator is not None:
        adjoint = trace.operator if trace.operator_symmetric else trace.operator.T
        dH = np.asarray(adjoint @ dZ)
    else:
        dH = dZ
    dW1 = trace.hidden.T @ dH
    dR = dH @ model.W1.T
    if trace.hidden_mask is not None:
        dR = dR * trace.hidden_mask
    dR = dR * (trace.pre_activation > 0)
    dW0 = np.asarray(trace.X.T @ dR) + model.l2 * model.W0
    return GradientSet(dW0, dW1, float(loss) + l2_penalty(model))


@dataclass
class AdamState:
    m0: np.ndarray
    v0: np.ndarray
    m1: np.ndarray
    v1: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, model: MlpModel) -> "AdamState":
        z = np.zeros_like
        return cls(z(model.W0), z(model.W0), z(model.W1), z(model.W1))


def adam_step(model: MlpModel, grads: GradientSet, state: AdamState, lr: float):
    """One Adam update; returns the new model and advances ``state`` in place."""
    if grads.dW0.shape != model.W0.shape or grads.dW1.shape != model.W1.shape:
        raise ShapeError("gradient shapes do not match the model")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    new = []
    for W, g, m, v in ((model.W0, grads.dW0, state.m0, state.v0),
                       (model.W1, grads.dW1, state.m1, state.v1)):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        step = lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        new.append((W - step).astype(W.dtype, copy=False))
    return replace(model, W0=new[0], W1=new[1]), state


_MAGIC = b"MPPRCKPT"
_VERSION = 1
_HEAD = struct.Struct("<8sIIIIqdddI")


def save_checkpoint(path, model: MlpModel, state: Optional[AdamState] = None,
                    hyperparameters: Optional[dict] = None) -> Path:
    """Write weights (and optimizer moments) to ``path`` plus a ``.json`` sidecar.

    Layout: magic, version, shapes, Adam step count, dropout rates, L2 weight,
    state flag, then row-major little-endian float64 arrays W0, W1 and, when
    present, the Adam moments m0, v0, m1, v1.
    """
    path = Path(path)
    f, h = model.W0.shape
    c = model.W1.shape[1]
    with open(path, "wb") as fh:
        fh.write(_HEAD.pack(_MAGIC, _VERSION, f, h, c, state.t if state else 0,
                            model.dropout, model.l2, model.input_dropout, 1 if state else 0))
        arrays = [model.W0, model.W1]
        if state is not None:
            arrays += [state.m0, state.v0, state.m1, state.v1]
        for a in arrays:
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())
    sidecar = path.with_suffix(path.suffix + ".json")
    meta = {"format_version": _VERSION, "shapes": {"W0": [f, h], "W1": [h, c]},
            "dtype": str(model.W0.dtype), "hyperparameters": hyperparameters or {}}
    sidecar.write_text(json.dumps(meta, indent=2, sort_keys=True), encoding="utf-8")
    return sidecar


def load_checkpoint(path):
    """Inverse of :func:`save_checkpoint`; returns ``(model, state, hyperparameters)``."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEAD.size or raw[:8] != _MAGIC:
        raise GraphFormatError("not a checkpoint file (bad magic)", path)
    magic, version, f, h, c, t, dropout, l2, in_drop, has_state = _HEAD.unpack_from(raw)
    if version != _VERSION:
        raise GraphFormatError(f"unsupported checkpoint version {version}", path)
    offset = _HEAD.size
    shapes = [(f, h), (h, c)]
    if has_state:
        shapes += [(f, h), (f, h), (h, c), (h, c)]
    if len(raw) != offset + 8 * sum(a * b for a, b in shapes):
        raise GraphFormatError("checkpoint has trailing or missing bytes", path)
    arrays = []
    for shape in shapes:
        count = shape[0] * shape[1]
        a = np.frombuffer(raw, dtype="<f8", count=count, offset=offset).reshape(shape)
        arrays.append(a.astype(np.float64))
        offset += 8 * count
    hyper = {}
    sidecar = path.with_suffix(path.suffix + ".json")
    if sidecar.exists():
        hyper = json.loads(sidecar.read_text(encoding="utf-8")).get("hyperparameters", {})
    dtype = np.dtype(hyper.get("dtype", "float64")) if isinstance(hyper, dict) else np.float64
    model = MlpModel(arrays[0].astype(dtype), arrays[1].astype(dtype), dropout, l2, in_drop)
    state = None
    if has_state:
        state = AdamState(*arrays[2:], t=t)
    return model, state, hyper
