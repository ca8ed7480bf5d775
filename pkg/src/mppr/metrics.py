"""Evaluation metrics: accuracy, ROC AUC and average precision."""
import numpy as np
from scipy.stats import rankdata

from .exceptions import UndefinedMetricError


def accuracy(pred, labels, mask=None) -> float:
    pred = np.asarray(pred)
    labels = np.asarray(labels)
    if pred.ndim == 2:
        pred = pred.argmax(axis=1)
    if mask is not None:
        mask = np.asarray(mask)
        idx = np.flatnonzero(mask) if mask.dtype == bool else mask
        pred, labels = pred[idx], labels[idx]
    if len(labels) == 0:
        raise UndefinedMetricError("accuracy of an empty evaluation set")
    return float(np.mean(pred == labels))


def _binary(scores, labels):
    s = np.asarray(scores, dtype=float).ravel()
    y = np.asarray(labels).ravel().astype(int)
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == len(y):
        raise UndefinedMetricError("AUC/AP need both positive and negative labels")
    return s, y, n_pos


def roc_auc(scores, labels) -> float:
    """Mann-Whitney statistic; tied scores count one half."""
    s, y, n_pos = _binary(scores, labels)
    n_neg = len(y) - n_pos
    ranks = rankdata(s)  # average ranks resolve ties as 1/2
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def average_precision(scores, labels) -> float:
    """Area under the precision-recall step function.

    Thresholds are the distinct score values; tied scores enter together.
    """
    s, y, n_pos = _binary(scores, labels)
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    last_of_group = np.r_[np.flatnonzero(np.diff(s)), len(s) - 1]
    tp = np.cumsum(y)[last_of_group]
    seen = last_of_group + 1
    precision = tp / seen
    recall = tp / n_pos
    gain = np.diff(np.r_[0.0, recall])
    return float(np.sum(gain * precision))
