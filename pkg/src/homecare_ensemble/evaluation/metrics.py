"""Rank-based ROC AUC."""
from __future__ import annotations

import numpy as np


class AUCUndefinedError(ValueError):
    pass


def average_ranks(values) -> np.ndarray:
    """1-based ranks with ties sharing their average rank."""
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(values, kind="mergesort")
    sv = values[order]
    n = len(values)
    boundaries = np.flatnonzero(np.r_[True, sv[1:] != sv[:-1], True])
    first, last = boundaries[:-1], boundaries[1:]
    group_rank = (first + last + 1) / 2.0
    ranks = np.empty(n)
    ranks[order] = np.repeat(group_rank, last - first)
    return ranks


def auc(scores, labels) -> float:
    """Mann-Whitney AUC: P(s+ > s-) + P(s+ == s-)/2.  Labels are -1/+1 (0/1 accepted)."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if len(scores) != len(labels):
        raise ValueError(f"length mismatch: {len(scores)} scores, {len(labels)} labels")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise AUCUndefinedError("AUC undefined: labels contain a single class")
    ranks = average_ranks(scores)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))
