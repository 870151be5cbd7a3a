"""Ranking metrics: pairwise-exact AUC (rank-sum form) and Kendall tau-b."""

from __future__ import annotations

import numpy as np


def compute_auc(scores, labels) -> float:
    """Probability a random positive outscores a random negative; ties 0.5.

    Rank-sum implementation with averaged tied ranks, which is exactly the
    pairwise definition.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError(f"scores/labels shape mismatch: {scores.shape} vs {labels.shape}")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = scores.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs at least one positive and one negative")
    _, inverse, counts = np.unique(scores, return_inverse=True, return_counts=True)
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    avg_rank = starts + (counts + 1) / 2.0  # 1-based rank averaged over ties
    rank_sum = avg_rank[inverse][pos].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def kendall_tau(x, y) -> float | None:
    """Kendall tau-b between two score vectors; None when degenerate
    (all ties on either side)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise ValueError("kendall_tau expects two equal-length vectors, n >= 2")
    sx = np.sign(x[:, None] - x[None, :])
    sy = np.sign(y[:, None] - y[None, :])
    iu = np.triu_indices(x.size, k=1)
    sx = sx[iu]
    sy = sy[iu]
    concordant_minus_discordant = float((sx * sy).sum())
    n_x = float((sx != 0).sum())
    n_y = float((sy != 0).sum())
    if n_x == 0 or n_y == 0:
        return None
    return concordant_minus_discordant / np.sqrt(n_x * n_y)
