"""Rank statistics: midranks, ROC-AUC, and a one-sided Wilcoxon
signed-rank test.  Pure numpy + stdlib implementations so results are
easy to cross-check against direct pair counting and enumeration.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import MethodError

EXACT_WILCOXON_MAX_N = 12


def midrank(x) -> np.ndarray:
    """Ranks 1..n with tied values sharing their average rank."""
    x = np.asarray(x, dtype=float)
    n = x.size
    order = np.argsort(x, kind="stable")
    ranks = np.empty(n)
    sx = x[order]
    i = 0
    while i < n:
        j = i
        while j < n and sx[j] == sx[i]:
            j += 1
        ranks[order[i:j]] = 0.5 * (i + j - 1) + 1.0
        i = j
    return ranks


def roc_auc(scores, flags) -> float:
    """Area under the ROC curve of ``scores`` against boolean ``flags``.

    Computed from midranks (ties count one half), which equals the
    fraction of (anomalous, normal) pairs ranked concordantly.
    """
    scores = np.asarray(scores, dtype=float)
    flags = np.asarray(flags, dtype=bool)
    if scores.shape != flags.shape or scores.ndim != 1:
        raise ValueError("scores and flags must be equal-length vectors")
    n_pos = int(np.sum(flags))
    n_neg = int(flags.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise MethodError("ROC-AUC needs both flagged and unflagged graphs")
    ranks = midrank(scores)
    r_pos = float(np.sum(ranks[flags]))
    return (r_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def _normal_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def wilcoxon_one_sided(x, y):
    """Wilcoxon signed-rank test of paired samples, alternative: y > x.

    Returns ``(w_plus, p_value)`` where ``w_plus`` is the positive-rank
    sum of the differences ``y - x``.  Zero differences are discarded;
    if all differences are zero the p-value is 1.  The null distribution
    is enumerated exactly for up to 12 nonzero differences, otherwise a
    normal approximation with tie and continuity corrections is used.
    Requires at least 5 pairs.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("paired samples must be equal-length vectors")
    if x.size < 5:
        raise MethodError(f"need at least 5 pairs, got {x.size}")
    d = y - x
    d = d[d != 0.0]
    n = d.size
    if n == 0:
        return 0.0, 1.0
    ranks = midrank(np.abs(d))
    w_plus = float(np.sum(ranks[d > 0.0]))

    if n <= EXACT_WILCOXON_MAX_N:
        # Exact null: every sign assignment over the observed ranks.
        total = 0
        hits = 0
        for mask in range(1 << n):
            s = 0.0
            for k in range(n):
                if mask >> k & 1:
                    s += ranks[k]
            total += 1
            if s >= w_plus - 1e-12:
                hits += 1
        return w_plus, hits / total

    mean = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0
    _, counts = np.unique(np.abs(d), return_counts=True)
    var -= float(np.sum(counts ** 3 - counts)) / 48.0
    if var <= 0:
        return w_plus, 1.0
    z = (w_plus - mean - 0.5) / math.sqrt(var)
    return w_plus, _normal_sf(z)
