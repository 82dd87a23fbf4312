"""Optimal assignment via the Hungarian algorithm (shortest augmenting path).

Used by the adversarial mask-reassignment generator to find the permutation
maximizing a dense score matrix.  O(n^3) with numpy-vectorized inner loops;
fine up to a couple thousand rows.
"""

from __future__ import annotations

import numpy as np

__all__ = ["min_cost_assignment", "max_score_assignment"]


def min_cost_assignment(cost) -> np.ndarray:
    """Return ``perm`` with ``perm[i]`` = column assigned to row i,
    minimizing ``sum(cost[i, perm[i]])`` over permutations.

    ``cost`` must be square and finite.
    """
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise ValueError("cost matrix must be square")
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix must be finite")
    n = cost.shape[0]

    # Dual potentials with a sentinel slot at index 0 (1-based bookkeeping).
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    row_of = np.zeros(n + 1, dtype=int)   # row matched to each column, 0 = free
    way = np.zeros(n + 1, dtype=int)

    for i in range(1, n + 1):
        row_of[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = row_of[j0]
            free = ~used
            free[0] = False
            cols = np.nonzero(free)[0]
            cur = cost[i0 - 1, cols - 1] - u[i0] - v[cols]
            better = cur < minv[cols]
            upd = cols[better]
            minv[upd] = cur[better]
            way[upd] = j0
            k = np.argmin(minv[cols])
            j1 = cols[k]
            delta = minv[j1]
            u[row_of[used]] += delta
            v[used] -= delta
            minv[free] -= delta
            j0 = j1
            if row_of[j0] == 0:
                break
        while j0 != 0:
            j1 = way[j0]
            row_of[j0] = row_of[j1]
            j0 = j1

    perm = np.empty(n, dtype=int)
    perm[row_of[1:] - 1] = np.arange(n)
    return perm


def max_score_assignment(score) -> np.ndarray:
    """Permutation maximizing ``sum(score[i, perm[i]])``."""
    return min_cost_assignment(-np.asarray(score, dtype=float))
