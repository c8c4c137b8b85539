"""Agglomerative clustering by Lance-Williams updates on a dense distance matrix.

Ties between equal distances go to the lexicographically smallest pair of
cluster slots, a merged cluster keeps the smaller slot, and so the merge
sequence is fully deterministic.
"""

import numpy as np

from .errors import InputError

METHODS = ("complete", "average")


def linkage(dist, method="complete"):
    """Merge sequence for ``dist`` as an (N-1, 3) array of ``(slot_i, slot_j, height)``, slot_i < slot_j.

    A row-minimum cache over the upper triangle keeps the cost near O(N^2)
    for the reducible linkages supported here.
    """
    if method not in METHODS:
        raise InputError(f"unknown linkage {method!r}")
    d = np.array(dist, dtype=np.float64, copy=True)
    n = d.shape[0]
    if d.shape != (n, n):
        raise InputError("distance matrix must be square")
    merges = np.zeros((max(n - 1, 0), 3))
    if n < 2:
        return merges
    # only d[i, j] with i < j (both active) is meaningful; everything else is inf
    d = np.triu(d, 1) + np.tril(np.full((n, n), np.inf))
    active = np.ones(n, dtype=bool)
    size = np.ones(n)

    rowmin = np.full(n, np.inf)
    rowarg = np.full(n, -1)

    def refresh(r):
        row = d[r, r + 1:]
        if row.size == 0:
            rowmin[r], rowarg[r] = np.inf, -1
            return
        j = int(row.argmin())
        rowmin[r], rowarg[r] = row[j], r + 1 + j

    for r in range(n):
        refresh(r)

    for step in range(n - 1):
        i = int(rowmin.argmin())
        j = int(rowarg[i])
        h = rowmin[i]
        merges[step] = (i, j, h)

        # distances from the merged cluster to every other active slot k
        others = np.flatnonzero(active)
        others = others[(others != i) & (others != j)]
        dik = np.where(others < i, d[others, i], d[i, others])
        djk = np.where(others < j, d[others, j], d[j, others])
        if method == "complete":
            new = np.maximum(dik, djk)
        else:
            new = (size[i] * dik + size[j] * djk) / (size[i] + size[j])

        active[j] = False
        size[i] += size[j]
        d[j, :] = np.inf
        d[:, j] = np.inf
        lo = others < i
        d[others[lo], i] = new[lo]
        d[i, others[~lo]] = new[~lo]

        refresh(i)
        rowmin[j], rowarg[j] = np.inf, -1
        below, val = others[lo], new[lo]
        stale = (rowarg[below] == i) | (rowarg[below] == j)
        better = ~stale & ((val < rowmin[below]) | ((val == rowmin[below]) & (i < rowarg[below])))
        rowmin[below[better]] = val[better]
        rowarg[below[better]] = i
        for r in below[stale]:
            refresh(r)
        for r in others[(others > i) & (others < j)]:
            if rowarg[r] == j:
                refresh(r)
    return merges


def linkage_bruteforce(dist, method="complete"):
    """Reference implementation: full rescans, same tie-breaking. O(N^3)."""
    d = np.array(dist, dtype=np.float64, copy=True)
    n = d.shape[0]
    members = {i: [i] for i in range(n)}
    merges = []
    while len(members) > 1:
        keys = sorted(members)
        best = None
        for a_pos, a in enumerate(keys):
            for b in keys[a_pos + 1:]:
                block = d[np.ix_(members[a], members[b])]
                h = block.max() if method == "complete" else block.mean()
                if best is None or h < best[2]:
                    best = (a, b, h)
        a, b, h = best
        members[a] = members[a] + members.pop(b)
        merges.append(best)
    return np.array(merges, dtype=float).reshape(-1, 3)


def cut(merges, n, n_clusters):
    """Labels after applying the first ``n - n_clusters`` merges, canonically numbered."""
    if not 1 <= n_clusters <= n:
        raise InputError(f"n_clusters must lie in 1..{n}")
    parent = np.arange(n)
    for i, j, _ in merges[: n - n_clusters]:
        parent[parent == int(j)] = int(i)
    return canonical_labels(parent)


def cut_height(merges, n, height, atol=1e-12):
    """Labels after applying every merge at or below ``height``."""
    above = np.flatnonzero(merges[:, 2] > height + atol)
    n_merges = int(above[0]) if above.size else len(merges)
    return cut(merges, n, n - n_merges)


def canonical_labels(labels) -> np.ndarray:
    """Relabel so clusters are numbered 0, 1, 2, ... by first occurrence."""
    labels = np.asarray(labels)
    _, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
    rank = np.empty_like(first)
    rank[np.argsort(first, kind="stable")] = np.arange(first.size)
    return rank[inverse].astype(np.int64)
