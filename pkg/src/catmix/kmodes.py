"""k-modes clustering with simple-matching dissimilarity, used to initialise fits."""

import numpy as np

from .errors import ConfigError


def _padded_index(categories):
    """(P, Lmax) map from (variable, level) to one-hot column; -1 marks padding."""
    lmax = int(categories.max())
    offsets = np.concatenate(([0], np.cumsum(categories)[:-1]))
    idx = offsets[:, None] + np.arange(lmax)[None, :]
    return np.where(np.arange(lmax)[None, :] < categories[:, None], idx, -1)


def _modes_from_counts(counts, pad):
    """Column-wise modal level for each cluster (lowest level wins ties)."""
    padded = np.where(pad[None] >= 0, counts[:, np.maximum(pad, 0)], -1.0)
    return padded.argmax(axis=-1)


def _encode_modes(modes, offsets, total):
    k = modes.shape[0]
    enc = np.zeros((k, total))
    enc[np.arange(k)[:, None], modes + offsets[None, :]] = 1.0
    return enc


def hamming_to_modes(onehot, modes, offsets, n_vars):
    total = onehot.shape[1]
    return n_vars - onehot @ _encode_modes(modes, offsets, total).T


def kmodes(data, k, seed, n_init=5, max_iter=100):
    """Run k-modes ``n_init`` times and keep the lowest-cost solution.

    Returns ``(labels, modes, cost)``. Initial modes are ``k`` distinct rows
    drawn at random; a cluster that empties is reseeded with the point
    farthest from its current mode.
    """
    n, p = data.n_obs, data.n_vars
    if not 1 <= k <= n:
        raise ConfigError(f"k-modes needs 1 <= k <= N, got k={k}, N={n}")
    rng = np.random.default_rng(seed)
    X = data.values
    onehot = data.one_hot()
    offsets = data.offsets
    pad = _padded_index(data.categories)
    rows = np.arange(n)

    best = None
    for _ in range(n_init):
        modes = X[rng.choice(n, size=k, replace=False)].copy()
        labels = None
        for _ in range(max_iter):
            dist = hamming_to_modes(onehot, modes, offsets, p)
            new = dist.argmin(axis=1)
            own = dist[rows, new]
            counts = np.bincount(new, minlength=k)
            for e in np.flatnonzero(counts == 0):
                far = int(own.argmax())
                if own[far] <= 0:
                    break
                counts[new[far]] -= 1
                new[far] = e
                own[far] = 0.0
                modes[e] = X[far]
            if labels is not None and np.array_equal(new, labels):
                break
            labels = new
            member = np.zeros((k, n))
            member[labels, rows] = 1.0
            occupied = member.sum(axis=1) > 0
            fresh = _modes_from_counts(member @ onehot, pad)
            modes[occupied] = fresh[occupied]
        cost = float(hamming_to_modes(onehot, modes, offsets, p)[rows, labels].sum())
        if best is None or cost < best[2]:
            best = (labels.copy(), modes.copy(), cost)
    return best


def init_kmodes(data, k, seed) -> np.ndarray:
    """Initial hard labels for a fit: best of 5 k-modes restarts."""
    return kmodes(data, k, seed)[0]
