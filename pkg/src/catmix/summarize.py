"""Model averaging over several fits: co-clustering matrix and summary partitions."""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import hclust
from .errors import InputError, NumericalError

SUMMARY_METHODS = ("medvedovic", "voi_average", "voi_complete")


@dataclass(frozen=True, eq=False)
class CoClusteringMatrix:
    """Fraction of runs in which each pair of observations shares a cluster."""

    p: np.ndarray
    n_runs: int

    @property
    def n_obs(self) -> int:
        return self.p.shape[0]


@dataclass(frozen=True)
class SummaryConfig:
    method: str = "voi_complete"
    medvedovic_cut: float = 0.01
    tau: float = 0.95
    c_cut: float = 0.5

    def __post_init__(self):
        if self.method not in SUMMARY_METHODS:
            raise InputError(f"unknown summary method {self.method!r}; expected one of {SUMMARY_METHODS}")
        if not 0 < self.medvedovic_cut < 1:
            raise InputError("medvedovic_cut must lie in (0, 1)")
        if not 0 < self.tau < 1:
            raise InputError("tau must lie in (0, 1)")


@dataclass(eq=False)
class SummaryClustering:
    labels: np.ndarray
    method: str
    n_clusters: int
    voi_bound: Optional[float] = None
    selected_vars: Optional[np.ndarray] = None

    def to_dict(self, var_names=None):
        out = {
            "labels": self.labels.tolist(),
            "method": self.method,
            "n_clusters": self.n_clusters,
            "voi_bound": self.voi_bound,
            "selected_vars": None if self.selected_vars is None else self.selected_vars.tolist(),
        }
        if var_names is not None and self.selected_vars is not None:
            out["selected_names"] = [v for v, s in zip(var_names, self.selected_vars) if s]
        return out


def _summary(labels, method, bound=None):
    labels = hclust.canonical_labels(labels)
    return SummaryClustering(labels, method, int(labels.max()) + 1, bound)


def build_coclustering(runs) -> CoClusteringMatrix:
    """``P[i, j] = (1/M) * #{m : z_i^(m) == z_j^(m)}`` over the M label vectors in ``runs``."""
    runs = [np.asarray(r) for r in runs]
    if not runs:
        raise InputError("no clusterings supplied")
    n = runs[0].shape[0]
    if any(r.shape != (n,) for r in runs):
        raise InputError("all clusterings must be 1-D with the same length")
    counts = np.zeros((n, n), dtype=np.int64)
    for z in runs:
        counts += z[:, None] == z[None, :]
    return CoClusteringMatrix(counts / len(runs), len(runs))


def _check_candidate(pcm, candidate):
    candidate = np.asarray(candidate)
    if candidate.shape != (pcm.n_obs,):
        raise InputError(f"candidate has shape {candidate.shape}, expected ({pcm.n_obs},)")
    return candidate


def voi_lower_bound(pcm: CoClusteringMatrix, candidate) -> float:
    """Lower bound (bits) on the expected variation of information between ``candidate`` and the averaged clustering.

    ``(1/N) sum_n [log2 |C(n)| + log2 sum_j P_nj - 2 log2 sum_{j in C(n)} P_nj]``
    where C(n) is the candidate cluster containing n.
    """
    candidate = _check_candidate(pcm, candidate)
    _, inv = np.unique(candidate, return_inverse=True)
    member = np.zeros((pcm.n_obs, inv.max() + 1))
    member[np.arange(pcm.n_obs), inv] = 1.0
    size = member.sum(axis=0)[inv]
    within = (pcm.p @ member)[np.arange(pcm.n_obs), inv]
    if np.any(within <= 0):
        raise NumericalError("zero within-cluster co-clustering mass", term="voi_lower_bound")
    return float(np.mean(np.log2(size) + np.log2(pcm.p.sum(axis=1)) - 2.0 * np.log2(within)))


def dendrogram_bounds(pcm: CoClusteringMatrix, merges) -> np.ndarray:
    """VoI lower bound at every cut of a dendrogram; entry k-1 is the k-cluster cut."""
    n = pcm.n_obs
    p = pcm.p
    log_rowsum = np.log2(p.sum(axis=1))
    groups = {i: np.array([i]) for i in range(n)}
    within = np.diag(p).astype(float).copy()
    size = np.ones(n)
    bounds = np.empty(n)
    bounds[n - 1] = np.mean(np.log2(size) + log_rowsum - 2.0 * np.log2(within))
    for step, (i, j, _) in enumerate(merges):
        a, b = groups[int(i)], groups.pop(int(j))
        cross = p[np.ix_(a, b)]
        within[a] += cross.sum(axis=1)
        within[b] += cross.sum(axis=0)
        merged = np.concatenate((a, b))
        size[merged] = merged.size
        groups[int(i)] = merged
        bounds[n - 2 - step] = np.mean(np.log2(size) + log_rowsum - 2.0 * np.log2(within))
    return bounds


def voi_summary(pcm: CoClusteringMatrix, linkage="complete", atol=1e-10) -> SummaryClustering:
    """Dendrogram cut (on 1 - P) minimising the VoI lower bound; ties go to fewer clusters."""
    merges = hclust.linkage(1.0 - pcm.p, linkage)
    bounds = dendrogram_bounds(pcm, merges)
    k = int(np.flatnonzero(bounds <= bounds.min() + atol)[0]) + 1
    labels = hclust.cut(merges, pcm.n_obs, k)
    return _summary(labels, f"voi_{linkage}", voi_lower_bound(pcm, labels))


def medvedovic_summary(pcm: CoClusteringMatrix, cfg: SummaryConfig = SummaryConfig()) -> SummaryClustering:
    """Complete-linkage tree on 1 - P cut at height 1 - medvedovic_cut."""
    merges = hclust.linkage(1.0 - pcm.p, "complete")
    labels = hclust.cut_height(merges, pcm.n_obs, 1.0 - cfg.medvedovic_cut)
    return _summary(labels, "medvedovic", voi_lower_bound(pcm, labels))


def summarize(pcm: CoClusteringMatrix, cfg: SummaryConfig = SummaryConfig()) -> SummaryClustering:
    if cfg.method == "medvedovic":
        return medvedovic_summary(pcm, cfg)
    return voi_summary(pcm, cfg.method.split("_", 1)[1])


def summarize_variables(runs_c, cfg: SummaryConfig = SummaryConfig()) -> np.ndarray:
    """Variable j is kept when the share of runs with ``c_j > c_cut`` strictly exceeds ``tau``."""
    c = np.atleast_2d(np.asarray(runs_c, dtype=float))
    if c.shape[0] < 1:
        raise InputError("need at least one run")
    share = (c > cfg.c_cut).sum(axis=0) / c.shape[0]
    return share > cfg.tau
