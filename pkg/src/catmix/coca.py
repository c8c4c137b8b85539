"""Cluster-of-clusters analysis: stack several clusterings into a binary matrix and cluster it."""

import csv
import io
from dataclasses import dataclass, replace

import numpy as np

from .averaging import fit_average
from .data import CategoricalDataset
from .engine import ModelConfig
from .errors import InputError
from .fileio import atomic_write_text
from .summarize import SummaryClustering, SummaryConfig


@dataclass(frozen=True, eq=False)
class MatrixOfClusters:
    """K x N indicator matrix; row r flags the members of cluster ``cluster_origin[r]``."""

    moc: np.ndarray
    cluster_origin: tuple

    @property
    def n_obs(self) -> int:
        return self.moc.shape[1]

    @property
    def total_clusters(self) -> int:
        return self.moc.shape[0]

    @property
    def n_datasets(self) -> int:
        return len({m for m, _ in self.cluster_origin})

    def row_names(self):
        return [f"m{m}:{lab}" for m, lab in self.cluster_origin]

    def to_dataset(self, obs_names=None) -> CategoricalDataset:
        """Observations as rows, one binary variable per source cluster."""
        return CategoricalDataset(self.moc.T.astype(np.int64), np.full(self.total_clusters, 2), tuple(self.row_names()), obs_names)


def build_moc(clusterings) -> MatrixOfClusters:
    """Rows ordered by source clustering, then by first occurrence of each label within it."""
    clusterings = [np.asarray(c) for c in clusterings]
    if len(clusterings) < 2:
        raise InputError("a matrix of clusters needs at least two clusterings")
    n = clusterings[0].shape[0]
    if any(c.shape != (n,) for c in clusterings):
        raise InputError("all clusterings must cover the same observations")
    rows, origin = [], []
    for m, c in enumerate(clusterings):
        _, first = np.unique(c, return_index=True)
        for lab in c[np.sort(first)]:
            rows.append(c == lab)
            origin.append((m, lab.item()))
    return MatrixOfClusters(np.array(rows, dtype=np.int8), tuple(origin))


def average_moc(moc: MatrixOfClusters, config: ModelConfig, m_runs=25, workers=1, obs_names=None):
    """Averaged fit of the observations described by ``moc``; variable selection is always off."""
    config = replace(config, variable_selection=False)
    data = moc.to_dataset(obs_names)
    return fit_average(data, config, m_runs, SummaryConfig(method="voi_complete"), workers=workers)


def cluster_moc(moc: MatrixOfClusters, config: ModelConfig, m_runs=25, workers=1) -> SummaryClustering:
    return average_moc(moc, config, m_runs, workers).summary


def write_moc_csv(moc: MatrixOfClusters, path, obs_names=None):
    if obs_names is None:
        obs_names = [str(i) for i in range(moc.n_obs)]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["cluster"] + list(obs_names))
    for name, row in zip(moc.row_names(), moc.moc):
        w.writerow([name] + row.tolist())
    atomic_write_text(path, buf.getvalue())
