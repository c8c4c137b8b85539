"""Agreement metrics between clusterings and variable-selection outcomes."""

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from scipy import stats

from .errors import DegenerateError, InputError


@dataclass
class MetricReport:
    ari: float
    n_clusters_found: int
    n_clusters_true: int
    f1: Optional[float] = None
    precision: Optional[float] = None
    recall: Optional[float] = None

    def to_dict(self):
        return asdict(self)

    def to_csv_row(self):
        d = self.to_dict()
        head = ",".join(d)
        row = ",".join("" if v is None else repr(v) if isinstance(v, float) else str(v) for v in d.values())
        return head + "\n" + row + "\n"


def contingency(a, b) -> np.ndarray:
    a = np.asarray(a)
    b = np.asarray(b)
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)
    return table


def _pairs(x):
    x = np.asarray(x, dtype=np.float64)
    return (x * (x - 1.0) / 2.0).sum()


def adjusted_rand_index(a, b) -> float:
    """Hubert-Arabie adjusted Rand index.

    Returns 1.0 when the adjustment denominator vanishes (both partitions
    trivial and identical, e.g. all-in-one against all-in-one).
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or a.ndim != 1:
        raise InputError(f"label vectors differ in shape: {a.shape} vs {b.shape}")
    if a.size < 2:
        raise InputError("ARI needs at least two observations")
    table = contingency(a, b)
    index = _pairs(table)
    sum_a = _pairs(table.sum(axis=1))
    sum_b = _pairs(table.sum(axis=0))
    expected = sum_a * sum_b / _pairs([a.size])
    max_index = 0.5 * (sum_a + sum_b)
    denom = max_index - expected
    if denom == 0:
        return 1.0
    return float((index - expected) / denom)


def f1_selection(selected, truth):
    """``(precision, recall, f1)`` of a selected-variable mask against the true mask.

    Any ratio with a zero denominator is reported as 0.
    """
    selected = np.asarray(selected, dtype=bool)
    truth = np.asarray(truth, dtype=bool)
    if selected.shape != truth.shape:
        raise InputError(f"selection masks differ in shape: {selected.shape} vs {truth.shape}")
    tp = int(np.sum(selected & truth))
    fp = int(np.sum(selected & ~truth))
    fn = int(np.sum(~selected & truth))
    if tp == 0:
        return 0.0, 0.0, 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return precision, recall, 2 * precision * recall / (precision + recall)


def count_nonempty(labels) -> int:
    return int(np.unique(np.asarray(labels)).size)


def elbo_ari_report(fits, truth):
    """Pearson correlation between final ELBO and ARI against ``truth`` across fits.

    Returns ``(r, p_value)``; the p-value is two-sided from a t distribution
    with len(fits) - 2 degrees of freedom.
    """
    if len(fits) < 3:
        raise InputError("need at least three fits")
    elbos = np.array([f.elbo for f in fits], dtype=float)
    aris = np.array([adjusted_rand_index(f.labels, truth) for f in fits])
    return pearson(elbos, aris)


def pearson(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise DegenerateError("correlation undefined: a series has zero variance")
    res = stats.pearsonr(x, y)
    return float(res.statistic), float(res.pvalue)


def metric_report(labels, truth, selected=None, relevant=None) -> MetricReport:
    rep = MetricReport(
        ari=adjusted_rand_index(labels, truth),
        n_clusters_found=count_nonempty(labels),
        n_clusters_true=count_nonempty(truth),
    )
    if selected is not None and relevant is not None:
        rep.precision, rep.recall, rep.f1 = f1_selection(selected, relevant)
    return rep
