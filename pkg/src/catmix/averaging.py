"""Independent restarts and their averaged summary."""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .engine import FitResult, ModelConfig, fit, with_seed
from .errors import CatMixError
from .summarize import (
    CoClusteringMatrix,
    SummaryClustering,
    SummaryConfig,
    build_coclustering,
    summarize,
    summarize_variables,
)

log = logging.getLogger(__name__)


class RunFailed(CatMixError):
    def __init__(self, seed, cause):
        self.seed = seed
        self.cause = cause
        super().__init__(f"fit with seed {seed} failed: {cause}")


@dataclass(eq=False)
class AveragedResult:
    summary: SummaryClustering
    pcm: CoClusteringMatrix
    fits: List[FitResult]


def run_seeds(base_seed, m_runs):
    return [int(base_seed) + m for m in range(m_runs)]


def _fit_one(args):
    data, config = args
    try:
        return fit(data, config)
    except CatMixError as exc:
        raise RunFailed(config.seed, exc) from exc


def fit_many(data, config: ModelConfig, m_runs: int, base_seed: Optional[int] = None, workers: int = 1):
    """``m_runs`` fits with seeds ``base_seed + m``; results come back in seed order."""
    base = config.seed if base_seed is None else base_seed
    jobs = [(data, with_seed(config, s)) for s in run_seeds(base, m_runs)]
    if workers <= 1 or m_runs <= 1:
        return [_fit_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_fit_one, jobs))


def average_fits(fits, cfg: SummaryConfig = SummaryConfig()) -> AveragedResult:
    pcm = build_coclustering([f.labels for f in fits])
    summary = summarize(pcm, cfg)
    if fits and fits[0].config.variable_selection:
        summary.selected_vars = summarize_variables([f.selected_c for f in fits], cfg)
    return AveragedResult(summary, pcm, list(fits))


def fit_average(data, config: ModelConfig, m_runs=25, cfg: SummaryConfig = SummaryConfig(), base_seed=None, workers=1):
    """Fit ``m_runs`` restarts and summarise them through their co-clustering matrix."""
    fits = fit_many(data, config, m_runs, base_seed, workers)
    log.info("completed %d fits; ELBO range [%.3f, %.3f]", len(fits), min(f.elbo for f in fits), max(f.elbo for f in fits))
    return average_fits(fits, cfg)
