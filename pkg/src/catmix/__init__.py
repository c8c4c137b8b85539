"""Variational Bayesian mixture clustering for categorical data."""

from .averaging import AveragedResult, fit_average, fit_many
from .coca import MatrixOfClusters, build_moc, cluster_moc
from .data import (
    CategoricalDataset,
    LabeledDataset,
    SimulationDesign,
    load_dataset,
    preset_design,
    save_dataset,
    simulate,
)
from .engine import FitResult, ModelConfig, fit
from .errors import (
    CatMixError,
    ConfigError,
    DegenerateError,
    DesignError,
    InputError,
    NumericalError,
    ParseError,
    ValidationError,
)
from .metrics import MetricReport, adjusted_rand_index, f1_selection, metric_report
from .summarize import (
    CoClusteringMatrix,
    SummaryClustering,
    SummaryConfig,
    build_coclustering,
    summarize,
    summarize_variables,
    voi_lower_bound,
    voi_summary,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
