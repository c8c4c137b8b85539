"""Categorical datasets: loading, validation and synthetic generation.

Categories are stored 0-based (``0 .. L_j - 1``).
"""

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import DesignError, ParseError, ValidationError
from .fileio import atomic_write_text, read_json, write_json, write_labels_csv

GENERATOR_ID = "catmix.simulate/v1"


@dataclass(frozen=True, eq=False)
class CategoricalDataset:
    """N observations of P categorical variables, variable j taking L_j levels."""

    values: np.ndarray
    categories: np.ndarray
    var_names: Optional[tuple] = None
    obs_names: Optional[tuple] = None

    def __post_init__(self):
        values = np.array(self.values, dtype=np.int64, copy=True)
        if values.ndim != 2:
            raise ValidationError(f"values must be 2-D, got shape {values.shape}")
        cats = np.array(self.categories, dtype=np.int64, copy=True).reshape(-1)
        n, p = values.shape
        if cats.shape[0] != p:
            raise ValidationError(f"{cats.shape[0]} category counts for {p} variables")
        if n < 1 or p < 1:
            raise ValidationError("dataset must have at least one observation and one variable")
        if np.any(cats < 2):
            bad = int(np.flatnonzero(cats < 2)[0])
            raise ValidationError(f"variable {bad} has L={cats[bad]} < 2 categories")
        if np.any(values < 0) or np.any(values >= cats[None, :]):
            r, c = np.argwhere((values < 0) | (values >= cats[None, :]))[0]
            raise ValidationError(f"value {values[r, c]} at row {r}, column {c} outside 0..{cats[c] - 1}")
        values.setflags(write=False)
        cats.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "categories", cats)
        if self.var_names is not None:
            if len(self.var_names) != p:
                raise ValidationError("var_names length does not match number of variables")
            object.__setattr__(self, "var_names", tuple(str(v) for v in self.var_names))
        if self.obs_names is not None:
            if len(self.obs_names) != n:
                raise ValidationError("obs_names length does not match number of observations")
            object.__setattr__(self, "obs_names", tuple(str(v) for v in self.obs_names))

    @property
    def n_obs(self) -> int:
        return self.values.shape[0]

    @property
    def n_vars(self) -> int:
        return self.values.shape[1]

    @property
    def offsets(self) -> np.ndarray:
        """Start column of each variable's block in the one-hot encoding."""
        return np.concatenate(([0], np.cumsum(self.categories)[:-1]))

    def one_hot(self) -> np.ndarray:
        """N x sum(L_j) indicator matrix, variable blocks laid out in column order."""
        total = int(self.categories.sum())
        out = np.zeros((self.n_obs, total))
        cols = self.values + self.offsets[None, :]
        out[np.arange(self.n_obs)[:, None], cols] = 1.0
        return out

    def permuted(self, order) -> "CategoricalDataset":
        order = np.asarray(order)
        obs = None if self.obs_names is None else tuple(self.obs_names[i] for i in order)
        return CategoricalDataset(self.values[order], self.categories, self.var_names, obs)

    def column_names(self):
        if self.var_names is not None:
            return list(self.var_names)
        return [f"V{j + 1}" for j in range(self.n_vars)]

    def __eq__(self, other):
        if not isinstance(other, CategoricalDataset):
            return NotImplemented
        return (
            np.array_equal(self.values, other.values)
            and np.array_equal(self.categories, other.categories)
            and self.var_names == other.var_names
            and self.obs_names == other.obs_names
        )

    __hash__ = None


def _schema_categories(schema, header):
    cats = schema.get("categories")
    if cats is None:
        raise ValidationError("schema must contain a 'categories' entry")
    if isinstance(cats, dict):
        missing = [h for h in header if h not in cats]
        if missing:
            raise ValidationError(f"schema has no category count for {missing}")
        return np.array([int(cats[h]) for h in header])
    if len(cats) != len(header):
        raise ValidationError(f"schema lists {len(cats)} category counts for {len(header)} columns")
    return np.array([int(c) for c in cats])


def load_dataset(path, format="csv", schema=None) -> CategoricalDataset:
    """Read a header-plus-integers CSV into a :class:`CategoricalDataset`.

    ``L_j`` is the largest observed index plus one unless a schema supplies it.
    The schema is either a dict, a path to a JSON file, or ``None``; in the
    last case ``<stem>.schema.json`` next to the CSV is used when present.
    A schema-free column in which only one category occurs is rejected.
    """
    if format != "csv":
        raise ValidationError(f"unsupported format {format!r}")
    path = Path(path)
    if schema is None:
        sidecar = path.with_name(path.stem + ".schema.json")
        if sidecar.exists():
            schema = sidecar
    if isinstance(schema, (str, Path)):
        schema = read_json(schema)

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise ValidationError(f"{path}: missing header row")
        header = [h.strip() for h in header]
        rows = []
        for i, row in enumerate(reader, start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise ValidationError(f"{path}: row {i} has {len(row)} cells, header has {len(header)}")
            parsed = []
            for j, cell in enumerate(row):
                cell = cell.strip()
                if not cell.isdigit():
                    raise ParseError(i, j, cell, path)
                parsed.append(int(cell))
            rows.append(parsed)
    if not rows:
        raise ValidationError(f"{path}: no observations")
    values = np.array(rows, dtype=np.int64)

    if schema is not None:
        cats = _schema_categories(schema, header)
        over = np.flatnonzero(values.max(axis=0) >= cats)
        if over.size:
            j = int(over[0])
            raise ValidationError(f"column {header[j]!r} has index {values[:, j].max()} >= declared L={cats[j]}")
    else:
        for j in range(values.shape[1]):
            if np.unique(values[:, j]).size < 2:
                raise ValidationError(f"column {header[j]!r} takes a single observed category (degenerate variable)")
        cats = values.max(axis=0) + 1
    return CategoricalDataset(values, cats, var_names=tuple(header))


def save_dataset(data: CategoricalDataset, path, write_schema=True):
    """Write ``data`` as CSV and, by default, a sidecar schema fixing ``L_j``."""
    path = Path(path)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    names = data.column_names()
    w.writerow(names)
    w.writerows(data.values.tolist())
    atomic_write_text(path, buf.getvalue())
    if write_schema:
        write_json(path.with_name(path.stem + ".schema.json"), {"categories": dict(zip(names, data.categories.tolist()))})


# ---------------------------------------------------------------------------
# simulation


@dataclass(frozen=True)
class SimulationDesign:
    n_obs: int
    n_vars: int
    n_relevant: int
    cluster_sizes: tuple
    n_categories: int = 2
    beta_shape: tuple = (1.0, 5.0)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "cluster_sizes", tuple(int(s) for s in self.cluster_sizes))
        object.__setattr__(self, "beta_shape", tuple(float(b) for b in self.beta_shape))
        if sum(self.cluster_sizes) != self.n_obs:
            raise DesignError(f"cluster sizes sum to {sum(self.cluster_sizes)}, expected n_obs={self.n_obs}")
        if any(s < 1 for s in self.cluster_sizes):
            raise DesignError("every cluster must contain at least one observation")
        if not 0 <= self.n_relevant <= self.n_vars:
            raise DesignError(f"n_relevant={self.n_relevant} must lie in [0, n_vars={self.n_vars}]")
        if self.n_vars < 1:
            raise DesignError("n_vars must be positive")
        if self.n_categories < 2:
            raise DesignError("n_categories must be at least 2")
        if len(self.beta_shape) != 2 or min(self.beta_shape) <= 0:
            raise DesignError("beta_shape must be a pair of positive reals")

    @property
    def k_true(self) -> int:
        return len(self.cluster_sizes)

    def to_dict(self):
        return {
            "n_obs": self.n_obs,
            "n_vars": self.n_vars,
            "n_relevant": self.n_relevant,
            "k_true": self.k_true,
            "cluster_sizes": list(self.cluster_sizes),
            "n_categories": self.n_categories,
            "beta_shape": list(self.beta_shape),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        k_true = d.pop("k_true", None)
        design = cls(**d)
        if k_true is not None and k_true != design.k_true:
            raise DesignError(f"k_true={k_true} disagrees with {design.k_true} cluster sizes")
        return design


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    data: CategoricalDataset
    true_labels: np.ndarray
    relevant_mask: np.ndarray
    probs: Optional[np.ndarray] = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        labels = np.asarray(self.true_labels, dtype=np.int64)
        mask = np.asarray(self.relevant_mask, dtype=bool)
        if labels.shape != (self.data.n_obs,):
            raise ValidationError("true_labels must have one entry per observation")
        if mask.shape != (self.data.n_vars,):
            raise ValidationError("relevant_mask must have one entry per variable")
        k = labels.max() + 1
        if labels.min() < 0 or np.unique(labels).size != k:
            raise ValidationError("true labels must use every index 0..k_true-1")
        object.__setattr__(self, "true_labels", labels)
        object.__setattr__(self, "relevant_mask", mask)


def _draw_probability_vectors(rng, count, n_categories, beta_shape):
    """``count`` probability vectors over ``n_categories`` levels.

    Binary: P(category 1) ~ Beta(beta_shape). More levels: symmetric Dirichlet(1).
    """
    if n_categories == 2:
        p1 = rng.beta(beta_shape[0], beta_shape[1], size=count)
        return np.stack([1.0 - p1, p1], axis=-1)
    return rng.dirichlet(np.ones(n_categories), size=count)


def simulate(design: SimulationDesign) -> LabeledDataset:
    """Draw a labelled dataset from ``design``; fully determined by ``design.seed``.

    Relevant variables (the first ``n_relevant`` columns) get one probability
    vector per cluster; the remaining variables share one vector across all
    clusters. Observation order is shuffled.
    """
    rng = np.random.default_rng(design.seed)
    k, p, lev = design.k_true, design.n_vars, design.n_categories
    probs = np.empty((k, p, lev))
    r = design.n_relevant
    if r:
        probs[:, :r] = _draw_probability_vectors(rng, k * r, lev, design.beta_shape).reshape(k, r, lev)
    if r < p:
        shared = _draw_probability_vectors(rng, p - r, lev, design.beta_shape)
        probs[:, r:] = shared[None, :, :]

    labels = np.repeat(np.arange(k), design.cluster_sizes)
    labels = labels[rng.permutation(design.n_obs)]
    cum = np.cumsum(probs[labels], axis=-1)
    cum[..., -1] = 1.0
    u = rng.random((design.n_obs, p))
    values = (u[..., None] >= cum).sum(axis=-1)

    data = CategoricalDataset(values, np.full(p, lev), var_names=tuple(f"V{j + 1}" for j in range(p)))
    mask = np.zeros(p, dtype=bool)
    mask[:r] = True
    generator = "binary Beta(%g,%g)" % design.beta_shape if lev == 2 else f"symmetric Dirichlet(1) over {lev} levels"
    meta = {"design": design.to_dict(), "generator": GENERATOR_ID, "probability_model": generator}
    return LabeledDataset(data, labels, mask, probs=probs, metadata=meta)


def simulate_categorical(design: SimulationDesign) -> LabeledDataset:
    """Like :func:`simulate`, for designs with more than two categories per variable."""
    if design.n_categories < 3:
        raise DesignError("simulate_categorical expects n_categories >= 3")
    return simulate(design)


# Design table presets. Sizes drawn uniformly within the range, then rescaled to sum to n_obs.
PRESETS = {
    "sim2.1": dict(n_obs=1000, n_vars=100, relevant=1.00, k_true=10, k_init=30, size_range=(50, 200)),
    "sim2.2": dict(n_obs=1000, n_vars=100, relevant=1.00, k_true=10, k_init=30, size_range=(10, 400)),
    "sim2.3": dict(n_obs=2000, n_vars=100, relevant=1.00, k_true=20, k_init=40, size_range=(50, 200)),
    "sim2.4": dict(n_obs=1000, n_vars=100, relevant=0.75, k_true=10, k_init=30, size_range=(50, 200)),
    "sim2.5": dict(n_obs=1000, n_vars=100, relevant=0.50, k_true=10, k_init=30, size_range=(50, 200)),
    "sim3.1": dict(n_obs=1000, n_vars=100, relevant=1.00, k_true=10, k_init=20, size_range=(100, 100)),
    "sim3.2": dict(n_obs=1000, n_vars=100, relevant=1.00, k_true=10, k_init=20, size_range=(25, 400)),
    "sim3.3": dict(n_obs=2000, n_vars=100, relevant=1.00, k_true=20, k_init=30, size_range=(50, 200)),
    "sim3.4": dict(n_obs=1000, n_vars=100, relevant=0.75, k_true=10, k_init=20, size_range=(50, 200)),
    "sim3.5": dict(n_obs=2000, n_vars=100, relevant=0.50, k_true=10, k_init=20, size_range=(100, 400)),
    "cat3": dict(n_obs=1000, n_vars=100, relevant=1.00, k_true=10, k_init=20, size_range=(100, 100), n_categories=3),
}


def sample_cluster_sizes(n_obs, k, size_range, rng) -> tuple:
    """Uniform draws in ``size_range`` rescaled to sum exactly to ``n_obs`` (largest-remainder rounding)."""
    lo, hi = size_range
    raw = rng.integers(lo, hi + 1, size=k).astype(float)
    scaled = raw * n_obs / raw.sum()
    sizes = np.maximum(np.floor(scaled).astype(int), 1)
    short = n_obs - sizes.sum()
    order = np.argsort(-(scaled - np.floor(scaled)), kind="stable")
    i = 0
    while short != 0:
        j = order[i % k]
        if short > 0:
            sizes[j] += 1
            short -= 1
        elif sizes[j] > 1:
            sizes[j] -= 1
            short += 1
        i += 1
    return tuple(int(s) for s in sizes)


def preset_design(name: str, seed: int = 0) -> SimulationDesign:
    try:
        preset = PRESETS[name]
    except KeyError:
        raise DesignError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    rng = np.random.default_rng([seed, 0x5157E5])
    sizes = sample_cluster_sizes(preset["n_obs"], preset["k_true"], preset["size_range"], rng)
    return SimulationDesign(
        n_obs=preset["n_obs"],
        n_vars=preset["n_vars"],
        n_relevant=int(round(preset["relevant"] * preset["n_vars"])),
        cluster_sizes=sizes,
        n_categories=preset.get("n_categories", 2),
        seed=seed,
    )


def save_labeled(ds: LabeledDataset, out_dir, stem="data"):
    """Write data CSV (+schema), labels CSV, relevance mask CSV and metadata JSON."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_dataset(ds.data, out / f"{stem}.csv")
    write_labels_csv(out / "labels.csv", ds.true_labels, ds.data.obs_names)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["variable", "relevant"])
    for name, flag in zip(ds.data.column_names(), ds.relevant_mask):
        w.writerow([name, int(flag)])
    atomic_write_text(out / "relevant.csv", buf.getvalue())
    write_json(out / "metadata.json", ds.metadata)


def read_mask_csv(path) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader, None)
        flags = []
        for i, row in enumerate(reader, start=1):
            if not row:
                continue
            cell = row[-1].strip()
            if cell not in ("0", "1"):
                raise ParseError(i, len(row) - 1, cell, path)
            flags.append(cell == "1")
    return np.array(flags, dtype=bool)


def as_dataset(values: Sequence, categories=None) -> CategoricalDataset:
    """Convenience constructor; ``categories`` defaults to per-column max + 1 (at least 2)."""
    values = np.asarray(values, dtype=np.int64)
    if categories is None:
        categories = np.maximum(values.max(axis=0) + 1, 2)
    return CategoricalDataset(values, categories)
