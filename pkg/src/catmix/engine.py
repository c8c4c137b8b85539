"""Coordinate-ascent variational inference for an overfitted categorical mixture.

Model, with ``x_ni`` the level of variable i for observation n::

    pi ~ Dirichlet(alpha0, ..., alpha0)               (K components)
    phi_ki ~ Dirichlet(1/L_i, ..., 1/L_i)
    z_n | pi ~ Categorical(pi)
    delta_i ~ Beta(a, a);  gamma_i | delta_i ~ Bernoulli(delta_i)
    x_ni | z_n=k, gamma_i ~ phi_ki if gamma_i = 1 else phi0_i

``phi0_i`` is a fixed point estimate computed once from the full column.
Without variable selection every gamma_i is pinned to 1 and the gamma/delta
factors disappear.

The mean-field posterior q(Z) q(pi) q(phi) q(gamma) q(delta) is stored in a
:class:`VariationalState`. Level-indexed quantities (``eps_star``, expected
log-probabilities, counts) are kept as K x S arrays where S = sum(L_i) and
variable i occupies columns ``offsets[i] : offsets[i] + L_i``.
"""

import time
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.special import betaln, digamma, expit, gammaln, xlogy

from .errors import ConfigError, NumericalError
from .kmodes import init_kmodes


@dataclass(frozen=True)
class ModelConfig:
    """Priors and run controls. The Dirichlet prior on each phi_ki is fixed at 1/L_i per level."""

    k_max: int = 20
    alpha0: float = 0.05
    a: float = 2.0
    variable_selection: bool = False
    max_iter: int = 2000
    elbo_tol: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if int(self.k_max) != self.k_max or self.k_max < 1:
            raise ConfigError(f"k_max must be a positive integer, got {self.k_max}")
        if not self.alpha0 > 0:
            raise ConfigError(f"alpha0 must be positive, got {self.alpha0}")
        if not self.a > 0:
            raise ConfigError(f"a must be positive, got {self.a}")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ConfigError(f"max_iter must be a positive integer, got {self.max_iter}")
        if not self.elbo_tol > 0:
            raise ConfigError(f"elbo_tol must be positive, got {self.elbo_tol}")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass(frozen=True, eq=False)
class NullModel:
    """Cluster-independent level probabilities, flat over the one-hot columns."""

    phi0_flat: np.ndarray
    offsets: np.ndarray
    categories: np.ndarray

    @property
    def phi0(self):
        return [self.phi0_flat[o:o + l] for o, l in zip(self.offsets, self.categories)]

    @property
    def log_phi0(self):
        return np.log(self.phi0_flat)


@dataclass(eq=False)
class VariationalState:
    resp: np.ndarray
    log_rho: np.ndarray
    alpha_star: np.ndarray
    eps_star: np.ndarray
    c: np.ndarray
    eta1: np.ndarray
    eta2: np.ndarray
    delta_post: np.ndarray
    offsets: np.ndarray
    categories: np.ndarray
    elbo_trace: list = field(default_factory=list)
    iter_count: int = 0

    def eps_star_for(self, k, j):
        o = self.offsets[j]
        return self.eps_star[k, o:o + self.categories[j]]


@dataclass(eq=False)
class FitResult:
    labels: np.ndarray
    state: VariationalState
    elbo: float
    n_nonempty: int
    selected_c: np.ndarray
    config: ModelConfig
    wall_time: float
    converged: bool

    def to_dict(self):
        return {
            "config": self.config.to_dict(),
            "seed": self.config.seed,
            "labels": self.labels.tolist(),
            "elbo": self.elbo,
            "elbo_trace": list(self.state.elbo_trace),
            "c": self.selected_c.tolist(),
            "n_nonempty": self.n_nonempty,
            "n_iter": self.state.iter_count,
            "converged": self.converged,
            "wall_time": self.wall_time,
        }


# ---------------------------------------------------------------------------
# building blocks


def _segment_sum(a, offsets):
    """Sum the level columns of each variable: (..., S) -> (..., P)."""
    return np.add.reduceat(a, offsets, axis=-1)


def _expand(per_var, categories):
    """Broadcast a per-variable array (..., P) onto level columns (..., S)."""
    return np.repeat(per_var, categories, axis=-1)


def prior_eps(categories) -> np.ndarray:
    """Flat Dirichlet prior concentration, 1/L_i on every level of variable i."""
    return _expand(1.0 / np.asarray(categories, dtype=float), categories)


def expected_log_pi(alpha_star):
    return digamma(alpha_star) - digamma(alpha_star.sum())


def expected_log_phi(eps_star, offsets, categories):
    return digamma(eps_star) - _expand(digamma(_segment_sum(eps_star, offsets)), categories)


def precompute_null(data) -> NullModel:
    """Posterior mean of each column's level probabilities under a Dirichlet(1/L_j) prior."""
    cats = data.categories
    eps = prior_eps(cats)
    counts = data.one_hot().sum(axis=0)
    # L_j * (1/L_j) + N
    return NullModel((eps + counts) / (1.0 + data.n_obs), data.offsets, cats)


def e_step(onehot, state, null, config=None, iteration=None):
    """Update responsibilities from the current q(pi), q(phi) and c.

    ``log_rho[n, k] = E[ln pi_k] + sum_i c_i E[ln phi_k,i,x_ni] + (1 - c_i) ln phi0_i,x_ni``
    """
    cats, offs = state.categories, state.offsets
    c_flat = _expand(state.c, cats)
    elog_phi = expected_log_phi(state.eps_star, offs, cats)
    null_term = onehot @ ((1.0 - c_flat) * null.log_phi0)
    log_rho = onehot @ (elog_phi * c_flat).T + expected_log_pi(state.alpha_star)[None, :] + null_term[:, None]
    if not np.all(np.isfinite(log_rho)):
        raise NumericalError("non-finite log responsibility", iteration=iteration, term="log_rho")
    shifted = log_rho - log_rho.max(axis=1, keepdims=True)
    resp = np.exp(shifted)
    resp /= resp.sum(axis=1, keepdims=True)
    state.log_rho = log_rho
    state.resp = resp
    return resp


def m_step_pi(resp, config) -> np.ndarray:
    return config.alpha0 + resp.sum(axis=0)


def m_step_phi(onehot, resp, c, categories, counts=None) -> np.ndarray:
    """``eps*_kil = 1/L_i + c_i * sum_n r_nk [x_ni = l]``."""
    if counts is None:
        counts = resp.T @ onehot
    return prior_eps(categories)[None, :] + counts * _expand(c, categories)[None, :]


def delta_expectations(delta_post):
    """``(E[ln delta], E[ln(1 - delta)])`` for Beta(delta_post[:, 0], delta_post[:, 1])."""
    b1, b2 = delta_post[:, 0], delta_post[:, 1]
    tot = digamma(b1 + b2)
    return digamma(b1) - tot, digamma(b2) - tot


def inclusion_probability(log_eta1, log_eta2):
    """``eta1 / (eta1 + eta2)`` from log-domain inputs without overflow."""
    return expit(np.asarray(log_eta1) - np.asarray(log_eta2))


def m_step_gamma_delta(onehot, resp, eps_star, null, state, config, counts=None):
    """Update c (= E[gamma]) and q(delta); returns ``(c, log_eta1, log_eta2, delta_post)``.

    ``ln eta1_i = sum_nk r_nk E[ln phi_k,i,x_ni] + E[ln delta_i]`` and
    ``ln eta2_i = sum_n ln phi0_i,x_ni + E[ln(1 - delta_i)]``; c_i is the
    normalised eta1_i, and q(delta_i) = Beta(c_i + a, 1 - c_i + a).
    """
    if not config.variable_selection:
        raise ConfigError("gamma/delta updates require variable_selection=True")
    cats, offs = state.categories, state.offsets
    if counts is None:
        counts = resp.T @ onehot
    elog_phi = expected_log_phi(eps_star, offs, cats)
    elog_d, elog_1md = delta_expectations(state.delta_post)
    log_eta1 = _segment_sum((counts * elog_phi).sum(axis=0), offs) + elog_d
    log_eta2 = _segment_sum(counts.sum(axis=0) * null.log_phi0, offs) + elog_1md
    c = inclusion_probability(log_eta1, log_eta2)
    delta_post = np.column_stack([c + config.a, 1.0 - c + config.a])
    return c, log_eta1, log_eta2, delta_post


def _dirichlet_log_norm(conc, offsets):
    """Sum over blocks of ln Gamma(sum conc) - sum ln Gamma(conc)."""
    return gammaln(_segment_sum(conc, offsets)).sum(axis=-1) - _segment_sum(gammaln(conc), offsets).sum(axis=-1)


def elbo_terms(onehot, state, null, config) -> dict:
    """Every term of the evidence lower bound at the current state.

    Keys ending in ``_q`` are entropies (``-E[ln q]``); the rest are
    ``E_q[ln p(.)]`` for one factor of the joint.
    """
    cats, offs = state.categories, state.offsets
    resp, alpha_star, eps_star = state.resp, state.alpha_star, state.eps_star
    k = resp.shape[1]
    c_flat = _expand(state.c, cats)
    counts = resp.T @ onehot
    elog_pi = expected_log_pi(alpha_star)
    elog_phi = expected_log_phi(eps_star, offs, cats)
    eps0 = prior_eps(cats)

    t = {}
    t["x"] = float((counts * elog_phi * c_flat).sum() + (counts.sum(axis=0) * (1.0 - c_flat) * null.log_phi0).sum())
    t["z"] = float(resp.sum(axis=0) @ elog_pi)
    t["pi"] = float(gammaln(k * config.alpha0) - k * gammaln(config.alpha0) + (config.alpha0 - 1.0) * elog_pi.sum())
    t["phi"] = float(k * _dirichlet_log_norm(eps0, offs) + ((eps0 - 1.0)[None, :] * elog_phi).sum())
    t["z_q"] = float(-xlogy(resp, resp).sum())
    t["pi_q"] = float(-(gammaln(alpha_star.sum()) - gammaln(alpha_star).sum() + ((alpha_star - 1.0) * elog_pi).sum()))
    t["phi_q"] = float(-(_dirichlet_log_norm(eps_star, offs).sum() + ((eps_star - 1.0) * elog_phi).sum()))
    if config.variable_selection:
        c = state.c
        b1, b2 = state.delta_post[:, 0], state.delta_post[:, 1]
        elog_d, elog_1md = delta_expectations(state.delta_post)
        a = config.a
        t["gamma"] = float((c * elog_d + (1.0 - c) * elog_1md).sum())
        t["delta"] = float((-betaln(a, a) + (a - 1.0) * (elog_d + elog_1md)).sum())
        t["gamma_q"] = float(-(xlogy(c, c) + xlogy(1.0 - c, 1.0 - c)).sum())
        t["delta_q"] = float(-(-betaln(b1, b2) + (b1 - 1.0) * elog_d + (b2 - 1.0) * elog_1md).sum())
    return t


def compute_elbo(onehot, state, null, config, iteration=None) -> float:
    terms = elbo_terms(onehot, state, null, config)
    for name, value in terms.items():
        if not np.isfinite(value):
            raise NumericalError("non-finite ELBO contribution", iteration=iteration, term=name)
    return float(sum(terms.values()))


# ---------------------------------------------------------------------------
# driver


def initial_state(data, labels, config) -> VariationalState:
    """State whose q(pi), q(phi) are the M-step from hard one-hot ``labels``, with every c_i = 1."""
    n, p, k = data.n_obs, data.n_vars, config.k_max
    labels = np.asarray(labels)
    if labels.shape != (n,) or labels.min() < 0 or labels.max() >= k:
        raise ConfigError(f"initial labels must be {n} indices in 0..{k - 1}")
    resp = np.zeros((n, k))
    resp[np.arange(n), labels] = 1.0
    c = np.ones(p)
    onehot = data.one_hot()
    return VariationalState(
        resp=resp,
        log_rho=np.zeros((n, k)),
        alpha_star=m_step_pi(resp, config),
        eps_star=m_step_phi(onehot, resp, c, data.categories),
        c=c,
        eta1=np.zeros(p),
        eta2=np.zeros(p),
        delta_post=np.column_stack([c + config.a, 1.0 - c + config.a]),
        offsets=data.offsets,
        categories=data.categories,
    )


def cavi_step(onehot, state, null, config, iteration=None, update_gamma=None):
    """One full cycle E -> pi -> phi -> (gamma, delta), then the ELBO."""
    if update_gamma is None:
        update_gamma = config.variable_selection
    resp = e_step(onehot, state, null, config, iteration)
    counts = resp.T @ onehot
    state.alpha_star = m_step_pi(resp, config)
    state.eps_star = m_step_phi(onehot, resp, state.c, state.categories, counts)
    if update_gamma:
        state.c, state.eta1, state.eta2, state.delta_post = m_step_gamma_delta(
            onehot, resp, state.eps_star, null, state, config, counts
        )
    elbo = compute_elbo(onehot, state, null, config, iteration)
    state.elbo_trace.append(elbo)
    state.iter_count += 1
    return elbo


def fit(data, config: ModelConfig, init_labels: Optional[np.ndarray] = None) -> FitResult:
    """Fit the mixture by CAVI from a k-modes start.

    Stops when the absolute ELBO change falls below ``config.elbo_tol`` or
    after ``config.max_iter`` cycles; hitting the cap is reported through
    ``FitResult.converged`` rather than raised.
    """
    t0 = time.perf_counter()
    if config.k_max > data.n_obs:
        raise ConfigError(f"k_max={config.k_max} exceeds N={data.n_obs}")
    if init_labels is None:
        init_labels = init_kmodes(data, config.k_max, config.seed)
    onehot = data.one_hot()
    null = precompute_null(data)
    state = initial_state(data, init_labels, config)

    converged = False
    prev = None
    for it in range(config.max_iter):
        elbo = cavi_step(onehot, state, null, config, iteration=it)
        if prev is not None and abs(elbo - prev) < config.elbo_tol:
            converged = True
            break
        prev = elbo

    labels = state.resp.argmax(axis=1)
    return FitResult(
        labels=labels,
        state=state,
        elbo=state.elbo_trace[-1],
        n_nonempty=int(np.unique(labels).size),
        selected_c=state.c.copy(),
        config=config,
        wall_time=time.perf_counter() - t0,
        converged=converged,
    )


def with_seed(config: ModelConfig, seed: int) -> ModelConfig:
    return replace(config, seed=int(seed))
