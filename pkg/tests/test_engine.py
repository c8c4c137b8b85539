import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from catmix import engine
from catmix.data import CategoricalDataset
from catmix.engine import (
    ModelConfig,
    cavi_step,
    compute_elbo,
    delta_expectations,
    e_step,
    expected_log_pi,
    fit,
    inclusion_probability,
    initial_state,
    m_step_gamma_delta,
    m_step_phi,
    m_step_pi,
    precompute_null,
)
from catmix.errors import ConfigError, NumericalError
from catmix.kmodes import init_kmodes, kmodes
from catmix.metrics import adjusted_rand_index

import oracles


def state_for(data, labels, k, **cfg):
    config = ModelConfig(k_max=k, **cfg)
    return initial_state(data, labels, config), config


class TestConfig:
    @pytest.mark.parametrize(
        "kwargs", [dict(alpha0=0), dict(a=-1), dict(k_max=0), dict(elbo_tol=0), dict(max_iter=0), dict(k_max=2.5)]
    )
    def test_rejects(self, kwargs):
        with pytest.raises(ConfigError):
            ModelConfig(**kwargs)

    def test_defaults(self):
        c = ModelConfig()
        assert (c.alpha0, c.a, c.max_iter, c.elbo_tol) == (0.05, 2.0, 2000, 1e-6)


class TestNull:
    def test_symmetric_counts(self):
        d = CategoricalDataset([[0], [0], [1], [1]], [2])
        np.testing.assert_allclose(precompute_null(d).phi0[0], [0.5, 0.5])

    def test_unobserved_level(self):
        d = CategoricalDataset([[0], [0], [0]], [2])
        np.testing.assert_allclose(precompute_null(d).phi0[0], [0.875, 0.125], rtol=0, atol=1e-15)

    def test_normalised_and_positive(self, small_sim):
        null = precompute_null(small_sim.data)
        for vec in null.phi0:
            assert abs(vec.sum() - 1) < 1e-12
            assert np.all(vec > 0)


class TestKModes:
    def test_separable_blocks(self, two_blocks):
        labels = init_kmodes(two_blocks, 2, seed=0)
        assert adjusted_rand_index(labels, [0] * 5 + [1] * 5) == 1.0

    def test_single_cluster(self, small_sim):
        assert np.all(init_kmodes(small_sim.data, 1, seed=3) == 0)

    def test_every_point_a_mode(self, rng):
        values = np.unique(rng.integers(0, 3, (40, 6)), axis=0)[:12]
        d = CategoricalDataset(values, np.full(6, 3))
        labels, _, cost = kmodes(d, d.n_obs, seed=1)
        assert cost == 0
        assert np.unique(labels).size == d.n_obs

    def test_k_exceeds_n(self, two_blocks):
        with pytest.raises(ConfigError):
            init_kmodes(two_blocks, 11, seed=0)

    def test_deterministic(self, small_sim):
        a = init_kmodes(small_sim.data, 8, seed=42)
        b = init_kmodes(small_sim.data, 8, seed=42)
        assert np.array_equal(a, b)


class TestEStep:
    def test_identical_components_split_evenly(self, small_sim):
        d = small_sim.data
        state, config = state_for(d, np.zeros(d.n_obs, dtype=int), 2)
        state.alpha_star = np.array([3.0, 3.0])
        state.eps_star = np.tile(state.eps_star[0], (2, 1))
        resp = e_step(d.one_hot(), state, precompute_null(d), config)
        np.testing.assert_array_equal(resp, 0.5)

    def test_single_component(self, small_sim):
        d = small_sim.data
        state, config = state_for(d, np.zeros(d.n_obs, dtype=int), 1)
        resp = e_step(d.one_hot(), state, precompute_null(d), config)
        np.testing.assert_array_equal(resp, 1.0)

    def test_scalar_oracle(self):
        d = CategoricalDataset([[0]], [2])
        state, config = state_for(d, [0], 2)
        state.alpha_star = np.array([1.0, 1.0])
        state.eps_star = np.array([[2.0, 1.0], [1.0, 2.0]])
        resp = e_step(d.one_hot(), state, precompute_null(d), config)
        # oracles.responsibilities_scalar([0], [1, 1], [[[2, 1]], [[1, 2]]], [1], ...) -> 1 / (1 + e^-1)
        expected = [0.7310585786300049, 0.2689414213699951]
        np.testing.assert_allclose(resp[0], expected, rtol=0, atol=1e-12)

    def test_scalar_oracle_with_selection(self, rng):
        values = rng.integers(0, 3, (5, 3))
        d = CategoricalDataset(values, [3, 3, 3])
        state, config = state_for(d, [0, 1, 0, 1, 2], 3, variable_selection=True)
        state.c = np.array([0.9, 0.2, 0.6])
        null = precompute_null(d)
        resp = e_step(d.one_hot(), state, null, config)
        log_phi0 = [np.log(v).tolist() for v in null.phi0]
        eps = [[state.eps_star_for(k, i).tolist() for i in range(3)] for k in range(3)]
        for n in range(5):
            ref = oracles.responsibilities_scalar(values[n].tolist(), state.alpha_star.tolist(), eps, state.c.tolist(), log_phi0)
            np.testing.assert_allclose(resp[n], ref, rtol=0, atol=1e-12)

    def test_rows_normalised(self, small_sim):
        d = small_sim.data
        config = ModelConfig(k_max=6)
        state = initial_state(d, init_kmodes(d, 6, 0), config)
        resp = e_step(d.one_hot(), state, precompute_null(d), config)
        np.testing.assert_allclose(resp.sum(axis=1), 1.0, rtol=0, atol=1e-9)
        assert np.all(resp >= 0)

    def test_non_finite(self, small_sim):
        d = small_sim.data
        state, config = state_for(d, np.zeros(d.n_obs, dtype=int), 2)
        state.alpha_star = np.array([np.nan, 1.0])
        with pytest.raises(NumericalError) as info:
            e_step(d.one_hot(), state, precompute_null(d), config, iteration=7)
        assert info.value.iteration == 7


class TestMSteps:
    def test_pi_direct(self):
        resp = np.zeros((100, 3))
        resp[:, 0] = 1.0
        alpha = m_step_pi(resp, ModelConfig(alpha0=0.05))
        np.testing.assert_allclose(alpha, [100.05, 0.05, 0.05])

    def test_pi_total(self, rng):
        resp = rng.dirichlet(np.ones(7), size=40)
        alpha = m_step_pi(resp, ModelConfig(alpha0=0.3))
        assert abs(alpha.sum() - (7 * 0.3 + 40)) < 1e-10

    def test_phi_deselected_variable_is_prior(self, rng):
        values = rng.integers(0, 3, (20, 2))
        d = CategoricalDataset(values, [3, 3])
        resp = rng.dirichlet(np.ones(4), size=20)
        eps = m_step_phi(d.one_hot(), resp, np.array([1.0, 0.0]), d.categories)
        np.testing.assert_array_equal(eps[:, 3:], 1 / 3)

    def test_phi_hard_counts(self, rng):
        values = rng.integers(0, 2, (30, 4))
        labels = rng.integers(0, 3, 30)
        d = CategoricalDataset(values, [2] * 4)
        resp = np.eye(3)[labels]
        eps = m_step_phi(d.one_hot(), resp, np.ones(4), d.categories)
        for k in range(3):
            for j in range(4):
                counts = np.bincount(values[labels == k, j], minlength=2)
                np.testing.assert_allclose(eps[k, 2 * j:2 * j + 2] - 0.5, counts)

    def test_phi_mass_identity_bruteforce(self, rng):
        values = rng.integers(0, 3, (20, 3))
        cats = [3, 3, 3]
        d = CategoricalDataset(values, cats)
        resp = rng.dirichlet(np.ones(4), size=20)
        c = rng.random(3)
        eps = m_step_phi(d.one_hot(), resp, c, d.categories)
        for k in range(4):
            for i in range(3):
                n_tilde = [0.0] * 3
                for n in range(20):
                    n_tilde[values[n, i]] += resp[n, k] * c[i]
                np.testing.assert_allclose(eps[k, 3 * i:3 * i + 3] - 1 / 3, n_tilde, atol=1e-12)
                assert abs(sum(n_tilde) - c[i] * resp[:, k].sum()) < 1e-12


class TestGammaDelta:
    def test_equal_evidence_half(self):
        assert inclusion_probability(-1234.5, -1234.5) == 0.5

    def test_extreme_evidence_stable(self):
        np.testing.assert_allclose(inclusion_probability([1e4, -1e4], [0.0, 0.0]), [1.0, 0.0])

    def test_delta_posterior(self):
        a = 2.0
        c = 1.0
        post = np.array([[c + a, 1 - c + a]])
        assert post.tolist() == [[3.0, 2.0]]
        assert post[0, 0] / post[0].sum() == 0.6
        elog_d, _ = delta_expectations(post)
        # psi(3) - psi(5) = -(1/3 + 1/4)
        assert abs(elog_d[0] - (oracles.digamma(3) - oracles.digamma(5))) < 1e-14
        assert abs(elog_d[0] + 7 / 12) < 1e-14

    def test_requires_selection(self, small_sim):
        d = small_sim.data
        state, config = state_for(d, np.zeros(d.n_obs, dtype=int), 2)
        with pytest.raises(ConfigError):
            m_step_gamma_delta(d.one_hot(), state.resp, state.eps_star, precompute_null(d), state, config)

    def test_eta_bruteforce(self, rng):
        values = rng.integers(0, 2, (8, 3))
        d = CategoricalDataset(values, [2] * 3)
        state, config = state_for(d, [0, 0, 1, 1, 0, 1, 0, 1], 2, variable_selection=True)
        state.resp = rng.dirichlet(np.ones(2), size=8)
        null = precompute_null(d)
        c, le1, le2, post = m_step_gamma_delta(d.one_hot(), state.resp, state.eps_star, null, state, config)
        b1, b2 = state.delta_post[:, 0], state.delta_post[:, 1]
        for i in range(3):
            e1 = oracles.digamma(b1[i]) - oracles.digamma(b1[i] + b2[i])
            e2 = oracles.digamma(b2[i]) - oracles.digamma(b1[i] + b2[i])
            for n in range(8):
                x = values[n, i]
                for k in range(2):
                    e = state.eps_star_for(k, i)
                    e1 += state.resp[n, k] * (oracles.digamma(e[x]) - oracles.digamma(e.sum()))
                e2 += np.log(null.phi0[i][x])
            assert abs(le1[i] - e1) < 1e-10 and abs(le2[i] - e2) < 1e-10
            assert abs(c[i] - 1 / (1 + np.exp(e2 - e1))) < 1e-12
        np.testing.assert_allclose(post, np.column_stack([c + 2, 3 - c]))


class TestElbo:
    @pytest.mark.parametrize("seed", range(5))
    def test_single_component_matches_closed_form(self, seed):
        rng = np.random.default_rng(seed)
        cats = [2, 3, 4]
        values = np.column_stack([rng.integers(0, L, 12) for L in cats])
        r = fit(CategoricalDataset(values, cats), ModelConfig(k_max=1, seed=seed))
        assert abs(r.elbo - oracles.log_marginal_one_cluster(values.tolist(), cats)) < 1e-8

    def test_below_exact_evidence(self):
        values = np.array([[0, 1], [0, 1], [1, 0]])
        d = CategoricalDataset(values, [2, 2])
        evidence = oracles.log_evidence_enumerated(values.tolist(), [2, 2], 2, 0.05)
        for start in itertools.product(range(2), repeat=3):
            r = fit(d, ModelConfig(k_max=2), init_labels=np.array(start))
            assert r.elbo <= evidence + 1e-12

    @pytest.mark.parametrize("varsel", [False, True])
    def test_monte_carlo_agreement(self, varsel):
        """Sample every factor of q and average ln p(X, Z, theta) - ln q; compare to the analytic ELBO."""
        from scipy.special import gammaln

        rng = np.random.default_rng(99)
        values = rng.integers(0, 2, (6, 3))
        d = CategoricalDataset(values, [2, 2, 2])
        config = ModelConfig(k_max=2, variable_selection=varsel)
        onehot = d.one_hot()
        null = precompute_null(d)
        state = initial_state(d, [0, 0, 0, 1, 1, 1], config)
        for it in range(3):
            cavi_step(onehot, state, null, config, it)
        target = compute_elbo(onehot, state, null, config)

        S = 400_000
        K, P, n = 2, 3, 6

        def log_dir(x, a):
            return gammaln(a.sum()) - gammaln(a).sum() + ((a - 1) * np.log(x)).sum(axis=-1)

        pi = rng.dirichlet(state.alpha_star, size=S)
        lp = log_dir(pi, np.full(K, config.alpha0)) - log_dir(pi, state.alpha_star)
        phi = np.empty((S, K, P, 2))
        for k in range(K):
            for i in range(P):
                e = state.eps_star_for(k, i)
                draw = rng.dirichlet(e, size=S)
                phi[:, k, i] = draw
                lp += log_dir(draw, np.full(2, 0.5)) - log_dir(draw, e)
        if varsel:
            from scipy.stats import beta

            delta = np.column_stack([rng.beta(state.delta_post[i, 0], state.delta_post[i, 1], size=S) for i in range(P)])
            gamma = rng.random((S, P)) < state.c
            for i in range(P):
                lp += beta.logpdf(delta[:, i], config.a, config.a) - beta.logpdf(delta[:, i], *state.delta_post[i])
                lp += np.where(gamma[:, i], np.log(delta[:, i]), np.log1p(-delta[:, i]))
                lp -= np.where(gamma[:, i], np.log(state.c[i]), np.log1p(-state.c[i]))
        else:
            gamma = np.ones((S, P), dtype=bool)
        u = rng.random((S, n))
        z = (u[..., None] > np.cumsum(state.resp, axis=1)[None]).sum(-1)
        for m in range(n):
            lp += np.log(pi[np.arange(S), z[:, m]]) - np.log(state.resp[m, z[:, m]])
            for i in range(P):
                x = values[m, i]
                lp += np.where(gamma[:, i], np.log(phi[np.arange(S), z[:, m], i, x]), np.log(null.phi0[i][x]))
        se = lp.std() / np.sqrt(S)
        assert abs(lp.mean() - target) < 4 * se, (lp.mean(), target, se)


class TestFit:
    def test_trace_monotone(self, small_sim, small_varsel_sim):
        for ds, vs in ((small_sim, False), (small_varsel_sim, True)):
            for seed in range(3):
                r = fit(ds.data, ModelConfig(k_max=10, variable_selection=vs, seed=seed))
                assert np.all(np.diff(r.state.elbo_trace) > -1e-6)
                np.testing.assert_allclose(r.state.resp.sum(axis=1), 1.0, atol=1e-9)

    def test_deterministic(self, small_sim):
        cfg = ModelConfig(k_max=8, seed=5)
        a, b = fit(small_sim.data, cfg), fit(small_sim.data, cfg)
        assert np.array_equal(a.labels, b.labels)
        assert a.state.elbo_trace == b.state.elbo_trace

    def test_labels_and_counts(self, small_sim):
        r = fit(small_sim.data, ModelConfig(k_max=8, seed=1))
        assert np.array_equal(r.labels, r.state.resp.argmax(axis=1))
        assert r.n_nonempty == np.unique(r.labels).size <= 8
        aris = [adjusted_rand_index(fit(small_sim.data, ModelConfig(k_max=8, seed=s)).labels, small_sim.true_labels) for s in range(4)]
        assert np.mean(aris) > 0.6

    def test_without_selection_c_is_one(self, small_sim):
        r = fit(small_sim.data, ModelConfig(k_max=5, seed=2))
        assert np.all(r.selected_c == 1.0)
        assert "gamma" not in engine.elbo_terms(small_sim.data.one_hot(), r.state, precompute_null(small_sim.data), r.config)

    def test_frozen_c_path_bitwise_equal(self, small_sim):
        """Running the selection-aware E/M path with c pinned at 1 reproduces a plain fit exactly."""
        d = small_sim.data
        cfg = ModelConfig(k_max=6, seed=4)
        plain = fit(d, cfg)
        vs_cfg = ModelConfig(k_max=6, seed=4, variable_selection=True)
        onehot, null = d.one_hot(), precompute_null(d)
        state = initial_state(d, init_kmodes(d, 6, 4), vs_cfg)
        for it in range(plain.state.iter_count):
            cavi_step(onehot, state, null, vs_cfg, it, update_gamma=False)
        assert np.all(state.c == 1.0)
        assert np.array_equal(state.resp, plain.state.resp)
        assert np.array_equal(state.resp.argmax(axis=1), plain.labels)

    def test_row_permutation(self, small_sim):
        d = small_sim.data
        cfg = ModelConfig(k_max=6, seed=9)
        init = init_kmodes(d, 6, 9)
        base = fit(d, cfg, init_labels=init)
        order = np.random.default_rng(0).permutation(d.n_obs)
        perm = fit(d.permuted(order), cfg, init_labels=init[order])
        assert np.array_equal(perm.labels, base.labels[order])

    def test_max_iter_not_an_error(self, small_sim):
        r = fit(small_sim.data, ModelConfig(k_max=6, max_iter=2))
        assert not r.converged and r.state.iter_count == 2

    def test_k_exceeds_n(self, two_blocks):
        with pytest.raises(ConfigError):
            fit(two_blocks, ModelConfig(k_max=11))

    def test_json_payload(self, small_sim):
        payload = fit(small_sim.data, ModelConfig(k_max=4)).to_dict()
        for key in ("config", "labels", "elbo", "elbo_trace", "c", "n_nonempty", "wall_time", "converged"):
            assert key in payload


def test_expected_log_pi_monte_carlo():
    alpha = np.array([3.2, 0.7, 12.0, 1.5])
    rng = np.random.default_rng(2024)
    logs = np.log(rng.dirichlet(alpha, size=1_000_000))
    se = logs.std(axis=0) / np.sqrt(len(logs))
    assert np.all(np.abs(logs.mean(axis=0) - expected_log_pi(alpha)) < 3 * se)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.booleans())
def test_elbo_monotone_property(seed, varsel):
    rng = np.random.default_rng(seed)
    n, p = int(rng.integers(5, 40)), int(rng.integers(1, 6))
    cats = rng.integers(2, 4, p)
    values = np.column_stack([rng.integers(0, L, n) for L in cats])
    k = int(rng.integers(1, min(n, 6) + 1))
    r = fit(CategoricalDataset(values, cats), ModelConfig(k_max=k, seed=seed, variable_selection=varsel))
    assert np.all(np.diff(r.state.elbo_trace) > -1e-6)
    assert np.all((r.selected_c >= 0) & (r.selected_c <= 1))
    assert np.all(r.state.alpha_star >= 0.05)
