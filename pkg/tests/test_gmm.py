import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from acoustic_occupancy.errors import ConfigError, DimensionError, IngestError, NumericError
from acoustic_occupancy.gmm import (
    DEFAULT_CANDIDATES,
    DiagonalGmm,
    EmConfig,
    bic,
    fit_em,
    log_density,
    log_likelihood,
    select_by_bic,
)


def random_model(rng, M, D):
    return DiagonalGmm(rng.dirichlet(np.ones(M)), rng.normal(size=(M, D)),
                       rng.uniform(0.3, 2.0, size=(M, D)))


def linear_density(model, x):
    """Direct linear-domain sum of weighted Gaussian products."""
    total = 0.0
    for w, mu, var in zip(model.weights, model.means, model.variances):
        total += w * np.prod(norm.pdf(x, loc=mu, scale=np.sqrt(var)))
    return total


class TestDensity:
    def test_standard_normal_at_mode(self):
        m = DiagonalGmm([1.0], [[0.0]], [[1.0]])
        assert log_density(m, [0.0]) == pytest.approx(-0.9189385332, abs=1e-9)

    def test_identical_components_collapse(self, rng):
        mu, var = rng.normal(size=3), rng.uniform(0.5, 2, size=3)
        one = DiagonalGmm([1.0], [mu], [var])
        two = DiagonalGmm([0.5, 0.5], [mu, mu], [var, var])
        x = rng.normal(size=3)
        assert log_density(two, x) == pytest.approx(log_density(one, x), abs=1e-12)

    def test_matches_linear_domain(self, backend, rng):
        model = random_model(rng, 3, 4)
        for x in rng.normal(size=(50, 4)):
            assert log_density(model, x) == pytest.approx(math.log(linear_density(model, x)), abs=1e-9)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 5), st.integers(1, 6), st.integers(0, 2**32 - 1))
    def test_property_linear_domain(self, M, D, seed):
        rng = np.random.default_rng(seed)
        model = random_model(rng, M, D)
        x = rng.normal(size=D)
        assert log_density(model, x) == pytest.approx(math.log(linear_density(model, x)), abs=1e-9)

    def test_log_likelihood_additive(self, rng):
        model = random_model(rng, 2, 3)
        X = rng.normal(size=(100, 3))
        assert log_likelihood(model, X[:1]) == pytest.approx(log_density(model, X[0]), abs=1e-12)
        assert log_likelihood(model, np.vstack([X, X])) == pytest.approx(2 * log_likelihood(model, X),
                                                                         rel=1e-12)
        loop = sum(log_density(model, x) for x in X)
        assert log_likelihood(model, X) == pytest.approx(loop, abs=1e-9)

    def test_dimension_mismatch(self, rng):
        with pytest.raises(DimensionError):
            log_likelihood(random_model(rng, 2, 3), np.zeros((4, 2)))

    def test_parameter_count(self, rng):
        assert random_model(rng, 3, 60).n_parameters == 2 + 2 * 3 * 60

    @pytest.mark.parametrize("kwargs", [
        dict(weights=[0.5, 0.6], means=[[0.0], [1.0]], variances=[[1.0], [1.0]]),
        dict(weights=[1.0], means=[[0.0]], variances=[[0.0]]),
        dict(weights=[1.0], means=[[0.0, 1.0]], variances=[[1.0]]),
    ])
    def test_invalid_models(self, kwargs):
        with pytest.raises(ConfigError):
            DiagonalGmm(**kwargs)


class TestSerialization:
    def test_round_trip_json(self, rng):
        model = random_model(rng, 4, 5)
        back = DiagonalGmm.from_dict(json.loads(json.dumps(model.to_dict())))
        X = rng.normal(size=(100, 5)) * 3
        np.testing.assert_allclose(back.score_frames(X), model.score_frames(X), rtol=0, atol=1e-12)

    def test_wrong_version(self, rng):
        doc = random_model(rng, 1, 1).to_dict()
        doc["version"] = 99
        with pytest.raises(IngestError):
            DiagonalGmm.from_dict(doc)


def two_gaussians(seed, n=2000):
    rng = np.random.default_rng(seed)
    return np.concatenate([rng.normal(0, 1, n // 2), rng.normal(10, 1, n // 2)])[:, None]


class TestEm:
    def test_two_component_recovery(self, backend):
        fit = fit_em(two_gaussians(1), 2, EmConfig(seed=3))
        order = np.argsort(fit.model.means[:, 0])
        np.testing.assert_allclose(fit.model.means[order, 0], [0, 10], atol=0.2)
        np.testing.assert_allclose(fit.model.weights[order], [0.5, 0.5], atol=0.1)
        assert fit.converged

    def test_single_component_closed_form(self, rng):
        X = rng.normal(size=(300, 3)) * [1, 2, 3] + [4, 5, 6]
        fit = fit_em(X, 1, EmConfig(n_init=1))
        np.testing.assert_allclose(fit.model.means[0], X.mean(axis=0), rtol=1e-12)
        np.testing.assert_allclose(fit.model.variances[0], X.var(axis=0), rtol=1e-10)

    def test_identical_data_floors_variance(self):
        fit = fit_em(np.full((50, 2), 3.0), 3, EmConfig(variance_floor=1e-4, n_init=2))
        assert np.all(fit.model.variances >= 1e-4)
        assert np.all(np.isfinite(fit.model.means))

    def test_too_few_frames(self):
        with pytest.raises(ConfigError):
            fit_em(np.zeros((2, 1)), 3)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(1, 5), st.integers(1, 4), st.integers(0, 2**32 - 1))
    def test_monotone_and_floored(self, M, D, seed):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(120, D)) + rng.integers(0, 3, size=(120, 1)) * 4.0
        cfg = EmConfig(max_iters=60, n_init=1, seed=seed, variance_floor=1e-3)
        fit = fit_em(X, M, cfg)
        h = np.array(fit.history)
        if fit.n_rescues == 0:
            assert np.all(np.diff(h) >= -1e-8 * np.maximum(1.0, np.abs(h[:-1])))
        assert np.all(fit.model.variances >= 1e-3)
        assert fit.model.weights.sum() == pytest.approx(1.0, abs=1e-12)

    def test_seed_determinism(self, rng):
        X = rng.normal(size=(200, 2))
        a, b = fit_em(X, 3, EmConfig(seed=9)), fit_em(X, 3, EmConfig(seed=9))
        assert np.array_equal(a.model.means, b.model.means)
        assert a.history == b.history


def three_cluster(seed, n=3000):
    rng = np.random.default_rng(seed)
    centres = np.array([[0.0, 0.0], [12.0, 0.0], [0.0, 12.0]])
    labels = rng.integers(0, 3, size=n)
    return centres[labels] + rng.normal(size=(n, 2))


class TestBic:
    def test_default_candidates(self):
        assert set(DEFAULT_CANDIDATES) == {2, 3, 4, 5, 6, 7, 8, 16, 32}

    def test_formula(self, rng):
        model = random_model(rng, 3, 2)
        X = rng.normal(size=(40, 2))
        k = 2 + 2 * 3 * 2
        assert bic(model, X) == pytest.approx(-2 * log_likelihood(model, X) + k * math.log(40), rel=1e-12)

    def test_singleton_candidate(self, rng):
        X = rng.normal(size=(100, 2))
        sel = select_by_bic(X[:80], X[80:], [2], EmConfig(n_init=1))
        assert sel.n_components == 2

    def test_picks_three(self):
        X = three_cluster(4)
        sel = select_by_bic(X[:2400], X[2400:], [2, 3, 4, 5], EmConfig(n_init=2, seed=4))
        assert sel.n_components == 3
        assert min(sel.scores, key=sel.scores.get) == 3

    def test_infeasible_candidates_recorded(self, rng):
        X = rng.normal(size=(5, 1))
        sel = select_by_bic(X, X, [2, 8, 16], EmConfig(n_init=1))
        assert sel.n_components == 2
        assert set(sel.failures) == {8, 16}

    def test_all_fail_names_candidates(self, rng):
        X = rng.normal(size=(3, 1))
        with pytest.raises(NumericError, match="M=8"):
            select_by_bic(X, X, [8, 16])
