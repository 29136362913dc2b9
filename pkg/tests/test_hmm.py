import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from acoustic_occupancy.errors import ConfigError, DimensionError, IngestError
from acoustic_occupancy.hmm import (
    HmmSpec,
    forward_log_prob,
    heuristic_transitions,
    read_transitions_csv,
    state_posteriors,
    viterbi,
    write_transitions_csv,
)


def random_instance(rng, n, T):
    spec = HmmSpec.from_probabilities(rng.dirichlet(np.ones(n)), rng.dirichlet(np.ones(n), size=n))
    return spec, rng.normal(scale=2.0, size=(T, n))


def path_log_score(spec, ll, path):
    s = spec.log_initial[path[0]] + ll[0, path[0]]
    for t in range(1, len(path)):
        s += spec.log_transitions[path[t - 1], path[t]] + ll[t, path[t]]
    return s


def brute_force(spec, ll):
    """Enumerate every state sequence: best path, total probability, posteriors."""
    T, n = ll.shape
    pi = np.exp(spec.log_initial)
    a = np.exp(spec.log_transitions)
    b = np.exp(ll)
    best, best_path, total = -np.inf, None, 0.0
    post = np.zeros((T, n))
    for path in itertools.product(range(n), repeat=T):
        score = path_log_score(spec, ll, path)
        if score > best:
            best, best_path = score, path
        # P(O|Q) P(Q) as a literal product of emissions, start and transitions
        p_obs = math.prod(b[t, path[t]] for t in range(T))
        p_path = pi[path[0]] * math.prod(a[path[t - 1], path[t]] for t in range(1, T))
        total += p_obs * p_path
        for t, q in enumerate(path):
            post[t, q] += p_obs * p_path
    return np.array(best_path), best, math.log(total), post / total


class TestHeuristicTransitions:
    def test_infinite_decay_is_uniform(self):
        np.testing.assert_allclose(heuristic_transitions(15, np.inf, 0.0), np.full((15, 15), 1 / 15),
                                   atol=1e-15)

    def test_two_state_hand_value(self):
        # rows proportional to [1, e^-1]
        e = math.exp(-1.0)
        a = heuristic_transitions(2, 1.0, 0.0)
        np.testing.assert_allclose(a, [[1 / (1 + e), e / (1 + e)], [e / (1 + e), 1 / (1 + e)]],
                                   rtol=1e-12)
        assert a[0, 0] == pytest.approx(0.7311, abs=5e-5)
        assert a[0, 1] == pytest.approx(0.2689, abs=5e-5)

    def test_band_symmetry_before_normalisation(self):
        n, tau, bias = 9, 1.7, 0.5
        a = heuristic_transitions(n, tau, bias)
        idx = np.arange(n)
        raw = np.exp(-np.abs(idx[:, None] - idx[None, :]) / tau)
        raw[idx, idx] *= 1 + bias
        np.testing.assert_allclose(raw, raw.T)
        np.testing.assert_allclose(a, raw / raw.sum(axis=1, keepdims=True), rtol=1e-14)

    @given(st.integers(1, 20), st.floats(0.01, 100.0), st.floats(0.0, 10.0))
    def test_rows_stochastic(self, n, tau, bias):
        a = heuristic_transitions(n, tau, bias)
        assert np.all(a >= 0)
        np.testing.assert_allclose(a.sum(axis=1), 1.0, atol=1e-12)

    @pytest.mark.parametrize("tau", [0.0, -1.0])
    def test_rejects_non_positive_tau(self, tau):
        with pytest.raises(ConfigError):
            heuristic_transitions(5, tau)

    def test_default_spec_has_uniform_start(self):
        spec = HmmSpec.heuristic()
        assert spec.n_states == 15
        np.testing.assert_allclose(np.exp(spec.log_initial), 1 / 15, rtol=1e-12)
        np.testing.assert_allclose(spec.transitions.sum(axis=1), 1.0, atol=1e-9)


class TestViterbi:
    def test_single_frame(self, backend, rng):
        spec, ll = random_instance(rng, 5, 1)
        path = viterbi(spec, ll)
        assert path.states.tolist() == [int(np.argmax(spec.log_initial + ll[0]))]
        assert path.log_score == pytest.approx(np.max(spec.log_initial + ll[0]), abs=1e-12)

    def test_absorbing_chain_stays_put(self, backend, rng):
        n, T = 4, 12
        spec = HmmSpec.from_probabilities(rng.dirichlet(np.ones(n)), np.eye(n))
        ll = rng.normal(size=(T, n))
        path = viterbi(spec, ll)
        best = int(np.argmax(spec.log_initial + ll.sum(axis=0)))
        assert path.states.tolist() == [best] * T

    def test_matches_enumeration(self, backend):
        rng = np.random.default_rng(2024)
        for _ in range(40):
            n, T = int(rng.integers(1, 5)), int(rng.integers(1, 7))
            spec, ll = random_instance(rng, n, T)
            best_path, best, _, _ = brute_force(spec, ll)
            got = viterbi(spec, ll)
            np.testing.assert_array_equal(got.states, best_path)
            assert got.log_score == pytest.approx(best, abs=1e-10)

    def test_dimension_errors(self, rng):
        spec, ll = random_instance(rng, 3, 4)
        with pytest.raises(DimensionError):
            viterbi(spec, ll[:, :2])
        with pytest.raises(DimensionError):
            viterbi(spec, np.empty((0, 3)))


class TestForward:
    def test_matches_literal_sum_two_states(self, backend):
        rng = np.random.default_rng(5)
        spec, ll = random_instance(rng, 2, 2)
        *_, log_total, _ = brute_force(spec, ll)
        assert forward_log_prob(spec, ll) == pytest.approx(log_total, abs=1e-10)

    def test_single_state_chain(self, backend, rng):
        spec = HmmSpec.from_probabilities([1.0], [[1.0]])
        ll = rng.normal(size=(9, 1))
        assert forward_log_prob(spec, ll) == pytest.approx(ll.sum(), abs=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 5), st.integers(1, 30), st.integers(0, 2**32 - 1))
    def test_dominates_viterbi(self, n, T, seed):
        spec, ll = random_instance(np.random.default_rng(seed), n, T)
        assert forward_log_prob(spec, ll) >= viterbi(spec, ll).log_score - 1e-9

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 5), st.integers(1, 20), st.floats(-50, 50), st.integers(0, 2**32 - 1))
    def test_emission_shift(self, n, T, c, seed):
        spec, ll = random_instance(np.random.default_rng(seed), n, T)
        assert forward_log_prob(spec, ll + c) == pytest.approx(forward_log_prob(spec, ll) + T * c,
                                                                abs=1e-8)
        np.testing.assert_array_equal(viterbi(spec, ll + c).states, viterbi(spec, ll).states)
        np.testing.assert_allclose(state_posteriors(spec, ll + c), state_posteriors(spec, ll),
                                   atol=1e-9)


class TestPosteriors:
    def test_single_frame(self, backend, rng):
        spec, ll = random_instance(rng, 4, 1)
        expected = np.exp(spec.log_initial + ll[0])
        np.testing.assert_allclose(state_posteriors(spec, ll)[0], expected / expected.sum(),
                                   atol=1e-12)

    def test_symmetric_chain_is_uniform(self, backend):
        n = 6
        spec = HmmSpec.from_probabilities(np.full(n, 1 / n), np.full((n, n), 1 / n))
        np.testing.assert_allclose(state_posteriors(spec, np.full((10, n), -3.0)), 1 / n, atol=1e-12)

    def test_matches_enumeration(self, backend):
        rng = np.random.default_rng(99)
        for _ in range(30):
            n, T = int(rng.integers(1, 5)), int(rng.integers(1, 7))
            spec, ll = random_instance(rng, n, T)
            *_, post = brute_force(spec, ll)
            np.testing.assert_allclose(state_posteriors(spec, ll), post, atol=1e-9)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 15), st.integers(1, 50), st.integers(0, 2**32 - 1))
    def test_rows_are_distributions(self, n, T, seed):
        spec, ll = random_instance(np.random.default_rng(seed), n, T)
        post = state_posteriors(spec, ll * 20)
        assert np.all(post >= 0) and np.all(post <= 1 + 1e-12)
        np.testing.assert_allclose(post.sum(axis=1), 1.0, atol=1e-9)


class TestSpecValidation:
    def test_rejects_non_stochastic_rows(self):
        with pytest.raises(ConfigError):
            HmmSpec(np.log([0.5, 0.5]), np.log([[0.5, 0.4], [0.5, 0.5]]))

    def test_floor_keeps_transitions_finite(self):
        spec = HmmSpec.from_probabilities([0.5, 0.5], [[1.0, 0.0], [0.0, 1.0]])
        assert np.all(np.isfinite(spec.log_transitions))


def test_transition_csv_round_trip(tmp_path):
    a = heuristic_transitions(15, 2.0, 1.0)
    path = tmp_path / "a.csv"
    write_transitions_csv(path, a)
    np.testing.assert_array_equal(read_transitions_csv(path), a)


def test_transition_csv_rejects_bad_rows(tmp_path):
    path = tmp_path / "a.csv"
    path.write_text("0.5,0.2\n0.5,0.5\n")
    with pytest.raises(IngestError):
        read_transitions_csv(path)
