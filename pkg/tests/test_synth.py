import json

import numpy as np
import pytest
from scipy.stats import chisquare

from acoustic_occupancy.errors import ConfigError
from acoustic_occupancy.gmm import EmConfig
from acoustic_occupancy.occupancy import occupancy_to_bin
from acoustic_occupancy.pipeline import PipelineConfig, train_pipeline
from acoustic_occupancy.synth import (
    AudioScenario,
    SynthScenario,
    generate,
    generate_markov_trajectory,
    generate_scenario,
    load_scenario,
    sample_gmm,
    scenario_to_dict,
    separated_models,
)

FAST = PipelineConfig(em=EmConfig(max_iters=50, n_init=1), bic_candidates=(2,), window_seconds=150)


def bins_of(counts):
    return np.array([occupancy_to_bin(c) for c in counts])


class TestTrajectory:
    def test_tiny_tau_is_constant(self):
        b = bins_of(generate_markov_trajectory(200, 1e-3, seed=4))
        assert np.all(b == b[0])

    def test_huge_tau_is_uniform(self):
        b = bins_of(generate_markov_trajectory(10000, np.inf, seed=1))
        counts = np.bincount(b[1:], minlength=15)
        assert chisquare(counts).pvalue > 0.001

    def test_counts_are_squares(self):
        c = generate_markov_trajectory(50, 1.0, seed=0)
        assert np.all(np.isin(c, np.arange(15) ** 2))

    def test_seeded(self):
        assert np.array_equal(generate_markov_trajectory(30, 2.0, 5), generate_markov_trajectory(30, 2.0, 5))


class TestScenario:
    def test_same_seed_same_data(self):
        a, _ = generate_scenario(SynthScenario(n_windows=5, seed=3))
        b, _ = generate_scenario(SynthScenario(n_windows=5, seed=3))
        assert all(np.array_equal(x.features.frames, y.features.frames) for x, y in zip(a, b))

    def test_sample_mean_converges(self):
        model = separated_models(3, dim=2, seed=6)[2]
        X = sample_gmm(model, 10000, np.random.default_rng(0))
        mean = model.weights @ model.means
        second = model.weights @ (model.variances + model.means**2)
        se = np.sqrt((second - mean**2) / 10000)
        assert np.all(np.abs(X.mean(axis=0) - mean) < 3 * se)

    def test_invalid_trajectory(self):
        with pytest.raises(ConfigError):
            SynthScenario(trajectory=(225,))

    def test_separated_scenario_is_learnable(self):
        traj = tuple(int(b) ** 2 for b in np.arange(150) % 15)
        windows, truth = generate_scenario(SynthScenario(trajectory=traj, frames_per_window=30, seed=2))
        trained = train_pipeline(windows[::2], FAST)
        hits = [trained.predict(w.features, strategies=("gmm-mv",))["gmm-mv"].bin == b
                for w, b in zip(windows[1::2], truth.bins[1::2])]
        assert np.mean(hits) >= 0.95

    def test_shared_model_is_chance(self):
        traj = tuple(int(b) ** 2 for b in np.arange(150) % 15)
        sc = SynthScenario(trajectory=traj, shared_model=True, frames_per_window=30, seed=2)
        windows, truth = generate_scenario(sc)
        trained = train_pipeline(windows[::2], FAST)
        hits = [trained.predict(w.features, strategies=("gmm-mv",))["gmm-mv"].bin == b
                for w, b in zip(windows[1::2], truth.bins[1::2])]
        assert np.mean(hits) < 0.3


class TestAudio:
    def test_louder_with_more_people(self):
        sc = AudioScenario(trajectory=(0, 196), segment_seconds=14.0, gain_jitter=0.0)
        windows, _ = generate(sc)
        quiet, loud = (np.std(w.audio.samples) for w in windows)
        assert loud / quiet == pytest.approx(np.sqrt(197), rel=0.1)

    def test_json_round_trip(self, tmp_path):
        for sc in (AudioScenario(trajectory=(1, 4)), SynthScenario(n_windows=3)):
            path = tmp_path / "s.json"
            path.write_text(json.dumps(scenario_to_dict(sc)))
            assert load_scenario(path) == sc

    def test_bad_mode(self, tmp_path):
        path = tmp_path / "s.json"
        path.write_text('{"mode": "video"}')
        with pytest.raises(ConfigError):
            load_scenario(path)
