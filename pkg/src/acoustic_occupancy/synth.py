"""Synthetic datasets with known ground truth.

Two generators stand in for real recordings:

* feature level: frames are drawn straight from a per-bin generative GMM,
  bypassing the DSP front end;
* audio level: low-pass filtered noise whose loudness grows with occupancy,
  which exercises the full MFCC path and the summary-feature GLM.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .dataset import INTERVAL_SECONDS, LabeledWindow
from .errors import ConfigError, IngestError
from .features import DEFAULT_SAMPLE_RATE, AudioClip, FeatureMatrix
from .gmm import DiagonalGmm
from .hmm import heuristic_transitions
from .occupancy import N_BINS, occupancy_to_bin

EPOCH = datetime(2017, 4, 1, 10, 15)


def generate_markov_trajectory(n_steps: int, tau: float, seed: int = 0, n_bins: int = N_BINS,
                               self_bias: float = 0.0) -> np.ndarray:
    """Occupancy counts whose bins follow the banded exponential-decay chain.

    The first bin is uniform; each count is the representative ``bin**2``.
    """
    if n_steps < 1:
        raise ConfigError("n_steps must be >= 1")
    a = heuristic_transitions(n_bins, tau, self_bias)
    cum = np.cumsum(a, axis=1)
    rng = np.random.default_rng(seed)
    bins = np.empty(n_steps, dtype=np.int64)
    bins[0] = rng.integers(n_bins)
    u = rng.random(n_steps)
    for t in range(1, n_steps):
        row = cum[bins[t - 1]]
        bins[t] = min(int(np.searchsorted(row, u[t] * row[-1], side="right")), n_bins - 1)
    return bins**2


def separated_models(n_bins: int = N_BINS, dim: int = 4, separation: float = 10.0,
                     sigma: float = 1.0, n_components: int = 2, seed: int = 0,
                     shared: bool = False) -> list:
    """Per-bin generative GMMs whose centres sit ``separation * sigma`` apart.

    Bin centres lie on a line through the origin along a random unit
    direction. Within a bin, component means scatter by ``sigma`` around the
    centre. ``shared=True`` returns the bin-0 model for every bin.
    """
    rng = np.random.default_rng(seed)
    direction = rng.normal(size=dim)
    direction /= np.linalg.norm(direction)
    models = []
    for b in range(n_bins):
        centre = b * separation * sigma * direction
        means = centre + sigma * rng.normal(size=(n_components, dim)) * 0.5
        variances = sigma**2 * rng.uniform(0.5, 1.5, size=(n_components, dim))
        weights = rng.dirichlet(np.full(n_components, 5.0))
        models.append(DiagonalGmm(weights, means, variances))
    if shared:
        models = [models[0]] * n_bins
    return models


def sample_gmm(model: DiagonalGmm, n: int, rng: np.random.Generator) -> np.ndarray:
    comp = rng.choice(model.n_components, size=n, p=model.weights)
    noise = rng.standard_normal((n, model.dim))
    return model.means[comp] + noise * np.sqrt(model.variances[comp])


@dataclass(frozen=True)
class SynthScenario:
    """Recipe for a feature-level synthetic dataset.

    ``trajectory`` lists the occupancy count of each window; when empty, a
    Markov trajectory of ``n_windows`` steps with decay ``tau`` is drawn.
    """

    n_bins: int = N_BINS
    dim: int = 4
    separation: float = 10.0
    sigma: float = 1.0
    n_components: int = 2
    shared_model: bool = False
    trajectory: tuple = ()
    n_windows: int = 200
    tau: float = 1.0
    frames_per_window: int = 60
    frame_rate: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.n_bins < 1 or self.dim < 1 or self.n_components < 1:
            raise ConfigError("n_bins, dim and n_components must be >= 1")
        if self.frames_per_window < 1 or not self.frame_rate > 0:
            raise ConfigError("frames_per_window must be >= 1 and frame_rate > 0")
        for c in self.trajectory:
            if c < 0 or occupancy_to_bin(c) >= self.n_bins:
                raise ConfigError(f"trajectory count {c} falls outside the {self.n_bins} bins")

    def counts(self) -> np.ndarray:
        if self.trajectory:
            return np.asarray(self.trajectory, dtype=np.int64)
        return generate_markov_trajectory(self.n_windows, self.tau, self.seed, self.n_bins)


@dataclass(frozen=True, eq=False)
class SynthTruth:
    """Generating parameters kept for oracle comparisons."""

    models: list
    counts: np.ndarray
    bins: np.ndarray
    extra: dict = field(default_factory=dict)


def _window_seeds(seed: int, n: int):
    return np.random.SeedSequence([seed, 0x5EED]).spawn(n)


def generate_scenario(scenario: SynthScenario):
    """Draw feature-level labelled windows.

    Returns
    -------
    windows : list of LabeledWindow
        One per trajectory step, each carrying a FeatureMatrix payload of
        ``frames_per_window`` frames sampled from the true bin's model.
    truth : SynthTruth
    """
    models = separated_models(scenario.n_bins, scenario.dim, scenario.separation,
                              scenario.sigma, scenario.n_components, scenario.seed,
                              scenario.shared_model)
    counts = scenario.counts()
    bins = np.array([occupancy_to_bin(c) for c in counts], dtype=np.int64)
    windows = []
    for k, (count, b, child) in enumerate(zip(counts, bins, _window_seeds(scenario.seed, len(counts)))):
        frames = sample_gmm(models[b], scenario.frames_per_window, np.random.default_rng(child))
        windows.append(LabeledWindow(
            EPOCH + timedelta(seconds=INTERVAL_SECONDS * k), int(count),
            features=FeatureMatrix(frames, scenario.frame_rate),
        ))
    return windows, SynthTruth(models, counts, bins)


@dataclass(frozen=True)
class AudioScenario:
    """Recipe for an audio-level dataset of loudness-scaled filtered noise.

    Each window holds ``segment_seconds`` of noise with RMS level
    ``base_rms * sqrt(1 + count)``, multiplied by a per-window log-normal
    jitter and slowly modulated within the window.
    """

    trajectory: tuple = ()
    n_windows: int = 60
    tau: float = 1.0
    n_bins: int = N_BINS
    segment_seconds: float = 30.0
    sample_rate: float = DEFAULT_SAMPLE_RATE
    base_rms: float = 0.004
    gain_jitter: float = 0.15
    lowpass: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if not self.segment_seconds > 0 or not self.sample_rate > 0:
            raise ConfigError("segment_seconds and sample_rate must be positive")
        if not 0 <= self.lowpass < 1:
            raise ConfigError("lowpass pole must be in [0, 1)")

    def counts(self) -> np.ndarray:
        if self.trajectory:
            return np.asarray(self.trajectory, dtype=np.int64)
        return generate_markov_trajectory(self.n_windows, self.tau, self.seed, self.n_bins)


def synth_noise_clip(count: int, scenario: AudioScenario, rng: np.random.Generator) -> AudioClip:
    n = int(round(scenario.segment_seconds * scenario.sample_rate))
    noise = lfilter([1.0 - scenario.lowpass], [1.0, -scenario.lowpass], rng.standard_normal(n))
    noise /= np.sqrt(np.mean(noise**2))
    t = np.arange(n) / scenario.sample_rate
    swell = 1.0 + 0.1 * np.sin(2 * np.pi * t / 7.0 + rng.uniform(0, 2 * np.pi))
    gain = scenario.base_rms * math.sqrt(1.0 + count) * rng.lognormal(0.0, scenario.gain_jitter)
    return AudioClip(np.clip(gain * swell * noise, -1.0, 1.0), scenario.sample_rate)


def generate_audio_scenario(scenario: AudioScenario):
    counts = scenario.counts()
    bins = np.array([occupancy_to_bin(c) for c in counts], dtype=np.int64)
    windows = []
    for k, (count, child) in enumerate(zip(counts, _window_seeds(scenario.seed, len(counts)))):
        clip = synth_noise_clip(int(count), scenario, np.random.default_rng(child))
        windows.append(LabeledWindow(EPOCH + timedelta(seconds=INTERVAL_SECONDS * k), int(count),
                                     audio=clip))
    return windows, SynthTruth([], counts, bins)


def scenario_from_dict(doc: dict):
    """Build a scenario from its JSON form; ``mode`` selects the generator."""
    doc = dict(doc)
    mode = doc.pop("mode", "features")
    if "trajectory" in doc:
        doc["trajectory"] = tuple(doc["trajectory"])
    cls = {"features": SynthScenario, "audio": AudioScenario}.get(mode)
    if cls is None:
        raise ConfigError(f"unknown scenario mode {mode!r}")
    try:
        return cls(**doc)
    except TypeError as exc:
        raise ConfigError(f"bad scenario field: {exc}") from exc


def scenario_to_dict(scenario) -> dict:
    doc = asdict(scenario)
    doc["trajectory"] = list(doc["trajectory"])
    doc["mode"] = "audio" if isinstance(scenario, AudioScenario) else "features"
    return doc


def load_scenario(path):
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise IngestError(f"{path}: cannot read scenario JSON: {exc}") from exc
    return scenario_from_dict(doc)


def generate(scenario):
    """Dispatch to the feature- or audio-level generator."""
    if isinstance(scenario, AudioScenario):
        return generate_audio_scenario(scenario)
    return generate_scenario(scenario)
