"""End-to-end training and prediction over labelled windows.

Ties features, bin GMMs, the HMM and the GLM baseline together, and owns
the JSON model bundle written by ``train`` and read by ``predict``.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .baseline import GlmModel, fit_poisson, predict_poisson
from .dataset import LabeledWindow, slice_features, slice_window
from .errors import ConfigError, IngestError, NumericError
from .features import SUMMARY_FIELDS, FeatureConfig, FeatureMatrix, extract_features, summary_features
from .gmm import DEFAULT_CANDIDATES, EmConfig
from .hmm import HmmSpec, read_transitions_csv
from .occupancy import (
    MODEL_STRATEGIES,
    N_BINS,
    BinModelSet,
    WindowPrediction,
    occupancy_to_bin,
    predict_strategies,
    train_bin_models,
)

log = logging.getLogger(__name__)

GLM = "glm"
ALL_STRATEGIES = MODEL_STRATEGIES + (GLM,)

BUNDLE_VERSION = 1


@dataclass(frozen=True)
class PipelineConfig:
    features: FeatureConfig = field(default_factory=FeatureConfig)
    em: EmConfig = field(default_factory=EmConfig)
    bic_candidates: tuple = DEFAULT_CANDIDATES
    n_bins: int = N_BINS
    tau: float = 1.0
    self_bias: float = 1.0
    transitions_csv: str | None = None
    strategy: str = "hmm-ppa"
    window_seconds: float = 210.0
    test_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "bic_candidates", tuple(int(c) for c in self.bic_candidates))
        if not self.bic_candidates or min(self.bic_candidates) < 1:
            raise ConfigError("bic_candidates must be a non-empty set of positive counts")
        if self.strategy not in ALL_STRATEGIES:
            raise ConfigError(f"strategy must be one of {', '.join(ALL_STRATEGIES)}")
        if not self.window_seconds > 0:
            raise ConfigError("window_seconds must be positive")
        if not 0 <= self.test_fraction < 1:
            raise ConfigError("test_fraction must be in [0, 1)")
        if self.n_bins < 1:
            raise ConfigError("n_bins must be >= 1")

    def hmm(self) -> HmmSpec:
        if self.transitions_csv:
            a = read_transitions_csv(self.transitions_csv)
            if a.shape[0] != self.n_bins:
                raise ConfigError(f"transition matrix is {a.shape[0]}x{a.shape[0]}, need {self.n_bins}")
            return HmmSpec.from_probabilities(np.full(self.n_bins, 1.0 / self.n_bins), a)
        return HmmSpec.heuristic(self.n_bins, self.tau, self.self_bias)

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["bic_candidates"] = list(self.bic_candidates)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "PipelineConfig":
        doc = dict(doc)
        try:
            if "features" in doc:
                doc["features"] = FeatureConfig(**doc["features"])
            if "em" in doc:
                doc["em"] = EmConfig(**doc["em"])
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(f"bad pipeline config: {exc}") from exc


class FeatureCache:
    """Memoises per-window features; extraction is deterministic."""

    def __init__(self, config: FeatureConfig):
        self.config = config
        self._frames = {}
        self._summary = {}
        self._pinned = {}

    def frames(self, window: LabeledWindow, size: float) -> FeatureMatrix:
        key = (id(window), float(size))
        if key not in self._frames:
            self._pinned[id(window)] = window
            loaded = window.load()
            if loaded.features is not None:
                self._frames[key] = slice_features(loaded, size)
            else:
                self._frames[key] = extract_features(slice_window(loaded, size), self.config)
        return self._frames[key]

    def summary(self, window: LabeledWindow, size: float):
        """Summary-feature row, or None for feature-only windows."""
        key = (id(window), float(size))
        if key not in self._summary:
            self._pinned[id(window)] = window
            loaded = window.load()
            if loaded.audio is None:
                self._summary[key] = None
            else:
                clip = slice_window(loaded, size)
                self._summary[key] = summary_features(clip, self.config).as_array()
        return self._summary[key]


@dataclass(frozen=True, eq=False)
class TrainedPipeline:
    config: PipelineConfig
    bin_models: BinModelSet
    hmm: HmmSpec
    glm: GlmModel | None = None

    def predict(self, frames: FeatureMatrix, summary=None, strategies=None) -> dict:
        """``{strategy: WindowPrediction}`` for one window."""
        strategies = tuple(strategies or ALL_STRATEGIES)
        model_part = [s for s in strategies if s in MODEL_STRATEGIES]
        out = predict_strategies(self.bin_models, self.hmm, frames, model_part) if model_part else {}
        if GLM in strategies and self.glm is not None and summary is not None:
            occ = float(predict_poisson(self.glm, summary))
            out[GLM] = WindowPrediction(GLM, float(np.sqrt(occ)), occ)
        return out


def train_pipeline(windows, config: PipelineConfig, cache: FeatureCache | None = None,
                   seed: int | None = None, fit_glm: bool = True) -> TrainedPipeline:
    """Train bin GMMs (and the GLM when audio is available) on ``windows``."""
    cache = cache or FeatureCache(config.features)
    size = config.window_seconds
    seed = config.seed if seed is None else seed
    by_bin = {}
    for w in windows:
        b = occupancy_to_bin(w.occupancy)
        if b >= config.n_bins:
            raise ConfigError(f"occupancy {w.occupancy} maps to bin {b} >= n_bins={config.n_bins}")
        by_bin.setdefault(b, []).append(cache.frames(w, size).frames)
    em = replace(config.em, seed=seed)
    models = train_bin_models(by_bin, config.bic_candidates, em, config.n_bins,
                              config.test_fraction, seed)

    glm = None
    if fit_glm:
        rows = [cache.summary(w, size) for w in windows]
        if all(r is not None for r in rows):
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    glm = fit_poisson(np.vstack(rows), [w.occupancy for w in windows], SUMMARY_FIELDS)
            except (ConfigError, NumericError) as exc:
                log.warning("GLM baseline not fitted: %s", exc)
    return TrainedPipeline(config, models, config.hmm(), glm)


def make_bootstrap_pipeline(config: PipelineConfig, strategies=ALL_STRATEGIES):
    """Closure for :func:`evaluation.bootstrap_leave_two_out`.

    Features are cached across iterations and window sizes.
    """
    cache = FeatureCache(config.features)
    strategies = tuple(strategies)

    def run(train, test, window_size, seed):
        cfg = replace(config, window_seconds=float(window_size))
        trained = train_pipeline(train, cfg, cache, seed=seed, fit_glm=GLM in strategies)
        preds = {}
        for w in test:
            res = trained.predict(cache.frames(w, window_size), cache.summary(w, window_size),
                                  strategies)
            for name, p in res.items():
                preds.setdefault(name, []).append(p.occupancy)
        return {k: v for k, v in preds.items() if len(v) == len(test)}

    return run


def _hmm_to_dict(hmm: HmmSpec) -> dict:
    return {"initial": np.exp(hmm.log_initial).tolist(), "transitions": hmm.transitions.tolist()}


def save_bundle(path, trained: TrainedPipeline) -> None:
    doc = {
        "version": BUNDLE_VERSION,
        "config": trained.config.to_dict(),
        "bin_models": trained.bin_models.to_dict(),
        "hmm": _hmm_to_dict(trained.hmm),
        "glm": trained.glm.to_dict() if trained.glm is not None else None,
    }
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True))


def load_bundle(path) -> TrainedPipeline:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise IngestError(f"{path}: cannot read model bundle: {exc}") from exc
    if doc.get("version") != BUNDLE_VERSION:
        raise IngestError(f"{path}: unsupported bundle version {doc.get('version')!r}")
    try:
        hmm = HmmSpec.from_probabilities(doc["hmm"]["initial"], doc["hmm"]["transitions"])
        glm = GlmModel.from_dict(doc["glm"]) if doc.get("glm") else None
        return TrainedPipeline(PipelineConfig.from_dict(doc["config"]),
                               BinModelSet.from_dict(doc["bin_models"]), hmm, glm)
    except (KeyError, TypeError) as exc:
        raise IngestError(f"{path}: malformed bundle: {exc}") from exc
