"""Occupancy bins, bin-dependent GMMs and window-level prediction.

Occupancy counts are binned by integer square root; each bin gets its own
GMM. A window is scored frame by frame against every bin model and the
resulting log-likelihood grid is reduced to a single bin estimate either by
posterior aggregation (PPA) or majority voting (MV), optionally after HMM
smoothing. The estimate is squared to return to head-count units.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy.special import softmax

from .errors import ConfigError, DimensionError, IngestError, NumericError
from .gmm import DEFAULT_CANDIDATES, DiagonalGmm, EmConfig, select_by_bic, _as_frames
from .hmm import HmmSpec, StatePath, state_posteriors, viterbi

log = logging.getLogger(__name__)

N_BINS = 15
MAX_OCCUPANCY = 221

GMM_PPA = "gmm-ppa"
GMM_MV = "gmm-mv"
HMM_PPA = "hmm-ppa"
HMM_MV = "hmm-mv"
MODEL_STRATEGIES = (GMM_MV, GMM_PPA, HMM_MV, HMM_PPA)

BUNDLE_FORMAT_VERSION = 1


def occupancy_to_bin(count) -> int:
    """``floor(sqrt(count))`` for a non-negative integer head count."""
    if count < 0:
        raise ConfigError(f"occupancy must be non-negative, got {count}")
    return math.isqrt(int(count))


def bin_to_occupancy(bin_value) -> float:
    """Square a (possibly fractional) bin back into head-count units."""
    return float(bin_value) ** 2


def nearest_bin(occupancy: float, n_bins: int = N_BINS) -> int:
    """Closest bin to a real-valued occupancy estimate, clipped to range."""
    b = int(np.rint(np.sqrt(max(float(occupancy), 0.0))))
    return min(max(b, 0), n_bins - 1)


@dataclass(frozen=True, eq=False)
class BinModelSet:
    """One GMM per occupancy bin, index ``i`` modelling bin ``i``.

    ``fallback[i]`` is true when bin ``i`` had no usable training frames and
    borrows the model of bin ``source_bin[i]``.
    """

    models: tuple
    fallback: tuple = ()
    source_bin: tuple = ()
    bic_scores: tuple = ()
    max_occupancy: int = MAX_OCCUPANCY

    def __post_init__(self):
        models = tuple(self.models)
        if not models:
            raise ConfigError("a BinModelSet needs at least one model")
        if len({m.dim for m in models}) != 1:
            raise DimensionError("all bin models must share the feature dimension")
        n = len(models)
        object.__setattr__(self, "models", models)
        object.__setattr__(self, "fallback", tuple(self.fallback) or (False,) * n)
        object.__setattr__(self, "source_bin", tuple(self.source_bin) or tuple(range(n)))
        object.__setattr__(self, "bic_scores", tuple(self.bic_scores) or ({},) * n)
        if not len(self.fallback) == len(self.source_bin) == len(self.bic_scores) == n:
            raise ConfigError("bin metadata length does not match the number of models")

    @property
    def n_bins(self) -> int:
        return len(self.models)

    @property
    def dim(self) -> int:
        return self.models[0].dim

    def __getitem__(self, i) -> DiagonalGmm:
        return self.models[i]

    def __len__(self):
        return len(self.models)

    def to_dict(self) -> dict:
        return {
            "version": BUNDLE_FORMAT_VERSION,
            "n_bins": self.n_bins,
            "occupancy_range": [0, self.max_occupancy],
            "bins": [
                {
                    "bin": i,
                    "fallback": bool(self.fallback[i]),
                    "source_bin": int(self.source_bin[i]),
                    "bic": {str(k): float(v) for k, v in self.bic_scores[i].items()},
                    "gmm": m.to_dict(),
                }
                for i, m in enumerate(self.models)
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "BinModelSet":
        if doc.get("version") != BUNDLE_FORMAT_VERSION:
            raise IngestError(f"unsupported bin-model bundle version {doc.get('version')!r}")
        try:
            bins = sorted(doc["bins"], key=lambda b: b["bin"])
            if [b["bin"] for b in bins] != list(range(doc["n_bins"])):
                raise IngestError("bundle bins are not numbered 0..n_bins-1")
            return cls(
                models=[DiagonalGmm.from_dict(b["gmm"]) for b in bins],
                fallback=[bool(b["fallback"]) for b in bins],
                source_bin=[int(b["source_bin"]) for b in bins],
                bic_scores=[{int(k): v for k, v in b.get("bic", {}).items()} for b in bins],
                max_occupancy=int(doc.get("occupancy_range", [0, MAX_OCCUPANCY])[1]),
            )
        except (KeyError, TypeError) as exc:
            raise IngestError(f"malformed bin-model bundle: {exc}") from exc


def split_frames(X: np.ndarray, test_fraction: float, rng: np.random.Generator):
    """Random train/test split of frames.

    When either side would be empty (very small bins) all frames are used
    for both.
    """
    T = X.shape[0]
    n_test = int(round(T * test_fraction))
    if n_test < 1 or T - n_test < 1:
        return X, X
    perm = rng.permutation(T)
    return X[np.sort(perm[n_test:])], X[np.sort(perm[:n_test])]


def _stack(value) -> np.ndarray:
    if isinstance(value, (list, tuple)):
        parts = [_as_frames(v) for v in value]
        return np.vstack(parts) if parts else np.empty((0, 0))
    return _as_frames(value)


def train_bin_models(features_by_bin: Mapping, candidates=DEFAULT_CANDIDATES,
                     em: EmConfig = EmConfig(), n_bins: int = N_BINS,
                     test_fraction: float = 0.2, seed: int = 0,
                     max_occupancy: int = MAX_OCCUPANCY) -> BinModelSet:
    """Train one BIC-selected GMM per bin.

    Parameters
    ----------
    features_by_bin : mapping
        ``bin -> frames`` where frames is a T x D array, a FeatureMatrix, or
        a list of either (stacked).
    candidates : iterable of int
        Component counts passed to :func:`select_by_bic`.
    test_fraction : float
        Share of each bin's frames held out for BIC scoring.

    Bins without frames, or whose every candidate fit fails, reuse the model
    of the nearest populated bin (the lower one on ties).
    """
    for b in features_by_bin:
        if not 0 <= int(b) < n_bins:
            raise ConfigError(f"bin {b} outside [0, {n_bins - 1}]")

    fitted, scores, attempted = {}, {}, 0
    for b in range(n_bins):
        X = features_by_bin.get(b)
        if X is None:
            continue
        X = _stack(X)
        if X.size == 0:
            continue
        attempted += 1
        rng = np.random.default_rng(np.random.SeedSequence([seed, b]))
        train, test = split_frames(X, test_fraction, rng)
        bin_em = EmConfig(em.max_iters, em.tol, em.variance_floor, em.n_init,
                          int(np.random.SeedSequence([em.seed, b]).generate_state(1)[0]))
        try:
            sel = select_by_bic(train, test, candidates, bin_em)
        except NumericError as exc:
            log.warning("bin %d: %s; using fallback model", b, exc)
            continue
        fitted[b] = sel.model
        scores[b] = sel.scores
        log.info("bin %d: %d frames, BIC chose M=%d", b, X.shape[0], sel.n_components)

    if not attempted:
        raise ConfigError("no bin has training frames")
    if not fitted:
        raise NumericError(f"GMM fitting failed in all {attempted} populated bins")
    populated = np.array(sorted(fitted))
    models, fallback, source, bic = [], [], [], []
    for b in range(n_bins):
        src = b if b in fitted else int(populated[np.argmin(np.abs(populated - b))])
        if src != b:
            log.warning("bin %d has no usable training data; borrowing bin %d", b, src)
        models.append(fitted[src])
        fallback.append(src != b)
        source.append(src)
        bic.append(scores.get(b, {}))
    return BinModelSet(models, fallback, source, bic, max_occupancy)


def score_grid(models: BinModelSet, X) -> np.ndarray:
    """Log-likelihood of every frame under every bin model, shape ``(T, n_bins)``."""
    X = _as_frames(X)
    if X.shape[0] < 1:
        raise DimensionError("cannot score an empty feature matrix")
    if X.shape[1] != models.dim:
        raise DimensionError(f"frame dimension {X.shape[1]} != model dimension {models.dim}")
    cache = {}
    grid = np.empty((X.shape[0], models.n_bins))
    for i, m in enumerate(models.models):
        if id(m) not in cache:
            cache[id(m)] = m.score_frames(X)
        grid[:, i] = cache[id(m)]
    return grid


def posterior_expected_bin(posteriors) -> float:
    """Mean over frames of the posterior-expected bin index."""
    post = np.asarray(posteriors, dtype=np.float64)
    return float((post @ np.arange(post.shape[1])).mean())


def predict_ppa(grid) -> float:
    """Posterior probability aggregation.

    Each row is turned into a posterior over bins (uniform prior, softmax of
    the log-likelihoods); the window estimate is the frame average of the
    expected bin index.
    """
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 2 or grid.shape[0] < 1:
        raise DimensionError("PPA needs a non-empty T x n grid")
    return posterior_expected_bin(softmax(grid, axis=1))


def majority_vote(labels, n_bins: int | None = None) -> int:
    """Most frequent label; ties go to the smaller bin."""
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if labels.size == 0:
        raise DimensionError("cannot vote over an empty sequence")
    return int(np.argmax(np.bincount(labels, minlength=n_bins or 0)))


def predict_mv(grid_or_path) -> int:
    """Majority vote over a grid's per-frame argmax, or over a Viterbi path."""
    if isinstance(grid_or_path, StatePath):
        return majority_vote(grid_or_path.states)
    arr = np.asarray(grid_or_path)
    if arr.ndim == 1:
        return majority_vote(arr)
    if arr.ndim != 2 or arr.shape[0] < 1:
        raise DimensionError("MV needs a non-empty T x n grid or a state path")
    return majority_vote(np.argmax(arr, axis=1), arr.shape[1])


@dataclass(frozen=True)
class WindowPrediction:
    strategy: str
    bin_estimate: float
    occupancy: float

    @property
    def bin(self) -> int:
        return int(np.floor(self.bin_estimate + 0.5))


def predict_strategies(models: BinModelSet, hmm: HmmSpec, X,
                       strategies=MODEL_STRATEGIES) -> dict:
    """Run several strategies on one window, sharing the grid and HMM passes."""
    unknown = set(strategies) - set(MODEL_STRATEGIES)
    if unknown:
        raise ConfigError(f"unknown strategies {sorted(unknown)}")
    grid = score_grid(models, X)
    if hmm.n_states != models.n_bins:
        raise DimensionError(f"HMM has {hmm.n_states} states but there are {models.n_bins} bins")
    out = {}
    for name in strategies:
        if name == GMM_PPA:
            b = predict_ppa(grid)
        elif name == GMM_MV:
            b = predict_mv(grid)
        elif name == HMM_MV:
            b = predict_mv(viterbi(hmm, grid))
        else:
            b = posterior_expected_bin(state_posteriors(hmm, grid))
        out[name] = WindowPrediction(name, float(b), bin_to_occupancy(b))
    return out


def predict_window(models: BinModelSet, hmm: HmmSpec, X, strategy: str = "ppa",
                   use_hmm: bool = True) -> float:
    """Estimated head count for one window of feature frames.

    ``strategy`` is ``"ppa"`` or ``"mv"``. With ``use_hmm`` the grid is first
    decoded by the HMM: MV takes the modal Viterbi state, PPA averages the
    forward-backward state posteriors.
    """
    if strategy not in ("ppa", "mv"):
        raise ConfigError(f"strategy must be 'ppa' or 'mv', got {strategy!r}")
    name = f"{'hmm' if use_hmm else 'gmm'}-{strategy}"
    return predict_strategies(models, hmm, X, (name,))[name].occupancy
