"""Diagonal-covariance Gaussian mixture models.

EM training with k-means++ seeding and random restarts, log-likelihood
scoring, and BIC selection of the component count on held-out frames.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ConfigError, DimensionError, IngestError, NumericError
from .features import FeatureMatrix

log = logging.getLogger(__name__)

#: Component counts searched by BIC.
DEFAULT_CANDIDATES = (2, 3, 4, 5, 6, 7, 8, 16, 32)

GMM_FORMAT_VERSION = 1

# Responsibility mass below which a component counts as empty.
_EMPTY_MASS = 1e-8


def _row_logsumexp(a: np.ndarray) -> np.ndarray:
    # scipy's logsumexp carries array-API overhead that dominates EM on small inputs
    m = a.max(axis=1)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        return np.log(np.exp(a - m[:, None]).sum(axis=1)) + m


def _as_frames(X) -> np.ndarray:
    if isinstance(X, FeatureMatrix):
        return X.frames
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise DimensionError(f"expected a T x D matrix, got shape {X.shape}")
    return X


@dataclass(frozen=True, eq=False)
class DiagonalGmm:
    """Mixture of ``M`` Gaussians with diagonal covariances in ``D`` dimensions.

    Parameters
    ----------
    weights : np.ndarray [shape=(M,)]
        Mixing proportions; non-negative and summing to one.
    means : np.ndarray [shape=(M, D)]
    variances : np.ndarray [shape=(M, D)]
        Diagonals of the component covariance matrices; strictly positive.
    """

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64).reshape(-1)
        mu = np.array(self.means, dtype=np.float64)
        var = np.array(self.variances, dtype=np.float64)
        if mu.ndim == 1:
            mu = mu[:, None]
        if var.ndim == 1:
            var = var[:, None]
        if mu.shape != var.shape or mu.shape[0] != w.size or w.size < 1:
            raise ConfigError(
                f"inconsistent GMM shapes: weights {w.shape}, means {mu.shape}, variances {var.shape}"
            )
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ConfigError(f"weights must be non-negative and sum to 1 (sum={w.sum()!r})")
        if not np.all(var > 0) or not np.all(np.isfinite(var)) or not np.all(np.isfinite(mu)):
            raise ConfigError("variances must be finite and positive; means finite")
        for arr in (w, mu, var):
            arr.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "variances", var)

    @property
    def n_components(self) -> int:
        return self.weights.size

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def n_parameters(self) -> int:
        """Free parameters: M - 1 weights plus M * D means and M * D variances."""
        return (self.n_components - 1) + 2 * self.n_components * self.dim

    def log_joint(self, X) -> np.ndarray:
        """``log w_m + log p_m(x_t)`` for every frame and component, shape ``(T, M)``."""
        X = _as_frames(X)
        if X.shape[1] != self.dim:
            raise DimensionError(f"frame dimension {X.shape[1]} != model dimension {self.dim}")
        with np.errstate(divide="ignore"):
            log_w = np.log(self.weights)
        return kernels.gmm_log_joint(np.ascontiguousarray(X), log_w, self.means, self.variances)

    def score_frames(self, X) -> np.ndarray:
        """Per-frame log density, shape ``(T,)``."""
        return _row_logsumexp(self.log_joint(X))

    def log_density(self, x) -> float:
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        if x.size != self.dim:
            raise DimensionError(f"vector dimension {x.size} != model dimension {self.dim}")
        return float(self.score_frames(x[None, :])[0])

    def log_likelihood(self, X) -> float:
        """Sum of per-frame log densities (frames treated as independent)."""
        return float(self.score_frames(X).sum())

    def to_dict(self) -> dict:
        return {
            "version": GMM_FORMAT_VERSION,
            "D": self.dim,
            "M": self.n_components,
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "variances": self.variances.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "DiagonalGmm":
        if doc.get("version") != GMM_FORMAT_VERSION:
            raise IngestError(f"unsupported GMM format version {doc.get('version')!r}")
        try:
            model = cls(doc["weights"], doc["means"], doc["variances"])
        except KeyError as exc:
            raise IngestError(f"GMM document missing field {exc}") from exc
        if model.dim != doc["D"] or model.n_components != doc["M"]:
            raise IngestError("GMM document D/M disagree with parameter shapes")
        return model


def log_density(model: DiagonalGmm, x) -> float:
    return model.log_density(x)


def log_likelihood(model: DiagonalGmm, X) -> float:
    return model.log_likelihood(X)


@dataclass(frozen=True)
class EmConfig:
    max_iters: int = 200
    tol: float = 1e-6
    variance_floor: float = 1e-6
    n_init: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.max_iters < 1:
            raise ConfigError("max_iters must be >= 1")
        if not self.tol > 0:
            raise ConfigError("tol must be positive")
        if not self.variance_floor > 0:
            raise ConfigError("variance_floor must be positive")
        if self.n_init < 1:
            raise ConfigError("n_init must be >= 1")


@dataclass(frozen=True, eq=False)
class EmResult:
    """Outcome of :func:`fit_em` for the best restart.

    ``history`` holds the training log-likelihood of every parameter iterate
    of that restart, starting from the initialisation.
    """

    model: DiagonalGmm
    log_likelihood: float
    history: tuple
    converged: bool
    n_rescues: int = 0


def _kmeans_pp(X: np.ndarray, M: int, rng: np.random.Generator) -> np.ndarray:
    T = X.shape[0]
    idx = [int(rng.integers(T))]
    d2 = ((X - X[idx[0]]) ** 2).sum(axis=1)
    for _ in range(1, M):
        total = d2.sum()
        if total > 0:
            nxt = int(rng.choice(T, p=d2 / total))
        else:
            nxt = int(rng.integers(T))
        idx.append(nxt)
        d2 = np.minimum(d2, ((X - X[nxt]) ** 2).sum(axis=1))
    return X[idx].copy()


def _em_run(X, M, config, rng):
    T, D = X.shape
    floor = config.variance_floor
    global_var = np.maximum(X.var(axis=0), floor)
    weights = np.full(M, 1.0 / M)
    means = _kmeans_pp(X, M, rng)
    variances = np.tile(global_var, (M, 1))

    history = []
    converged = False
    rescues = 0
    prev = None
    for _ in range(config.max_iters):
        log_joint = kernels.gmm_log_joint(X, np.log(weights), means, variances)
        frame_ll = _row_logsumexp(log_joint)
        ll = float(frame_ll.sum())
        history.append(ll)
        if prev is not None and ll - prev <= config.tol * abs(prev):
            converged = True
            break
        prev = ll

        resp = np.exp(log_joint - frame_ll[:, None])
        mass = resp.sum(axis=0)
        empty = np.flatnonzero(mass < _EMPTY_MASS)
        mass = np.maximum(mass, np.finfo(float).tiny)
        means = (resp.T @ X) / mass[:, None]
        for m in range(M):
            diff = X - means[m]
            variances[m] = (resp[:, m] @ (diff * diff)) / mass[m]
        if empty.size:
            # re-seed starved components on the worst-explained frames
            worst = np.argsort(frame_ll, kind="stable")
            for k, m in enumerate(empty):
                means[m] = X[worst[k % T]]
                variances[m] = global_var
                mass[m] = 1.0
            rescues += 1
            prev = None
        weights = mass / mass.sum()
        variances = np.maximum(variances, floor)
    else:
        log_joint = kernels.gmm_log_joint(X, np.log(weights), means, variances)
        history.append(float(_row_logsumexp(log_joint).sum()))

    return weights, means, variances, history, converged, rescues


def fit_em(X, n_components: int, config: EmConfig = EmConfig()) -> EmResult:
    """Maximum-likelihood diagonal GMM by expectation-maximisation.

    Runs ``config.n_init`` restarts from independent k-means++ seedings and
    keeps the one with the highest final training log-likelihood. Each run
    stops once the relative log-likelihood gain drops below ``config.tol``.
    Variances are floored at ``config.variance_floor`` in every M-step.

    Raises
    ------
    ConfigError
        If there are fewer frames than components.
    """
    X = np.ascontiguousarray(_as_frames(X))
    M = int(n_components)
    if M < 1:
        raise ConfigError("n_components must be >= 1")
    if X.shape[0] < M:
        raise ConfigError(f"need at least {M} frames to fit {M} components, got {X.shape[0]}")
    if not np.all(np.isfinite(X)):
        raise IngestError("training frames contain non-finite values")

    best = None
    for child in np.random.SeedSequence(config.seed).spawn(config.n_init):
        run = _em_run(X, M, config, np.random.default_rng(child))
        if best is None or run[3][-1] > best[3][-1]:
            best = run
    weights, means, variances, history, converged, rescues = best
    model = DiagonalGmm(weights / weights.sum(), means, variances)
    return EmResult(model, history[-1], tuple(history), converged, rescues)


def bic(model: DiagonalGmm, X_test) -> float:
    """``-2 LL(X_test) + k ln(T_test)`` with ``k = model.n_parameters``."""
    X_test = _as_frames(X_test)
    return -2.0 * model.log_likelihood(X_test) + model.n_parameters * np.log(X_test.shape[0])


@dataclass(frozen=True, eq=False)
class BicSelection:
    model: DiagonalGmm
    scores: dict = field(default_factory=dict)
    failures: dict = field(default_factory=dict)

    @property
    def n_components(self) -> int:
        return self.model.n_components


def select_by_bic(X_train, X_test, candidates=DEFAULT_CANDIDATES,
                  config: EmConfig = EmConfig()) -> BicSelection:
    """Fit one GMM per candidate count and keep the lowest BIC on ``X_test``.

    Ties go to the smaller component count. Candidates that cannot be fitted
    (e.g. more components than training frames) are recorded in
    ``failures`` and skipped.
    """
    X_train = _as_frames(X_train)
    X_test = _as_frames(X_test)
    candidates = sorted(set(int(c) for c in candidates))
    if not candidates:
        raise ConfigError("candidate set is empty")
    if X_train.shape[1] != X_test.shape[1]:
        raise DimensionError("train and test frames differ in dimension")

    scores, failures = {}, {}
    best_model, best_score = None, np.inf
    for M in candidates:
        try:
            fit = fit_em(X_train, M, config)
        except (ConfigError, NumericError) as exc:
            failures[M] = str(exc)
            continue
        score = bic(fit.model, X_test)
        scores[M] = score
        if best_model is None or score < best_score:
            best_model, best_score = fit.model, score
    if best_model is None:
        raise NumericError(
            "all BIC candidates failed: "
            + "; ".join(f"M={m}: {msg}" for m, msg in failures.items())
        )
    log.debug("BIC scores %s -> M=%d", scores, best_model.n_components)
    return BicSelection(best_model, scores, failures)
