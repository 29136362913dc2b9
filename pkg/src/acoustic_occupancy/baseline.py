"""Poisson regression baseline on per-window summary features.

Log-link Poisson GLM fitted by iteratively reweighted least squares on
standardised columns, with step-halving so the deviance never increases.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ConvergenceError, DimensionError, IngestError

GLM_FORMAT_VERSION = 1

# Linear predictor clip; keeps exp() finite and strictly positive.
_ETA_LIMIT = 700.0


@dataclass(frozen=True, eq=False)
class GlmModel:
    """Fitted Poisson GLM; ``coefficients[0]`` is the intercept."""

    coefficients: np.ndarray
    feature_names: tuple
    fit_deviance: float
    deviance_history: tuple = ()
    n_iter: int = 0
    dropped: tuple = ()

    def __post_init__(self):
        beta = np.array(self.coefficients, dtype=np.float64).reshape(-1)
        names = tuple(self.feature_names)
        if beta.size != len(names) + 1:
            raise ConfigError(f"{beta.size} coefficients for {len(names)} features")
        if not np.all(np.isfinite(beta)):
            raise ConfigError("GLM coefficients must be finite")
        beta.setflags(write=False)
        object.__setattr__(self, "coefficients", beta)
        object.__setattr__(self, "feature_names", names)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def to_dict(self) -> dict:
        return {
            "version": GLM_FORMAT_VERSION,
            "family": "poisson",
            "link": "log",
            "feature_names": list(self.feature_names),
            "coefficients": self.coefficients.tolist(),
            "fit_deviance": self.fit_deviance,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "GlmModel":
        if doc.get("version") != GLM_FORMAT_VERSION:
            raise IngestError(f"unsupported GLM format version {doc.get('version')!r}")
        try:
            return cls(doc["coefficients"], doc["feature_names"], float(doc["fit_deviance"]))
        except KeyError as exc:
            raise IngestError(f"GLM document missing field {exc}") from exc


def poisson_deviance(y, mu) -> float:
    y = np.asarray(y, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        term = np.where(y > 0, y * np.log(y / mu), 0.0)
    return float(2.0 * np.sum(term - (y - mu)))


def _independent_columns(Z: np.ndarray, tol: float = 1e-10) -> list:
    """Greedy left-to-right selection of columns that raise the rank."""
    keep = []
    for j in range(Z.shape[1]):
        trial = Z[:, keep + [j]]
        s = np.linalg.svd(trial, compute_uv=False)
        if s[-1] > tol * max(s[0], 1.0) * np.sqrt(Z.shape[0]):
            keep.append(j)
    return keep


def fit_poisson(designs, counts, feature_names=None, max_iter: int = 100,
                tol: float = 1e-8) -> GlmModel:
    """Fit ``log E[count] = b0 + x @ b`` by IRLS.

    Columns are standardised before fitting and the coefficients mapped back
    afterwards. Constant or collinear columns are dropped with a warning and
    get a zero coefficient. Iteration stops when the relative deviance change
    falls below ``tol``.

    Raises
    ------
    ConvergenceError
        If ``max_iter`` iterations pass without convergence.
    """
    X = np.asarray(designs, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(counts, dtype=np.float64).reshape(-1)
    n, p = X.shape
    names = tuple(feature_names) if feature_names is not None else tuple(f"x{j}" for j in range(p))
    if len(names) != p:
        raise DimensionError(f"{len(names)} feature names for {p} columns")
    if y.size != n:
        raise DimensionError(f"{n} design rows but {y.size} counts")
    if np.any(y < 0) or np.any(y != np.round(y)):
        raise ConfigError("counts must be non-negative integers")
    if not np.all(np.isfinite(X)):
        raise ConfigError("design matrix contains non-finite values")
    if n <= p + 1:
        raise ConfigError(f"need more than p+1={p + 1} rows, got {n}")

    centre = X.mean(axis=0)
    scale = X.std(axis=0)
    varying = np.flatnonzero(scale > 1e-12 * np.maximum(1.0, np.abs(centre)))
    Z = (X[:, varying] - centre[varying]) / scale[varying]
    cols = [varying[j] for j in _independent_columns(Z)] if varying.size else []
    dropped = tuple(names[j] for j in range(p) if j not in cols)
    if dropped:
        warnings.warn(f"dropping constant or collinear columns: {', '.join(dropped)}", stacklevel=2)
    Z = np.column_stack([np.ones(n)] + [(X[:, j] - centre[j]) / scale[j] for j in cols])

    gamma = np.zeros(Z.shape[1])
    gamma[0] = np.log(max(y.mean(), 1e-10))
    mu = np.exp(np.clip(Z @ gamma, -_ETA_LIMIT, _ETA_LIMIT))
    dev = poisson_deviance(y, mu)
    history = [dev]
    converged = False
    for it in range(1, max_iter + 1):
        eta = Z @ gamma
        w = mu
        z = eta + (y - mu) / mu
        sw = np.sqrt(w)
        proposal, *_ = np.linalg.lstsq(Z * sw[:, None], z * sw, rcond=None)
        step = proposal - gamma
        for _ in range(50):
            cand = gamma + step
            mu_c = np.exp(np.clip(Z @ cand, -_ETA_LIMIT, _ETA_LIMIT))
            dev_c = poisson_deviance(y, mu_c)
            if np.isfinite(dev_c) and dev_c <= dev:
                break
            step = step / 2.0
        else:
            cand, mu_c, dev_c = gamma, mu, dev
        change = abs(dev - dev_c) / (abs(dev_c) + 0.1)
        gamma, mu, dev = cand, mu_c, dev_c
        history.append(dev)
        if change < tol:
            converged = True
            break
    if not converged:
        raise ConvergenceError(f"IRLS did not converge after {max_iter} iterations")

    beta = np.zeros(p + 1)
    for k, j in enumerate(cols, start=1):
        beta[j + 1] = gamma[k] / scale[j]
    beta[0] = gamma[0] - sum(gamma[k] * centre[j] / scale[j] for k, j in enumerate(cols, start=1))
    return GlmModel(beta, names, dev, tuple(history), it, dropped)


def predict_poisson(model: GlmModel, features) -> np.ndarray | float:
    """Expected count ``exp(b0 + b @ x)`` for one row or a matrix of rows."""
    x = np.asarray(features, dtype=np.float64)
    if x.shape[-1] != model.n_features:
        raise DimensionError(f"expected {model.n_features} features, got {x.shape[-1]}")
    eta = model.coefficients[0] + x @ model.coefficients[1:]
    out = np.exp(np.clip(eta, -_ETA_LIMIT, _ETA_LIMIT))
    return float(out) if out.ndim == 0 else out
