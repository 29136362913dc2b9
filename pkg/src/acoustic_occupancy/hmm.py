"""Hidden Markov layer over occupancy bins.

All probabilities live in the log domain. Emissions are supplied as a
``(T, n_states)`` grid of log-likelihoods, typically the bin-GMM scores of
each feature frame.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from . import kernels
from .errors import ConfigError, DimensionError, IngestError

#: Probability floor applied before taking logs, so no transition is impossible.
TRANSITION_FLOOR = 1e-12


def heuristic_transitions(n_states: int, tau: float = 1.0, self_bias: float = 1.0) -> np.ndarray:
    """Banded transition matrix favouring small occupancy changes.

    ``a[i, j]`` is proportional to ``exp(-|i - j| / tau)``, the diagonal is
    scaled by ``1 + self_bias`` and rows are normalised. ``tau=np.inf`` gives
    a flat band.
    """
    if n_states < 1:
        raise ConfigError("n_states must be >= 1")
    if not tau > 0:
        raise ConfigError(f"tau must be positive, got {tau}")
    if self_bias < 0:
        raise ConfigError(f"self_bias must be non-negative, got {self_bias}")
    idx = np.arange(n_states)
    a = np.exp(-np.abs(idx[:, None] - idx[None, :]) / tau)
    a[idx, idx] *= 1.0 + self_bias
    return a / a.sum(axis=1, keepdims=True)


@dataclass(frozen=True, eq=False)
class HmmSpec:
    """Initial and transition log-probabilities of an ``n``-state chain."""

    log_initial: np.ndarray
    log_transitions: np.ndarray

    def __post_init__(self):
        log_pi = np.array(self.log_initial, dtype=np.float64).reshape(-1)
        log_a = np.array(self.log_transitions, dtype=np.float64)
        n = log_pi.size
        if n < 1 or log_a.shape != (n, n):
            raise ConfigError(f"transition matrix must be {n}x{n}, got {log_a.shape}")
        if abs(np.exp(log_pi).sum() - 1.0) > 1e-9:
            raise ConfigError("initial probabilities must sum to 1")
        if np.any(np.abs(np.exp(log_a).sum(axis=1) - 1.0) > 1e-9):
            raise ConfigError("transition rows must sum to 1")
        log_pi.setflags(write=False)
        log_a.setflags(write=False)
        object.__setattr__(self, "log_initial", log_pi)
        object.__setattr__(self, "log_transitions", log_a)

    @classmethod
    def from_probabilities(cls, initial, transitions, floor: float = TRANSITION_FLOOR) -> "HmmSpec":
        """Build from linear-domain probabilities, flooring and renormalising."""
        pi = np.maximum(np.asarray(initial, dtype=np.float64), floor)
        a = np.maximum(np.asarray(transitions, dtype=np.float64), floor)
        if a.ndim != 2:
            raise ConfigError("transition matrix must be 2-D")
        return cls(np.log(pi / pi.sum()), np.log(a / a.sum(axis=1, keepdims=True)))

    @classmethod
    def heuristic(cls, n_states: int = 15, tau: float = 1.0, self_bias: float = 1.0) -> "HmmSpec":
        """Uniform start distribution with :func:`heuristic_transitions`."""
        return cls.from_probabilities(
            np.full(n_states, 1.0 / n_states), heuristic_transitions(n_states, tau, self_bias)
        )

    @property
    def n_states(self) -> int:
        return self.log_initial.size

    @property
    def transitions(self) -> np.ndarray:
        return np.exp(self.log_transitions)


@dataclass(frozen=True, eq=False)
class StatePath:
    states: np.ndarray
    log_score: float


def _check(spec: HmmSpec, emissions) -> np.ndarray:
    ll = np.ascontiguousarray(emissions, dtype=np.float64)
    if ll.ndim != 2:
        raise DimensionError(f"emissions must be a T x n grid, got shape {ll.shape}")
    if ll.shape[0] < 1:
        raise DimensionError("emission grid has no frames")
    if ll.shape[1] != spec.n_states:
        raise DimensionError(f"emission grid has {ll.shape[1]} columns, HMM has {spec.n_states} states")
    return ll


def viterbi(spec: HmmSpec, emissions) -> StatePath:
    """Most probable state sequence; ties go to the smaller state index."""
    ll = _check(spec, emissions)
    states, score = kernels.viterbi_log(spec.log_initial, spec.log_transitions, ll)
    return StatePath(np.asarray(states, dtype=np.int64), float(score))


def forward_log_prob(spec: HmmSpec, emissions) -> float:
    """``log P(O | model)`` via the forward recursion."""
    ll = _check(spec, emissions)
    alpha = kernels.forward_log(spec.log_initial, spec.log_transitions, ll)
    return float(logsumexp(alpha[-1]))


def state_posteriors(spec: HmmSpec, emissions) -> np.ndarray:
    """Smoothed ``P(q_t = i | O)`` from forward-backward, shape ``(T, n)``."""
    ll = _check(spec, emissions)
    alpha = kernels.forward_log(spec.log_initial, spec.log_transitions, ll)
    beta = kernels.backward_log(spec.log_transitions, ll)
    gamma = alpha + beta
    gamma -= logsumexp(gamma, axis=1, keepdims=True)
    return np.exp(gamma)


def write_transitions_csv(path, transitions) -> None:
    """Write an ``n x n`` linear-domain transition matrix, no header."""
    a = np.asarray(transitions, dtype=np.float64)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in a:
            writer.writerow([repr(float(v)) for v in row])


def read_transitions_csv(path) -> np.ndarray:
    path = Path(path)
    try:
        a = np.loadtxt(path, delimiter=",", ndmin=2)
    except (OSError, ValueError) as exc:
        raise IngestError(f"{path}: cannot read transition CSV: {exc}") from exc
    if a.shape[0] != a.shape[1]:
        raise IngestError(f"{path}: transition matrix must be square, got {a.shape}")
    if np.any(a < 0) or np.any(np.abs(a.sum(axis=1) - 1.0) > 1e-6):
        raise IngestError(f"{path}: rows must be non-negative and sum to 1")
    return a
