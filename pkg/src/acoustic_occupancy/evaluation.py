"""Leave-two-out bootstrap assessment and window/strategy selection.

Each bootstrap iteration trains on a with-replacement resample of the
labelled windows and tests on two windows that did not make it into the
resample. The same splits are reused for every window size and strategy,
so all cells of the report are directly comparable.
"""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .dataset import INTERVAL_SECONDS, LabeledWindow, slice_features, slice_window
from .errors import ConfigError, NumericError, OccupancyError
from .occupancy import GMM_MV, GMM_PPA, HMM_MV, HMM_PPA, N_BINS, nearest_bin, occupancy_to_bin
from .pipeline import ALL_STRATEGIES, GLM

log = logging.getLogger(__name__)

#: Tie-break order of the one-standard-error rule, simplest first.
STRATEGY_ORDER = (GMM_MV, GMM_PPA, HMM_MV, HMM_PPA, GLM)

DEFAULT_WINDOW_SIZES = tuple(range(30, 261, 10))

__all__ = [
    "BootstrapSplit", "CellResult", "EvalReport", "LabeledWindow", "SweepConfig",
    "bootstrap_leave_two_out", "confusion_matrix", "draw_splits", "export_report",
    "one_standard_error_select", "slice_features", "slice_window",
]


@dataclass(frozen=True)
class SweepConfig:
    window_sizes: tuple = DEFAULT_WINDOW_SIZES
    n_bootstrap: int = 50
    seed: int = 0
    strategies: tuple = ALL_STRATEGIES
    jobs: int = 1
    max_resample_tries: int = 100

    def __post_init__(self):
        object.__setattr__(self, "window_sizes", tuple(float(w) for w in self.window_sizes))
        object.__setattr__(self, "strategies", tuple(self.strategies))
        if not self.window_sizes:
            raise ConfigError("window_sizes is empty")
        for w in self.window_sizes:
            if not 0 < w <= INTERVAL_SECONDS:
                raise ConfigError(f"window size {w} outside (0, {INTERVAL_SECONDS:g}] s")
        if self.n_bootstrap < 1:
            raise ConfigError("n_bootstrap must be >= 1")
        unknown = set(self.strategies) - set(ALL_STRATEGIES)
        if unknown or not self.strategies:
            raise ConfigError(f"unknown or empty strategies: {sorted(unknown)}")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")


@dataclass(frozen=True, eq=False)
class BootstrapSplit:
    iteration: int
    seed: int
    train: np.ndarray
    test: tuple


@dataclass(frozen=True, eq=False)
class CellResult:
    """Bootstrap outcome for one (window size, strategy) pair.

    ``predictions`` and ``truths`` have shape ``(n_iterations, 2)``.
    """

    window: float
    strategy: str
    predictions: np.ndarray
    truths: np.ndarray
    test_indices: np.ndarray

    @property
    def signed_errors(self) -> np.ndarray:
        return self.predictions - self.truths

    @property
    def rmse_per_iteration(self) -> np.ndarray:
        return np.sqrt(np.mean(self.signed_errors**2, axis=1))

    @property
    def mean_rmse(self) -> float:
        return float(np.mean(self.rmse_per_iteration))

    @property
    def standard_error(self) -> float:
        r = self.rmse_per_iteration
        return float(np.std(r, ddof=1) / np.sqrt(r.size)) if r.size > 1 else 0.0


@dataclass(eq=False)
class EvalReport:
    cells: dict
    splits: list
    n_bins: int = N_BINS
    selected: tuple | None = None

    def summary(self) -> dict:
        """``{(window, strategy): (mean_rmse, standard_error)}``."""
        return {k: (c.mean_rmse, c.standard_error) for k, c in self.cells.items()}

    def windows(self) -> list:
        return sorted({w for w, _ in self.cells})

    def strategies(self) -> list:
        present = {s for _, s in self.cells}
        return [s for s in STRATEGY_ORDER if s in present]

    def confusion(self, strategy: str, window: float | None = None) -> np.ndarray:
        if window is None:
            if self.selected is None:
                raise ConfigError("no window given and no selection made")
            window = self.selected[1]
        cell = self.cells[(float(window), strategy)]
        pairs = [(occupancy_to_bin(int(t)), nearest_bin(p, self.n_bins))
                 for t, p in zip(cell.truths.ravel(), cell.predictions.ravel())]
        return confusion_matrix(pairs, self.n_bins)


def draw_splits(n_samples: int, n_bootstrap: int, seed: int, max_tries: int = 100) -> list:
    """Bootstrap resamples, each paired with two out-of-bag test windows.

    Every iteration draws from its own child seed, so the sequence of splits
    depends only on ``seed``.
    """
    if n_samples < 4:
        raise ConfigError(f"need at least 4 samples for leave-two-out bootstrap, got {n_samples}")
    splits = []
    for i, child in enumerate(np.random.SeedSequence(seed).spawn(n_bootstrap)):
        rng = np.random.default_rng(child)
        for _ in range(max_tries):
            train = np.sort(rng.integers(0, n_samples, size=n_samples))
            oob = np.setdiff1d(np.arange(n_samples), train)
            if oob.size >= 2:
                break
        else:
            raise NumericError(
                f"iteration {i}: fewer than 2 out-of-bag samples after {max_tries} resamples"
            )
        test = tuple(int(t) for t in np.sort(rng.choice(oob, size=2, replace=False)))
        splits.append(BootstrapSplit(i, int(child.generate_state(1)[0]), train, test))
    return splits


def bootstrap_leave_two_out(samples, config: SweepConfig, pipeline: Callable) -> EvalReport:
    """Run the bootstrap for every window size in ``config``.

    Parameters
    ----------
    samples : list of LabeledWindow
    pipeline : callable
        ``pipeline(train_windows, test_windows, window_size, seed)`` returning
        ``{strategy: [prediction, prediction]}`` occupancy estimates for the
        two test windows. Strategies the pipeline cannot produce are simply
        absent from the report.
    """
    samples = list(samples)
    splits = draw_splits(len(samples), config.n_bootstrap, config.seed, config.max_resample_tries)
    truth = np.array([s.occupancy for s in samples], dtype=np.float64)

    def task(args):
        size, split = args
        train = [samples[i] for i in split.train]
        test = [samples[i] for i in split.test]
        return pipeline(train, test, size, split.seed)

    jobs = [(size, split) for size in config.window_sizes for split in splits]
    if config.jobs > 1:
        with ThreadPoolExecutor(config.jobs) as pool:
            results = list(pool.map(task, jobs))
    else:
        results = [task(j) for j in jobs]

    cells = {}
    test_idx = np.array([s.test for s in splits], dtype=np.int64)
    n_iter = len(splits)
    for k, size in enumerate(config.window_sizes):
        chunk = results[k * n_iter:(k + 1) * n_iter]
        for strategy in config.strategies:
            if not all(strategy in r for r in chunk):
                continue
            preds = np.array([r[strategy] for r in chunk], dtype=np.float64)
            if preds.shape != (n_iter, 2):
                raise ConfigError(f"pipeline returned {preds.shape[1:]} predictions per iteration for {strategy}")
            cells[(size, strategy)] = CellResult(size, strategy, preds, truth[test_idx], test_idx)
        log.info("window %gs done", size)
    if not cells:
        raise OccupancyError("the pipeline produced no predictions for any requested strategy")
    report = EvalReport(cells, splits)
    report.selected = one_standard_error_select(report)
    return report


def one_standard_error_select(report) -> tuple:
    """Simplest cell whose mean RMSE is within one SE of the best.

    "Simplest" means the smallest window, then the earliest strategy in
    :data:`STRATEGY_ORDER`. Accepts an :class:`EvalReport` or a mapping
    ``{(window, strategy): (mean_rmse, standard_error)}``.

    Returns
    -------
    (strategy, window)
    """
    summary = report.summary() if isinstance(report, EvalReport) else dict(report)
    if not summary:
        raise ConfigError("cannot select from an empty report")
    rank = {s: i for i, s in enumerate(STRATEGY_ORDER)}
    best_key = min(summary, key=lambda k: (summary[k][0], k[0], rank.get(k[1], len(rank))))
    best_mean, best_se = summary[best_key]
    threshold = best_mean + best_se
    eligible = [k for k, (m, _) in summary.items() if m <= threshold]
    window, strategy = min(eligible, key=lambda k: (k[0], rank.get(k[1], len(rank))))
    return strategy, window


def confusion_matrix(pairs, n_bins: int = N_BINS) -> np.ndarray:
    """Counts of ``(true bin, predicted bin)`` pairs; rows are true bins."""
    out = np.zeros((n_bins, n_bins), dtype=np.int64)
    for t, p in pairs:
        if not (0 <= t < n_bins and 0 <= p < n_bins):
            raise ConfigError(f"bin pair ({t}, {p}) outside [0, {n_bins - 1}]")
        out[t, p] += 1
    return out


def _write_csv(path: Path, header, rows) -> None:
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)
    except OSError as exc:
        raise OSError(f"{path}: cannot write report file: {exc}") from exc


def export_report(report: EvalReport, out_dir) -> list:
    """Write the report CSVs into ``out_dir`` and return their paths.

    Per-iteration errors, predictions and confusion matrices refer to the
    selected window size.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"{out}: cannot create output directory: {exc}") from exc
    strategies = report.strategies()
    window = report.selected[1] if report.selected else report.windows()[0]

    paths = [out / n for n in ("rmse_by_window.csv", "errors_violin.csv",
                               "predictions.csv", "confusion.csv")]
    _write_csv(paths[0], ("window", "strategy", "mean_rmse", "se"), [
        (f"{w:g}", s, repr(report.cells[(w, s)].mean_rmse), repr(report.cells[(w, s)].standard_error))
        for w in report.windows() for s in strategies if (w, s) in report.cells
    ])
    violin, preds, conf = [], [], []
    for s in strategies:
        cell = report.cells.get((window, s))
        if cell is None:
            continue
        for it, errs in enumerate(cell.signed_errors):
            violin.extend((s, it, repr(float(e))) for e in errs)
        for idx, t, p in zip(cell.test_indices.ravel(), cell.truths.ravel(), cell.predictions.ravel()):
            preds.append((int(idx), int(t), repr(float(p)), s))
        m = report.confusion(s, window)
        conf.extend((s, i, j, int(m[i, j])) for i in range(m.shape[0]) for j in range(m.shape[1]))
    _write_csv(paths[1], ("strategy", "iteration", "signed_error"), violin)
    _write_csv(paths[2], ("index", "ground_truth", "prediction", "strategy"), preds)
    _write_csv(paths[3], ("strategy", "true_bin", "predicted_bin", "count"), conf)
    return paths
