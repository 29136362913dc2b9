"""Labelled 15-minute windows and the ground-truth CSV format.

A ground-truth CSV has the header ``interval_end,occupancy,audio_path``
with ISO-8601 timestamps. ``audio_path`` points at a WAV file or at a
pre-computed feature CSV (see :func:`features.write_feature_csv`) and is
resolved relative to the CSV's directory.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from datetime import datetime
from pathlib import Path

import numpy as np

from .errors import ConfigError, IngestError
from .features import AudioClip, FeatureMatrix, read_feature_csv, read_wav

GROUND_TRUTH_HEADER = ("interval_end", "occupancy", "audio_path")

#: Length of one ground-truth interval in seconds.
INTERVAL_SECONDS = 900.0


@dataclass(frozen=True, eq=False)
class LabeledWindow:
    """Cumulative occupancy at ``interval_end`` plus the audio leading up to it.

    The payload is either raw ``audio`` or pre-computed ``features``; when
    both are absent it is loaded on demand from ``audio_ref``.
    """

    interval_end: datetime
    occupancy: int
    audio_ref: str | None = None
    audio: AudioClip | None = None
    features: FeatureMatrix | None = None

    def __post_init__(self):
        if int(self.occupancy) != self.occupancy or self.occupancy < 0:
            raise ConfigError(f"occupancy must be a non-negative integer, got {self.occupancy}")
        object.__setattr__(self, "occupancy", int(self.occupancy))

    def load(self) -> "LabeledWindow":
        """Return a copy with the payload read from ``audio_ref`` if needed."""
        if self.audio is not None or self.features is not None:
            return self
        if self.audio_ref is None:
            raise IngestError(f"window ending {self.interval_end} has no audio")
        ref = Path(self.audio_ref)
        if ref.suffix.lower() == ".wav":
            return replace(self, audio=read_wav(ref))
        if ref.suffix.lower() == ".csv":
            return replace(self, features=read_feature_csv(ref))
        raise IngestError(f"{ref}: unsupported payload type (expected .wav or .csv)")

    @property
    def duration(self) -> float:
        w = self.load()
        return w.audio.duration if w.audio is not None else w.features.duration


def slice_window(window: LabeledWindow, size: float) -> AudioClip:
    """The final ``size`` seconds of the window's audio.

    Anchoring at the end keeps the slice next to the instant the ground truth
    refers to.
    """
    clip = window.load().audio
    if clip is None:
        raise IngestError("window carries pre-computed features, not audio")
    n = int(round(size * clip.sample_rate))
    if size <= 0 or n < 1:
        raise ConfigError(f"window size must be positive, got {size}")
    if n > len(clip):
        raise ConfigError(
            f"window size {size} s exceeds the {clip.duration:.3f} s of audio available"
        )
    return AudioClip(clip.samples[len(clip) - n:], clip.sample_rate)


def slice_features(window: LabeledWindow, size: float) -> FeatureMatrix:
    """Feature-level counterpart of :func:`slice_window`."""
    feats = window.load().features
    if feats is None:
        raise IngestError("window carries audio, not pre-computed features")
    if size <= 0:
        raise ConfigError(f"window size must be positive, got {size}")
    if size > feats.duration + 1e-9:
        raise ConfigError(
            f"window size {size} s exceeds the {feats.duration:.3f} s of features available"
        )
    return feats.tail(size)


def read_ground_truth(path) -> list:
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if tuple(reader.fieldnames or ()) != GROUND_TRUTH_HEADER:
                raise IngestError(
                    f"{path}: header must be {','.join(GROUND_TRUTH_HEADER)}, "
                    f"got {','.join(reader.fieldnames or ())}"
                )
            rows = list(reader)
    except OSError as exc:
        raise IngestError(f"{path}: cannot read ground truth: {exc}") from exc

    windows = []
    for lineno, row in enumerate(rows, start=2):
        try:
            end = datetime.fromisoformat(row["interval_end"])
            occ = int(row["occupancy"])
        except ValueError as exc:
            raise IngestError(f"{path}:{lineno}: {exc}") from exc
        ref = row["audio_path"].strip() or None
        if ref is not None and not Path(ref).is_absolute():
            ref = str(path.parent / ref)
        try:
            windows.append(LabeledWindow(end, occ, ref))
        except ConfigError as exc:
            raise IngestError(f"{path}:{lineno}: {exc}") from exc
    if not windows:
        raise IngestError(f"{path}: no ground-truth rows")
    return windows


def write_ground_truth(path, windows, audio_paths=None) -> None:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(GROUND_TRUTH_HEADER)
        for i, w in enumerate(windows):
            ref = audio_paths[i] if audio_paths is not None else (w.audio_ref or "")
            writer.writerow([w.interval_end.isoformat(), w.occupancy, ref])


def occupancies(windows) -> np.ndarray:
    return np.array([w.occupancy for w in windows], dtype=np.int64)
