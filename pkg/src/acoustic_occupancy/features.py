"""Audio feature extraction.

Turns mono PCM audio into frame-level MFCC + delta + delta-delta matrices
(the GMM/HMM input) and into per-window amplitude and spectral summary
statistics (the Poisson GLM input).
"""

from __future__ import annotations

import csv
import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, IngestError, InsufficientAudioError

#: Sample rate used for the store recordings. 11025 Hz works equally well.
DEFAULT_SAMPLE_RATE = 11050.0


@dataclass(frozen=True, eq=False)
class AudioClip:
    """Mono audio samples in [-1, 1] at ``sample_rate`` Hz."""

    samples: np.ndarray
    sample_rate: float

    def __post_init__(self):
        samples = np.ascontiguousarray(self.samples, dtype=np.float64).reshape(-1)
        if not self.sample_rate > 0:
            raise ConfigError(f"sample_rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(samples)):
            raise IngestError("audio samples contain non-finite values")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    def __len__(self):
        return len(self.samples)


@dataclass(frozen=True)
class FeatureConfig:
    fft_size: int = 4096
    hop_size: int = 1024
    n_mfcc: int = 20
    n_mel_filters: int = 40
    delta_width: int = 2
    log_floor: float = 1e-10

    def __post_init__(self):
        if self.fft_size < 2 or self.fft_size & (self.fft_size - 1):
            raise ConfigError(f"fft_size must be a power of two, got {self.fft_size}")
        if not 1 <= self.hop_size <= self.fft_size:
            raise ConfigError(f"hop_size must be in [1, fft_size], got {self.hop_size}")
        if not 1 <= self.n_mfcc <= self.n_mel_filters:
            raise ConfigError("n_mfcc must be in [1, n_mel_filters]")
        if self.delta_width < 1:
            raise ConfigError("delta_width must be >= 1")
        if not self.log_floor > 0:
            raise ConfigError("log_floor must be positive")

    @property
    def n_features(self) -> int:
        return 3 * self.n_mfcc


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """T x D feature frames with their frame rate (frames per second).

    With the default config the columns are 20 MFCCs, then 20 deltas, then
    20 delta-deltas.
    """

    frames: np.ndarray
    frame_rate: float

    def __post_init__(self):
        frames = np.ascontiguousarray(self.frames, dtype=np.float64)
        if frames.ndim != 2 or frames.shape[0] < 1 or frames.shape[1] < 1:
            raise ConfigError(f"feature matrix must be T x D with T, D >= 1, got {frames.shape}")
        if not np.all(np.isfinite(frames)):
            raise IngestError("feature matrix contains non-finite values")
        if not self.frame_rate > 0:
            raise ConfigError("frame_rate must be positive")
        frames.setflags(write=False)
        object.__setattr__(self, "frames", frames)

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def dim(self) -> int:
        return self.frames.shape[1]

    @property
    def duration(self) -> float:
        return self.n_frames / self.frame_rate

    def tail(self, seconds: float) -> "FeatureMatrix":
        """Frames covering the last ``seconds`` of the matrix."""
        n = int(round(seconds * self.frame_rate))
        if n < 1 or n > self.n_frames:
            raise ConfigError(
                f"cannot take {seconds} s ({n} frames) from {self.n_frames} frames"
            )
        return FeatureMatrix(self.frames[-n:], self.frame_rate)


SUMMARY_FIELDS = (
    "amplitude_median",
    "amplitude_mean",
    "amplitude_std",
    "spectral_centroid",
    "spectral_spread",
    "spectral_skewness",
    "spectral_kurtosis",
    "spectral_slope",
)


@dataclass(frozen=True)
class SummaryFeatures:
    amplitude_median: float
    amplitude_mean: float
    amplitude_std: float
    spectral_centroid: float
    spectral_spread: float
    spectral_skewness: float
    spectral_kurtosis: float
    spectral_slope: float

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in SUMMARY_FIELDS])


def hann_window(n: int) -> np.ndarray:
    """Periodic Hann window of length ``n``."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def frame_and_window(clip: AudioClip, config: FeatureConfig) -> np.ndarray:
    """Split ``clip`` into Hann-windowed frames of ``fft_size`` samples.

    Returns
    -------
    np.ndarray [shape=(T, fft_size)]
        ``T = (len(clip) - fft_size) // hop_size + 1``; trailing samples that
        do not complete a frame are dropped.
    """
    n = len(clip.samples)
    if n < config.fft_size:
        raise InsufficientAudioError(
            f"insufficient audio: {n} samples, need at least fft_size={config.fft_size}"
        )
    frames = np.lib.stride_tricks.sliding_window_view(clip.samples, config.fft_size)
    return frames[:: config.hop_size] * hann_window(config.fft_size)


def power_spectrum(frames: np.ndarray) -> np.ndarray:
    return np.abs(np.fft.rfft(frames, axis=-1)) ** 2


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_filters: int, fft_size: int, sample_rate: float) -> np.ndarray:
    """Triangular HTK-mel filterbank from 0 Hz to Nyquist.

    Returns an ``(n_filters, fft_size // 2 + 1)`` weight matrix. A filter too
    narrow to cover any FFT bin is given unit weight at the bin nearest its
    centre so that no row is identically zero.
    """
    n_bins = fft_size // 2 + 1
    bin_freqs = np.arange(n_bins) * sample_rate / fft_size
    edges = mel_to_hz(np.linspace(0.0, hz_to_mel(sample_rate / 2.0), n_filters + 2))
    lower, centre, upper = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (bin_freqs - lower) / (centre - lower)
    falling = (upper - bin_freqs) / (upper - centre)
    weights = np.maximum(0.0, np.minimum(rising, falling))
    for i in np.flatnonzero(weights.max(axis=1) <= 0.0):
        weights[i, int(np.argmin(np.abs(bin_freqs - edges[i + 1])))] = 1.0
    return weights


def dct_matrix(n: int) -> np.ndarray:
    """Orthonormal DCT-II basis; row ``k`` is the k-th cosine."""
    k = np.arange(n)[:, None]
    j = np.arange(n)[None, :]
    basis = np.sqrt(2.0 / n) * np.cos(np.pi * k * (2 * j + 1) / (2 * n))
    basis[0] /= np.sqrt(2.0)
    return basis


def mfcc(clip: AudioClip, config: FeatureConfig = FeatureConfig()) -> np.ndarray:
    """MFCCs (c0 included) of each frame, shape ``(T, n_mfcc)``."""
    spectrum = power_spectrum(frame_and_window(clip, config))
    fbank = mel_filterbank(config.n_mel_filters, config.fft_size, clip.sample_rate)
    log_mel = np.log(np.maximum(spectrum @ fbank.T, config.log_floor))
    return log_mel @ dct_matrix(config.n_mel_filters)[: config.n_mfcc].T


def delta(features: np.ndarray, width: int = 2) -> np.ndarray:
    """Regression delta over +-``width`` frames with edge replication."""
    features = np.asarray(features, dtype=np.float64)
    padded = np.pad(features, ((width, width), (0, 0)), mode="edge")
    T = features.shape[0]
    out = np.zeros_like(features)
    for n in range(1, width + 1):
        out += n * (padded[width + n : width + n + T] - padded[width - n : width - n + T])
    return out / (2.0 * sum(n * n for n in range(1, width + 1)))


def deltas(static: np.ndarray, width: int = 2) -> np.ndarray:
    """First and second deltas side by side, shape ``(T, 2 * n)``."""
    d1 = delta(static, width)
    return np.hstack([d1, delta(d1, width)])


def extract_features(clip: AudioClip, config: FeatureConfig = FeatureConfig()) -> FeatureMatrix:
    static = mfcc(clip, config)
    return FeatureMatrix(
        np.hstack([static, deltas(static, config.delta_width)]),
        clip.sample_rate / config.hop_size,
    )


def summary_features(clip: AudioClip, config: FeatureConfig = FeatureConfig()) -> SummaryFeatures:
    """Amplitude statistics and spectral moments of one analysis window.

    Spectral moments are taken over the frame-averaged power spectrum,
    treating it as a distribution over frequency. A silent clip has centroid,
    spread, skewness, kurtosis and slope all equal to 0.
    """
    x = clip.samples
    amp = (float(np.median(x)), float(np.mean(x)), float(np.std(x)))

    spec = power_spectrum(frame_and_window(clip, config)).mean(axis=0)
    freqs = np.arange(spec.size) * clip.sample_rate / config.fft_size
    total = spec.sum()
    if total <= 0.0:
        return SummaryFeatures(*amp, 0.0, 0.0, 0.0, 0.0, 0.0)
    p = spec / total
    centroid = float(p @ freqs)
    dev = freqs - centroid
    spread = float(np.sqrt(p @ dev**2))
    if spread > 0.0:
        skewness = float(p @ dev**3) / spread**3
        kurtosis = float(p @ dev**4) / spread**4
    else:
        skewness = kurtosis = 0.0
    fc = freqs - freqs.mean()
    slope = float(fc @ (spec - spec.mean()) / (fc @ fc))
    return SummaryFeatures(*amp, centroid, spread, skewness, kurtosis, slope)


def read_wav(path) -> AudioClip:
    """Read a 16-bit PCM WAV file, averaging channels down to mono."""
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as fh:
            width = fh.getsampwidth()
            channels = fh.getnchannels()
            rate = fh.getframerate()
            raw = fh.readframes(fh.getnframes())
    except (OSError, EOFError, wave.Error) as exc:
        raise IngestError(f"{path}: cannot read WAV: {exc}") from exc
    if width != 2:
        raise IngestError(f"{path}: only 16-bit PCM is supported (sample width {width} bytes)")
    data = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    if channels > 1:
        data = data.reshape(-1, channels).mean(axis=1)
    return AudioClip(data, float(rate))


def write_wav(path, clip: AudioClip) -> None:
    """Write ``clip`` as mono 16-bit PCM; samples are clipped to [-1, 1)."""
    pcm = np.clip(np.round(clip.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(int(round(clip.sample_rate)))
        fh.writeframes(pcm.tobytes())


def write_feature_csv(path, features: FeatureMatrix) -> None:
    """One frame per row; the frame rate rides along in a leading comment."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# frame_rate={features.frame_rate!r}\n")
        writer = csv.writer(fh)
        writer.writerow([f"f{i}" for i in range(features.dim)])
        for row in features.frames:
            writer.writerow([repr(float(v)) for v in row])


def read_feature_csv(path) -> FeatureMatrix:
    path = Path(path)
    try:
        with open(path) as fh:
            first = fh.readline().strip()
            if not first.startswith("# frame_rate="):
                raise IngestError(f"{path}: missing '# frame_rate=' header line")
            frame_rate = float(first.split("=", 1)[1])
            fh.readline()
            frames = np.loadtxt(fh, delimiter=",", ndmin=2)
    except (OSError, ValueError) as exc:
        raise IngestError(f"{path}: cannot read feature CSV: {exc}") from exc
    return FeatureMatrix(frames, frame_rate)
