"""Mel-cepstral analysis on an all-pass warped frequency axis.

Frames are Hann-windowed, centred on multiples of the hop and reflect-padded
at the edges. The log magnitude spectrum of each frame is projected onto the
warped cosine basis ``1, 2cos(w~), ..., 2cos((order-1) w~)`` where
``w~ = w + 2 atan(a sin w / (1 - a cos w))``. The projection is a least
squares fit weighted by the warp Jacobian, so it matches truncating the
Fourier series on a uniformly sampled warped axis, and it is an exact
left-inverse of :func:`cepstrum_to_envelope`.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy.signal import get_window

from .audio_io import Waveform

LOG_FLOOR = 1e-10
MCEP_MAGIC = b"MCEP"
MCEP_VERSION = 1


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class AnalysisConfig:
    sample_rate: int = 24000
    frame_len: int = 1200
    hop: int = 120
    fft_size: int = 2048
    order: int = 80
    warp_alpha: float = 0.466

    def __post_init__(self):
        if self.frame_len > self.fft_size:
            raise ConfigError("frame_len must not exceed fft_size")
        if not -1.0 < self.warp_alpha < 1.0:
            raise ConfigError("warp_alpha must lie in (-1, 1)")
        if self.order < 1 or self.order > self.fft_size // 2:
            raise ConfigError("order out of range")
        if self.hop <= 0 or self.sample_rate <= 0:
            raise ConfigError("hop and sample_rate must be positive")

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1

    def frequencies(self) -> np.ndarray:
        return np.arange(self.n_bins) * self.sample_rate / self.fft_size


@dataclass
class Cepstrogram:
    frames: np.ndarray
    config: AnalysisConfig = field(default_factory=AnalysisConfig)

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64).reshape(-1, self.config.order)

    def __len__(self):
        return self.frames.shape[0]

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]


@dataclass
class LogSpectrum:
    """Natural-log magnitude on the linear FFT grid; ``bins`` may carry leading frame axes."""

    bins: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.bins = np.asarray(self.bins, dtype=np.float64)

    @property
    def n_bins(self) -> int:
        return self.bins.shape[-1]

    def frequencies(self) -> np.ndarray:
        return np.linspace(0.0, self.sample_rate / 2.0, self.n_bins)


def warp_frequency(omega, alpha):
    """All-pass frequency warp; ``warp_frequency(., -alpha)`` is its inverse."""
    omega = np.asarray(omega, dtype=np.float64)
    return omega + 2.0 * np.arctan(alpha * np.sin(omega) / (1.0 - alpha * np.cos(omega)))


@lru_cache(maxsize=16)
def _basis(fft_size: int, order: int, alpha: float):
    omega = np.pi * np.arange(fft_size // 2 + 1) / (fft_size // 2)
    warped = warp_frequency(omega, alpha)
    basis = 2.0 * np.cos(np.outer(warped, np.arange(order)))
    basis[:, 0] = 1.0
    # Jacobian of the warp, with trapezoid end weights on the half grid
    weights = (1.0 - alpha**2) / (1.0 - 2.0 * alpha * np.cos(omega) + alpha**2)
    weights[0] *= 0.5
    weights[-1] *= 0.5
    gram = basis.T @ (weights[:, None] * basis)
    projector = np.linalg.solve(gram, basis.T * weights[None, :])
    basis.setflags(write=False)
    projector.setflags(write=False)
    return basis, projector


def _check_config(cfg: AnalysisConfig, n_bins: int):
    if n_bins != cfg.n_bins:
        raise ConfigError(f"expected {cfg.n_bins} bins, got {n_bins}")


def cepstrum_to_envelope(c, cfg: AnalysisConfig = AnalysisConfig()) -> LogSpectrum:
    """Evaluate the warped cosine series on the linear FFT grid.

    Accepts a single coefficient vector or a (frames, order) matrix.
    """
    c = np.asarray(c, dtype=np.float64)
    if c.shape[-1] != cfg.order:
        raise ConfigError(f"expected {cfg.order} coefficients, got {c.shape[-1]}")
    basis, _ = _basis(cfg.fft_size, cfg.order, cfg.warp_alpha)
    return LogSpectrum(c @ basis.T, cfg.sample_rate)


def envelope_to_cepstrum(s: LogSpectrum, cfg: AnalysisConfig = AnalysisConfig()) -> np.ndarray:
    _check_config(cfg, s.n_bins)
    _, projector = _basis(cfg.fft_size, cfg.order, cfg.warp_alpha)
    return s.bins @ projector.T


def frame_count(num_samples: int, hop: int) -> int:
    return -(-num_samples // hop)


def frame_signal(x: np.ndarray, frame_len: int, hop: int) -> np.ndarray:
    """Centred frames (reflect padding); frame t is centred on sample t*hop."""
    n_frames = frame_count(x.size, hop)
    if n_frames == 0:
        return np.zeros((0, frame_len))
    half = frame_len // 2
    need = (n_frames - 1) * hop + frame_len
    right = need - half - x.size
    if x.size > 1:
        padded = np.pad(x, (half, max(right, 0)), mode="reflect")
    else:
        padded = np.pad(x, (half, max(right, 0)), mode="edge")
    return np.lib.stride_tricks.sliding_window_view(padded, frame_len)[::hop][:n_frames]


def log_magnitude_frames(x: np.ndarray, cfg: AnalysisConfig) -> np.ndarray:
    frames = frame_signal(x, cfg.frame_len, cfg.hop)
    window = get_window("hann", cfg.frame_len)
    spec = np.abs(np.fft.rfft(frames * window, n=cfg.fft_size, axis=-1))
    return np.log(np.maximum(spec, LOG_FLOOR))


def analyze(w: Waveform, cfg: AnalysisConfig = AnalysisConfig()) -> Cepstrogram:
    """Waveform -> (T, order) mel-cepstrogram with T = ceil(len / hop)."""
    if w.sample_rate != cfg.sample_rate:
        raise ConfigError(f"waveform is {w.sample_rate} Hz, analysis expects {cfg.sample_rate} Hz")
    logmag = log_magnitude_frames(w.samples, cfg)
    return Cepstrogram(envelope_to_cepstrum(LogSpectrum(logmag, cfg.sample_rate), cfg), cfg)


def save_cepstrogram(c: Cepstrogram, path) -> None:
    cfg = c.config
    header = MCEP_MAGIC + struct.pack("<5I", MCEP_VERSION, c.num_frames, cfg.order, cfg.hop, cfg.sample_rate)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(c.frames, dtype="<f4").tobytes())


def load_cepstrogram(path, base: AnalysisConfig = AnalysisConfig()) -> Cepstrogram:
    """Read an MCEP file. Fields absent from the header come from ``base``."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 24 or raw[:4] != MCEP_MAGIC:
        raise ValueError(f"{path}: not an MCEP file")
    version, n_frames, order, hop, rate = struct.unpack("<5I", raw[4:24])
    if version != MCEP_VERSION:
        raise ValueError(f"{path}: unsupported MCEP version {version}")
    body = np.frombuffer(raw[24:], dtype="<f4")
    if body.size != n_frames * order:
        raise ValueError(f"{path}: truncated MCEP body")
    cfg = replace(base, order=order, hop=hop, sample_rate=rate)
    return Cepstrogram(body.reshape(n_frames, order).astype(np.float64), cfg)
