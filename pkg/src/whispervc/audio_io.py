"""WAV reading/writing and band-limited resampling."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.io import wavfile
from scipy.signal import firwin, resample_poly

KAISER_BETA = 8.0
# sinc zero crossings kept on each side of the filter centre, at the lower rate
HALF_TAPS = 32


class AudioError(Exception):
    pass


class WavDecodeError(AudioError):
    pass


class UnsupportedFormatError(AudioError):
    pass


class WavWriteError(AudioError):
    pass


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        if int(self.sample_rate) <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        self.sample_rate = int(self.sample_rate)
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("samples must be finite")

    def __len__(self):
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


def read_wav(path) -> Waveform:
    """Decode a PCM16 or float32 RIFF/WAVE file to a mono waveform in [-1, 1]."""
    try:
        rate, data = wavfile.read(path)
    except FileNotFoundError:
        raise
    except ValueError as exc:
        msg = str(exc)
        if "Unknown wave file format" in msg or "not supported" in msg:
            raise UnsupportedFormatError(f"{path}: {msg}") from exc
        raise WavDecodeError(f"{path}: {msg}") from exc
    except Exception as exc:  # struct errors, truncated chunks
        raise WavDecodeError(f"{path}: {exc}") from exc

    if data.dtype == np.int16:
        x = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        x = data.astype(np.float64)
    else:
        raise UnsupportedFormatError(f"{path}: unsupported sample type {data.dtype}")
    if x.ndim == 2:
        x = x.mean(axis=1)
    if not np.all(np.isfinite(x)):
        raise WavDecodeError(f"{path}: non-finite samples")
    return Waveform(np.clip(x, -1.0, 1.0), rate)


def write_wav(w: Waveform, path) -> None:
    """Encode as 16-bit PCM mono; out-of-range samples are hard-clipped."""
    q = np.round(np.asarray(w.samples, dtype=np.float64) * 32768.0)
    q = np.clip(q, -32768, 32767).astype("<i2")
    try:
        wavfile.write(path, w.sample_rate, q)
    except OSError as exc:
        raise WavWriteError(f"{path}: {exc}") from exc


def resample(w: Waveform, target_rate: int) -> Waveform:
    """Kaiser-windowed sinc polyphase resampling to ``target_rate``."""
    target_rate = int(target_rate)
    if target_rate <= 0:
        raise ValueError("target_rate must be positive")
    if target_rate == w.sample_rate:
        return Waveform(w.samples.copy(), w.sample_rate)
    ratio = Fraction(target_rate, w.sample_rate)
    up, down = ratio.numerator, ratio.denominator
    if w.samples.size == 0:
        return Waveform(np.zeros(0), target_rate)
    h = _lowpass(up, down)
    y = resample_poly(w.samples, up, down, window=h)
    return Waveform(y, target_rate)


def _lowpass(up: int, down: int) -> np.ndarray:
    max_rate = max(up, down)
    numtaps = 2 * HALF_TAPS * max_rate + 1
    # resample_poly scales the taps by `up` itself
    return firwin(numtaps, 1.0 / max_rate, window=("kaiser", KAISER_BETA))
