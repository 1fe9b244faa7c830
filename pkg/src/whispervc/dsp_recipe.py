"""Rule-based normal-to-whisper conversion on the spectral envelope.

Three edits are applied to every frame's log envelope before unvoiced
resynthesis: subtract a Liljencrants-Fant glottal pulse spectrum, warp the
frequency axis so F1 moves up by about 100 Hz, and smooth the log spectrum
with a 400 Hz triangular kernel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import convolve1d
from scipy.optimize import brentq

from .audio_io import Waveform
from .spectral import (
    LOG_FLOOR,
    AnalysisConfig,
    Cepstrogram,
    LogSpectrum,
    analyze,
    cepstrum_to_envelope,
    envelope_to_cepstrum,
)
from .vocoder import SynthesisConfig, synthesize

# modal LF shape
LF_RA = 0.01
LF_RK = 0.34
LF_RG = 1.0
DEFAULT_F0_REF = 150.0
DEFAULT_WIDTH_HZ = 400.0
OVERSAMPLE = 16


class DimensionError(ValueError):
    pass


@dataclass(frozen=True)
class GlottalTemplate:
    bins: np.ndarray
    sample_rate: int

    def as_spectrum(self) -> LogSpectrum:
        return LogSpectrum(self.bins, self.sample_rate)


@dataclass(frozen=True)
class WarpAnchors:
    breakpoints: tuple

    def __post_init__(self):
        pts = np.asarray(self.breakpoints, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
            raise ValueError("anchors must be a list of (input_hz, output_hz) pairs")
        if np.any(np.diff(pts[:, 0]) <= 0) or np.any(np.diff(pts[:, 1]) <= 0):
            raise ValueError("anchors must be strictly increasing in both coordinates")
        if pts[0, 0] != 0 or pts[0, 1] != 0 or pts[-1, 0] != pts[-1, 1]:
            raise ValueError("anchors must start at (0, 0) and end at (nyquist, nyquist)")
        object.__setattr__(self, "breakpoints", tuple(map(tuple, pts.tolist())))

    @property
    def nyquist(self) -> float:
        return self.breakpoints[-1][0]

    @classmethod
    def default(cls, nyquist: float) -> "WarpAnchors":
        return cls(((0, 0), (300, 350), (400, 500), (900, 1000), (1400, 1400), (nyquist, nyquist)))

    @classmethod
    def identity(cls, nyquist: float) -> "WarpAnchors":
        return cls(((0, 0), (nyquist, nyquist)))


@dataclass(frozen=True)
class DspParams:
    f0_ref: float = DEFAULT_F0_REF
    width_hz: float = DEFAULT_WIDTH_HZ
    anchors: WarpAnchors | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "DspParams":
        anchors = d.get("anchors")
        return cls(
            f0_ref=float(d.get("f0_ref", DEFAULT_F0_REF)),
            width_hz=float(d.get("width_hz", DEFAULT_WIDTH_HZ)),
            anchors=WarpAnchors(tuple(map(tuple, anchors))) if anchors else None,
        )


def lf_pulse(f0: float, sample_rate: int, ra=LF_RA, rk=LF_RK, rg=LF_RG) -> np.ndarray:
    """One period of the LF glottal flow derivative, excitation peak Ee = 1."""
    t0 = 1.0 / f0
    tp = t0 / (2.0 * rg)
    te = tp * (1.0 + rk)
    ta = ra * t0
    tc = t0
    wg = np.pi / tp
    span = tc - te

    eps = brentq(lambda e: e * ta - 1.0 + np.exp(-e * span), 1e-3 / ta, 10.0 / ta)
    ret_area = -(1.0 / (eps * ta)) * ((1.0 - np.exp(-eps * span)) / eps - span * np.exp(-eps * span))

    def open_area(a):
        e0 = -1.0 / (np.exp(a * te) * np.sin(wg * te))
        integral = (np.exp(a * te) * (a * np.sin(wg * te) - wg * np.cos(wg * te)) + wg) / (a * a + wg * wg)
        return e0 * integral

    # the open-phase area falls monotonically with the growth rate a
    lo, hi = -wg, wg
    while open_area(lo) + ret_area < 0:
        lo *= 2
    while open_area(hi) + ret_area > 0:
        hi *= 2
    a = brentq(lambda a: open_area(a) + ret_area, lo, hi)
    e0 = -1.0 / (np.exp(a * te) * np.sin(wg * te))

    t = np.arange(int(round(sample_rate * t0))) / sample_rate
    open_phase = e0 * np.exp(a * t) * np.sin(wg * t)
    return_phase = -(1.0 / (eps * ta)) * (np.exp(-eps * (t - te)) - np.exp(-eps * span))
    return np.where(t <= te, open_phase, return_phase)


def glottal_template(cfg: AnalysisConfig = AnalysisConfig(), f0_ref: float = DEFAULT_F0_REF) -> GlottalTemplate:
    """Smoothed, peak-normalised log spectrum of one LF pulse.

    Below the spectral peak the template is held at 0: the zero-area pulse has
    a DC null that is not part of the coloring to be removed.
    """
    if not 50.0 <= f0_ref <= 400.0:
        raise ValueError("f0_ref must lie in [50, 400] Hz")
    # oversampled so the short return phase is resolved and not aliased
    pulse = lf_pulse(f0_ref, cfg.sample_rate * OVERSAMPLE)
    mag = np.abs(np.fft.rfft(pulse, n=cfg.fft_size * OVERSAMPLE))[: cfg.n_bins]
    logmag = np.log(np.maximum(mag, LOG_FLOOR))
    smooth = broaden_formants(LogSpectrum(logmag, cfg.sample_rate), DEFAULT_WIDTH_HZ).bins
    peak = int(np.argmax(smooth))
    smooth[:peak] = smooth[peak]
    return GlottalTemplate(smooth - smooth[peak], cfg.sample_rate)


def remove_glottal_shaping(s: LogSpectrum, t: GlottalTemplate) -> LogSpectrum:
    if s.n_bins != t.bins.shape[-1]:
        raise DimensionError(f"spectrum has {s.n_bins} bins, template has {t.bins.shape[-1]}")
    return LogSpectrum(s.bins - t.bins, s.sample_rate)


def warp_formant1(s: LogSpectrum, anchors: WarpAnchors) -> LogSpectrum:
    """Resample the envelope along the piecewise-linear map: out(f) = in(m^-1(f))."""
    pts = np.asarray(anchors.breakpoints)
    f = s.frequencies()
    if not np.isclose(anchors.nyquist, f[-1]):
        raise ValueError(f"anchors end at {anchors.nyquist} Hz, spectrum Nyquist is {f[-1]} Hz")
    src = np.interp(f, pts[:, 1], pts[:, 0])
    # fractional bin positions for linear interpolation
    pos = src / (f[1] - f[0])
    i0 = np.clip(np.floor(pos).astype(int), 0, f.size - 2)
    frac = pos - i0
    bins = s.bins
    out = bins[..., i0] * (1.0 - frac) + bins[..., i0 + 1] * frac
    return LogSpectrum(out, s.sample_rate)


def triangular_kernel(width_hz: float, bin_hz: float) -> np.ndarray:
    half = 0.5 * width_hz / bin_hz
    k = np.arange(-int(np.ceil(half)) + 1, int(np.ceil(half)))
    w = np.maximum(0.0, 1.0 - np.abs(k) / half)
    return w / w.sum()


def broaden_formants(s: LogSpectrum, width_hz: float = DEFAULT_WIDTH_HZ) -> LogSpectrum:
    """Moving average of the log spectrum with a unit-area triangle ``width_hz`` wide."""
    if not width_hz > 0:
        raise ValueError("width_hz must be positive")
    bin_hz = s.sample_rate / 2.0 / (s.n_bins - 1)
    kernel = triangular_kernel(width_hz, bin_hz)
    return LogSpectrum(convolve1d(s.bins, kernel, axis=-1, mode="nearest"), s.sample_rate)


def dsp_cepstrogram(c: Cepstrogram, params: DspParams = DspParams()) -> Cepstrogram:
    """Apply the three envelope edits frame by frame; c0 is kept from the input."""
    cfg = c.config
    template = glottal_template(cfg, params.f0_ref)
    anchors = params.anchors or WarpAnchors.default(cfg.sample_rate / 2.0)
    env = cepstrum_to_envelope(c.frames, cfg)
    env = remove_glottal_shaping(env, template)
    env = warp_formant1(env, anchors)
    env = broaden_formants(env, params.width_hz)
    out = envelope_to_cepstrum(env, cfg)
    out[:, 0] = c.frames[:, 0]
    return Cepstrogram(out, cfg)


def dsp_convert(
    w: Waveform,
    cfg_a: AnalysisConfig = AnalysisConfig(),
    cfg_s: SynthesisConfig = SynthesisConfig(),
    params: DspParams = DspParams(),
) -> Waveform:
    return synthesize(dsp_cepstrogram(analyze(w, cfg_a), params), cfg_s)
