"""Objective measures: mel-cepstral distortion, phonation, spectral tilt."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_toeplitz
from scipy.signal import get_window, lfilter, welch

from .audio_io import Waveform
from .spectral import Cepstrogram, LogSpectrum

MCD_SCALE = 10.0 / np.log(10.0)


class MetricError(ValueError):
    pass


def mcd(a: Cepstrogram, b: Cepstrogram, path=None) -> float:
    """Mean mel-cepstral distortion in dB over paired frames, c0 excluded.

    ``path`` is an AlignmentPath or an (N, 2) array of frame index pairs; when
    omitted the sequences must have equal length and are paired in time.
    """
    fa, fb = a.frames, b.frames
    if fa.shape[1] != fb.shape[1]:
        raise MetricError("feature order mismatch")
    if path is None:
        if fa.shape[0] != fb.shape[0]:
            raise MetricError("sequences differ in length; an alignment path is required")
        ia = ib = np.arange(fa.shape[0])
    else:
        pairs = np.asarray(getattr(path, "pairs", path), dtype=np.int64).reshape(-1, 2)
        ia, ib = pairs[:, 0], pairs[:, 1]
    if ia.size == 0:
        raise MetricError("no paired frames")
    diff = fa[ia, 1:] - fb[ib, 1:]
    return float(np.mean(MCD_SCALE * np.sqrt(2.0 * np.sum(diff**2, axis=1))))


def _whiten(frames: np.ndarray, order: int, floor: float) -> np.ndarray:
    """Per-frame LPC inverse filtering with a white-noise floor on r(0).

    Removes formant ringing so that only source periodicity survives; the
    floor keeps a pure tone from being predicted away entirely.
    """
    n = frames.shape[1]
    win = get_window("hann", n)
    nfft = 1 << int(np.ceil(np.log2(2 * n)))
    r = np.fft.irfft(np.abs(np.fft.rfft(frames * win, n=nfft, axis=1)) ** 2, n=nfft, axis=1)[:, : order + 1]
    out = np.empty((frames.shape[0], n - order))
    for i, (f, ri) in enumerate(zip(frames, r)):
        ri = ri.copy()
        ri[0] *= 1.0 + floor
        a = solve_toeplitz(ri[:-1], ri[1:])
        out[i] = lfilter(np.r_[1.0, -a], [1.0], f)[order:]
    return out


def voicing_score(
    w: Waveform, frame_ms: float = 40.0, fmin: float = 60.0, fmax: float = 400.0, lpc_floor: float = 0.01
) -> float:
    """Mean peak normalised autocorrelation over the louder half of 40 ms frames.

    Frames overlap by half and are LPC-whitened first. Lags cover
    1/fmax..1/fmin (2.5-16.7 ms). Near 1 for periodic signals, near 0.1 for
    white or resonance-coloured noise.
    """
    sr = w.sample_rate
    x = w.samples
    if x.size < int(0.1 * sr):
        raise MetricError("voicing_score needs at least 100 ms of audio")
    n = int(round(frame_ms * 1e-3 * sr))
    hop = n // 2
    frames = np.lib.stride_tricks.sliding_window_view(x, n)[::hop]
    frames = frames - frames.mean(axis=1, keepdims=True)
    energy = np.sum(frames**2, axis=1)
    frames = frames[(energy >= np.median(energy)) & (energy > 0)]
    if frames.shape[0] == 0:
        return 0.0
    order = max(2, int(round(sr / 1000)))
    frames = _whiten(frames, order, lpc_floor)
    m = frames.shape[1]
    lo = int(np.floor(sr / fmax))
    hi = min(int(np.ceil(sr / fmin)), m - 2)
    nfft = 1 << int(np.ceil(np.log2(2 * m)))
    acf = np.fft.irfft(np.abs(np.fft.rfft(frames, n=nfft, axis=1)) ** 2, n=nfft, axis=1)[:, : hi + 1]
    # energies of the overlapping head x[:m-lag] and tail x[lag:]
    cums = np.cumsum(frames**2, axis=1)
    lags = np.arange(lo, hi + 1)
    head = cums[:, m - lags - 1]
    tail = cums[:, -1:] - cums[:, lags - 1]
    r = acf[:, lo : hi + 1] / np.sqrt(np.maximum(head * tail, 1e-30))
    return float(np.clip(np.mean(np.max(r, axis=1)), 0.0, 1.0))


def spectral_tilt(s: LogSpectrum, fmin: float = 100.0, fmax: float = 8000.0) -> float:
    """Least-squares slope of the dB spectrum against log2 frequency (dB/octave)."""
    f = s.frequencies()
    sel = (f >= fmin) & (f <= fmax)
    db = MCD_SCALE * 2.0 * s.bins[..., sel]
    x = np.log2(f[sel])
    xc = x - x.mean()
    slope = (db - db.mean(axis=-1, keepdims=True)) @ xc / np.dot(xc, xc)
    return float(slope) if np.ndim(slope) == 0 else slope


def third_octave_levels(w: Waveform, fmin: float = 100.0, fmax: float = 10000.0):
    """Long-term average level (dB) in 1/3-octave bands; returns (centres, levels)."""
    f, p = welch(w.samples, fs=w.sample_rate, nperseg=2048)
    centres = 1000.0 * 2.0 ** (np.arange(-30, 31) / 3.0)
    centres = centres[(centres >= fmin) & (centres <= fmax)]
    levels = []
    for fc in centres:
        sel = (f >= fc * 2 ** (-1 / 6)) & (f < fc * 2 ** (1 / 6))
        levels.append(10.0 * np.log10(np.mean(p[sel]) + 1e-30))
    return centres, np.array(levels)


@dataclass
class EvalReport:
    rows: list = field(default_factory=list)

    def add(self, utterance: str, system: str, mcd_db: float, voicing: float, tilt: float):
        self.rows.append(
            {"utterance": utterance, "system": system, "mcd_db": mcd_db, "voicing": voicing, "tilt_db_per_octave": tilt}
        )

    def systems(self) -> list[str]:
        seen = []
        for r in self.rows:
            if r["system"] not in seen:
                seen.append(r["system"])
        return seen

    def aggregate(self) -> dict:
        out = {}
        for name in self.systems():
            rows = [r for r in self.rows if r["system"] == name]
            out[name] = {
                key: (float(np.mean([r[key] for r in rows])), float(np.std([r[key] for r in rows])))
                for key in ("mcd_db", "voicing", "tilt_db_per_octave")
            }
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["utterance", "system", "mcd_db", "voicing", "tilt_db_per_octave"])
        for r in self.rows:
            writer.writerow(
                [r["utterance"], r["system"], f"{r['mcd_db']:.4f}", f"{r['voicing']:.4f}", f"{r['tilt_db_per_octave']:.4f}"]
            )
        return buf.getvalue()

    def to_markdown(self) -> str:
        agg = self.aggregate()
        names = list(agg)
        lines = ["| metric | " + " | ".join(names) + " |", "|---|" + "---|" * len(names)]
        for key, label in (("mcd_db", "MCD (dB)"), ("voicing", "voicing"), ("tilt_db_per_octave", "tilt (dB/oct)")):
            cells = [f"{agg[n][key][0]:.3f} ± {agg[n][key][1]:.3f}" for n in names]
            lines.append(f"| {label} | " + " | ".join(cells) + " |")
        return "\n".join(lines) + "\n"
