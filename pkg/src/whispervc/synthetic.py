"""Formant-synthesised parallel normal/whispered utterances.

A small cascade formant synthesiser that renders the same segment sequence
twice: once with a pulse-train glottal source (normal speech) and once with
a turbulent noise source, raised F1 and wider bandwidths (whisper). Used to
build demo corpora and test fixtures when no recorded corpus is available.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np
from scipy.signal import lfilter

from .audio_io import Waveform, write_wav

SAMPLE_RATE = 24000
BLOCK = 120  # control-rate update, 5 ms at 24 kHz

# adult male reference formants (Hz), Peterson & Barney style averages
VOWELS = {
    "iy": (270, 2290, 3010),
    "ih": (390, 1990, 2550),
    "eh": (530, 1840, 2480),
    "ae": (660, 1720, 2410),
    "aa": (730, 1090, 2440),
    "ao": (570, 840, 2410),
    "uh": (440, 1020, 2240),
    "uw": (300, 870, 2240),
    "ah": (640, 1190, 2390),
    "er": (490, 1350, 1690),
}
FRICATIVES = {"s": (5500, 1500), "sh": (3200, 1200), "f": (7000, 3000)}


@dataclass(frozen=True)
class Speaker:
    name: str
    gender: str
    f0: float
    formant_scale: float
    whisper_f1_shift: float
    whisper_level: float
    seed: int


def make_speakers(n_male: int, n_female: int, seed: int = 0) -> list[Speaker]:
    rng = np.random.default_rng(seed)
    speakers = []
    for i in range(n_male + n_female):
        male = i < n_male
        gender = "male" if male else "female"
        name = f"{'M' if male else 'F'}{100 + i:03d}"
        speakers.append(
            Speaker(
                name=name,
                gender=gender,
                f0=float(rng.uniform(95, 135) if male else rng.uniform(180, 240)),
                formant_scale=float(rng.uniform(0.96, 1.04) * (1.0 if male else 1.16)),
                whisper_f1_shift=float(rng.uniform(110, 170)),
                whisper_level=float(rng.uniform(0.25, 0.4)),
                seed=int(rng.integers(1 << 30)),
            )
        )
    return speakers


def _segments(rng, n_min=5, n_max=9):
    names = list(VOWELS)
    segs = [("sil", rng.uniform(0.15, 0.3))]
    for _ in range(rng.integers(n_min, n_max + 1)):
        r = rng.random()
        if r < 0.2:
            segs.append((str(rng.choice(list(FRICATIVES))), rng.uniform(0.06, 0.12)))
        elif r < 0.27:
            segs.append(("gap", rng.uniform(0.04, 0.08)))
        else:
            segs.append((str(rng.choice(names)), rng.uniform(0.08, 0.2)))
    segs.append(("sil", rng.uniform(0.15, 0.3)))
    return segs


def _tracks(segs, speaker: Speaker, whisper: bool, stretch):
    """Per-block formant/bandwidth/amplitude targets with linear transitions."""
    f_rows, b_rows, voiced_amp, fric_amp, fric_fb = [], [], [], [], []
    last_vowel = VOWELS["ah"]
    for (name, dur), k in zip(segs, stretch):
        n = max(1, int(round(dur * k * SAMPLE_RATE / BLOCK)))
        if name in VOWELS:
            last_vowel = VOWELS[name]
        f = np.array(last_vowel + (3500.0,), dtype=float) * speaker.formant_scale
        b = np.array([60.0, 90.0, 140.0, 200.0])
        if whisper:
            f[0] += speaker.whisper_f1_shift
            f[1] += 60.0
            b = b * 1.6 + 60.0
        f_rows.append(np.tile(f, (n, 1)))
        b_rows.append(np.tile(b, (n, 1)))
        is_vowel = name in VOWELS
        voiced_amp.append(np.full(n, 1.0 if is_vowel else 0.0))
        fric_amp.append(np.full(n, 0.35 if name in FRICATIVES else 0.0))
        fb = FRICATIVES.get(name, (5000, 2000))
        fric_fb.append(np.tile(np.array(fb, dtype=float), (n, 1)))
    f = np.concatenate(f_rows)
    b = np.concatenate(b_rows)
    va = np.concatenate(voiced_amp)
    fa = np.concatenate(fric_amp)
    ffb = np.concatenate(fric_fb)
    smooth = np.ones(6) / 6.0  # 30 ms transitions
    f = np.stack([np.convolve(np.pad(col, 3, mode="edge"), smooth, mode="same")[3:-3] for col in f.T], axis=1)
    va = np.convolve(np.pad(va, 2, mode="edge"), np.ones(3) / 3, mode="same")[2:-2]
    fa = np.convolve(np.pad(fa, 2, mode="edge"), np.ones(3) / 3, mode="same")[2:-2]
    return f, b, va, fa, ffb


@numba.njit(cache=True)
def _filter_blocks(x, freqs, bws):
    """Time-varying cascade of unity-DC-gain second-order resonators, updated every block."""
    y = x.copy()
    n_blocks, n_res = freqs.shape
    for j in range(n_res):
        y1 = 0.0
        y2 = 0.0
        for t in range(n_blocks):
            r = np.exp(-np.pi * bws[t, j] / SAMPLE_RATE)
            a1 = -2.0 * r * np.cos(2.0 * np.pi * freqs[t, j] / SAMPLE_RATE)
            a2 = r * r
            g = 1.0 + a1 + a2
            for n in range(t * BLOCK, min((t + 1) * BLOCK, y.size)):
                v = g * y[n] - a1 * y1 - a2 * y2
                y2 = y1
                y1 = v
                y[n] = v
    return y


def _glottal_source(rng, n_samples, f0_track):
    """Impulse train with jitter through a -12 dB/oct glottal low-pass and lip radiation."""
    pulses = np.zeros(n_samples)
    t = 0.0
    while True:
        idx = int(t)
        if idx >= n_samples:
            break
        pulses[idx] = 1.0
        f0 = f0_track[min(idx // BLOCK, f0_track.size - 1)] * (1.0 + 0.01 * rng.standard_normal())
        t += SAMPLE_RATE / f0
    pole = np.exp(-2.0 * np.pi * 250.0 / SAMPLE_RATE)
    g = lfilter([1.0], [1.0, -2.0 * pole, pole * pole], pulses)
    g = np.diff(g, prepend=0.0)
    return g / (np.std(g) + 1e-12)


def render_pair(speaker: Speaker, utt_seed: int, noise_floor: float = 1e-4):
    """Render one parallel (normal, whisper) utterance pair for ``speaker``."""
    rng = np.random.default_rng([speaker.seed, utt_seed])
    segs = _segments(rng)
    normal_stretch = np.ones(len(segs))
    whisper_stretch = rng.uniform(0.85, 1.3, size=len(segs))
    waves = []
    for whisper, stretch in ((False, normal_stretch), (True, whisper_stretch)):
        f, b, va, fa, ffb = _tracks(segs, speaker, whisper, stretch)
        n = f.shape[0] * BLOCK
        f0 = speaker.f0 * np.linspace(1.08, 0.9, f.shape[0]) * (1 + 0.03 * np.sin(np.linspace(0, 3 * np.pi, f.shape[0])))
        if whisper:
            source = rng.standard_normal(n)
            source = lfilter([1.0, -0.5], [1.0], source)
            source /= np.std(source)
        else:
            source = _glottal_source(rng, n, f0) + 0.03 * rng.standard_normal(n)
        voiced = _filter_blocks(source * np.repeat(va, BLOCK), f, b)
        fric_src = rng.standard_normal(n) * np.repeat(fa, BLOCK)
        fric = _filter_blocks(fric_src, ffb[:, :1], ffb[:, 1:])
        x = voiced / (np.max(np.abs(voiced)) + 1e-12) + fric / (np.max(np.abs(fric)) + 1e-12) * 0.3
        peak = 0.5 * (speaker.whisper_level if whisper else 1.0)
        x = x / (np.max(np.abs(x)) + 1e-12) * peak
        x = x + noise_floor * rng.standard_normal(n)
        waves.append(Waveform(x, SAMPLE_RATE))
    return waves[0], waves[1]


def write_corpus(root, speakers: list[Speaker], n_utts: int, dataset: str = "synthetic") -> Path:
    """Write a ``speaker/{NORMAL,WHISPER}/*.wav`` tree plus ``manifest.json``; returns the manifest path."""
    root = Path(root)
    entries = []
    for spk in speakers:
        for d in ("NORMAL", "WHISPER"):
            (root / spk.name / d).mkdir(parents=True, exist_ok=True)
        for u in range(n_utts):
            stem = f"{spk.name}_{u:03d}"
            normal, whisper = render_pair(spk, u)
            write_wav(normal, root / spk.name / "NORMAL" / f"{stem}.wav")
            write_wav(whisper, root / spk.name / "WHISPER" / f"{stem}.wav")
            entries.append(
                {
                    "id": stem,
                    "speaker": spk.name,
                    "gender": spk.gender,
                    "locale": "synthetic",
                    "normal_path": f"{spk.name}/NORMAL/{stem}.wav",
                    "whisper_path": f"{spk.name}/WHISPER/{stem}.wav",
                }
            )
    manifest = root / "manifest.json"
    manifest.write_text(json.dumps({"dataset": dataset, "version": "1", "utterances": entries}, indent=2))
    return manifest
