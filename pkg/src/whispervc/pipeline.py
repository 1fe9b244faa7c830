"""End-to-end glue: feature loading, training-pair assembly, model I/O and evaluation."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .alignment import AlignedPairSet, dtw, iterative_align, trim_silence
from .audio_io import Waveform, read_wav, resample
from .corpus import Utterance
from .dsp_recipe import DspParams, dsp_cepstrogram
from .metrics import EvalReport, mcd, spectral_tilt, voicing_score
from .spectral import AnalysisConfig, Cepstrogram, analyze, cepstrum_to_envelope
from .vc_dnn import DNN_MAGIC, DnnHyperparams, DnnModel, convert_dnn, interim_trainer, load_dnn, train_dnn
from .vc_gmm import GMM_MAGIC, GmmModel, build_joint_vectors, convert_gmm, load_gmm, train_gmm
from .vocoder import SynthesisConfig, synthesize

log = logging.getLogger(__name__)


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class GmmSettings:
    K: int = 64
    tol: float = 1e-3
    max_iter: int = 200
    n_init: int = 10
    use_gv: bool = True


def load_waveform(path, cfg: AnalysisConfig) -> Waveform:
    w = read_wav(path)
    return resample(w, cfg.sample_rate) if w.sample_rate != cfg.sample_rate else w


def _map(fn: Callable, items: Sequence, jobs: int) -> list:
    """Ordered map; ``jobs > 1`` uses a process pool (results are identical)."""
    if jobs <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


class _PairLoader:
    def __init__(self, cfg: AnalysisConfig):
        self.cfg = cfg

    def __call__(self, u: Utterance):
        src = analyze(load_waveform(u.normal_path, self.cfg), self.cfg)
        tgt = analyze(load_waveform(u.whisper_path, self.cfg), self.cfg)
        (src_t, s0), (tgt_t, t0) = trim_silence(src), trim_silence(tgt)
        return src_t, tgt_t, (s0, t0)


def load_parallel_features(utts: Sequence[Utterance], cfg: AnalysisConfig, jobs: int = 1):
    """Trimmed (normal, whisper) cepstrogram pairs plus their trim offsets."""
    loaded = _map(_PairLoader(cfg), list(utts), jobs)
    return [(s, t) for s, t, _ in loaded], [off for _, _, off in loaded]


def training_pairs(
    utts: Sequence[Utterance], cfg: AnalysisConfig, rounds: int = 3, seed: int = 0, jobs: int = 1
) -> AlignedPairSet:
    corpus, offsets = load_parallel_features(utts, cfg, jobs)
    trainer = lambda p: interim_trainer(p, seed=seed)  # noqa: E731
    return iterative_align(corpus, rounds=rounds, trainer=trainer, ids=[u.id for u in utts], offsets=offsets)


def train_model(
    kind: str,
    train_utts: Sequence[Utterance],
    cfg: AnalysisConfig = AnalysisConfig(),
    seed: int = 0,
    rounds: int = 3,
    trained_on: dict | None = None,
    val_utts: Sequence[Utterance] = (),
    dnn: DnnHyperparams | None = None,
    gmm: GmmSettings = GmmSettings(),
    jobs: int = 1,
):
    pairs = training_pairs(train_utts, cfg, rounds, seed, jobs)
    log.info("training %s on %d aligned frames", kind, len(pairs))
    if kind == "gmm":
        return train_gmm(
            build_joint_vectors(pairs), gmm.K, gmm.tol, gmm.max_iter, seed, gmm.n_init, cfg, trained_on
        )
    if kind == "dnn":
        hp = dnn or DnnHyperparams(seed=seed)
        val = training_pairs(val_utts, cfg, 1, seed, jobs) if val_utts else None
        return train_dnn(pairs, hp, val, cfg, trained_on)
    raise ModelError(f"unknown model type {kind!r}")


def load_model(path):
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == GMM_MAGIC:
        return load_gmm(path)
    if magic == DNN_MAGIC:
        return load_dnn(path)
    raise ModelError(f"{path}: unrecognised model file")


def convert_cepstrogram(model, c: Cepstrogram, use_gv: bool = True) -> Cepstrogram:
    if model.config != c.config:
        raise ModelError(f"model was trained with {model.config}, input uses {c.config}")
    if isinstance(model, GmmModel):
        return convert_gmm(model, c, use_gv=use_gv)
    if isinstance(model, DnnModel):
        return convert_dnn(model, c)
    raise ModelError(f"unsupported model {type(model).__name__}")


def convert_waveform(model, w: Waveform, cfg_a: AnalysisConfig, cfg_s: SynthesisConfig, use_gv: bool = True) -> Waveform:
    return synthesize(convert_cepstrogram(model, analyze(w, cfg_a), use_gv), cfg_s)


def aligned_mcd(converted: Cepstrogram, reference: Cepstrogram) -> float:
    """MCD along the DTW path between the silence-trimmed sequences."""
    a, _ = trim_silence(converted)
    b, _ = trim_silence(reference)
    return mcd(a, b, dtw(a, b))


def mean_tilt(c: Cepstrogram) -> float:
    trimmed, _ = trim_silence(c)
    return float(np.mean(spectral_tilt(cepstrum_to_envelope(trimmed.frames, trimmed.config))))


BUILTIN_SYSTEMS = ("Oracle", "DSP", "Source")


class _SystemRunner:
    def __init__(self, systems: dict, cfg_a: AnalysisConfig, cfg_s: SynthesisConfig, dsp: DspParams, use_gv: bool):
        self.systems, self.cfg_a, self.cfg_s, self.dsp, self.use_gv = systems, cfg_a, cfg_s, dsp, use_gv
        self._models = {}

    def _model(self, path):
        if path not in self._models:
            self._models[path] = load_model(path)
        return self._models[path]

    def __call__(self, u: Utterance):
        normal = load_waveform(u.normal_path, self.cfg_a)
        whisper = load_waveform(u.whisper_path, self.cfg_a)
        ref = analyze(whisper, self.cfg_a)
        rows = []
        for name, spec in self.systems.items():
            if spec == "Oracle":
                out = synthesize(ref, self.cfg_s)
            elif spec == "DSP":
                out = synthesize(dsp_cepstrogram(analyze(normal, self.cfg_a), self.dsp), self.cfg_s)
            elif spec == "Source":
                out = normal
            else:
                out = convert_waveform(self._model(spec), normal, self.cfg_a, self.cfg_s, self.use_gv)
            feats = analyze(out, self.cfg_a)
            rows.append((u.id, name, aligned_mcd(feats, ref), voicing_score(out), mean_tilt(feats)))
        return rows


def evaluate(
    utts: Sequence[Utterance],
    systems: dict,
    cfg_a: AnalysisConfig = AnalysisConfig(),
    cfg_s: SynthesisConfig = SynthesisConfig(),
    dsp: DspParams = DspParams(),
    use_gv: bool = True,
    jobs: int = 1,
) -> EvalReport:
    """Score each system on each utterance against the analysed whisper recording.

    ``systems`` maps display names to a builtin (Oracle, DSP, Source) or a model path.
    """
    for name, spec in systems.items():
        if spec not in BUILTIN_SYSTEMS and not Path(spec).is_file():
            raise ModelError(f"system {name}: no such model file {spec}")
    report = EvalReport()
    for rows in _map(_SystemRunner(systems, cfg_a, cfg_s, dsp, use_gv), list(utts), jobs):
        for r in rows:
            report.add(*r)
    return report
