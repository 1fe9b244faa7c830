"""Silence trimming, DTW and iterative alignment of parallel utterances."""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numba
import numpy as np
from scipy.spatial.distance import cdist

from .spectral import LOG_FLOOR, Cepstrogram

log = logging.getLogger(__name__)

SILENCE_DB = 40.0
SILENCE_NATS = SILENCE_DB / 20.0 * np.log(10.0)  # c0 is a natural-log amplitude
ALGN_MAGIC = b"ALGN"
ALGN_VERSION = 1

# backtracking codes, in tie-break preference order
_DIAG, _DOWN, _RIGHT = 0, 1, 2


class AlignmentError(ValueError):
    pass


@dataclass
class AlignmentPath:
    pairs: np.ndarray
    total_cost: float
    local_costs: np.ndarray | None = None

    def __post_init__(self):
        self.pairs = np.asarray(self.pairs, dtype=np.int64).reshape(-1, 2)

    def __len__(self):
        return self.pairs.shape[0]


@dataclass
class AlignedPairSet:
    """Paired frames: ``rows[:, :order]`` source, ``rows[:, order:]`` target."""

    rows: np.ndarray
    utt_index: np.ndarray
    src_index: np.ndarray
    tgt_index: np.ndarray
    utterances: list = field(default_factory=list)

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.float64)
        self.utt_index = np.asarray(self.utt_index, dtype=np.int64)
        self.src_index = np.asarray(self.src_index, dtype=np.int64)
        self.tgt_index = np.asarray(self.tgt_index, dtype=np.int64)

    def __len__(self):
        return self.rows.shape[0]

    @property
    def order(self) -> int:
        return self.rows.shape[1] // 2

    @property
    def source(self) -> np.ndarray:
        return self.rows[:, : self.order]

    @property
    def target(self) -> np.ndarray:
        return self.rows[:, self.order :]

    def segments(self):
        """Yield (utterance id, row slice) for each utterance in order."""
        if len(self) == 0:
            return
        starts = np.flatnonzero(np.r_[True, np.diff(self.utt_index) != 0])
        ends = np.r_[starts[1:], len(self)]
        for s, e in zip(starts, ends):
            yield self.utterances[self.utt_index[s]], slice(s, e)

    @classmethod
    def empty(cls, order: int) -> "AlignedPairSet":
        z = np.zeros(0, dtype=np.int64)
        return cls(np.zeros((0, 2 * order)), z, z, z, [])

    @classmethod
    def concatenate(cls, sets: Sequence["AlignedPairSet"]) -> "AlignedPairSet":
        sets = [s for s in sets if len(s)]
        if not sets:
            raise AlignmentError("nothing to concatenate")
        utterances, utt_index = [], []
        for s in sets:
            utt_index.append(s.utt_index + len(utterances))
            utterances.extend(s.utterances)
        return cls(
            np.concatenate([s.rows for s in sets]),
            np.concatenate(utt_index),
            np.concatenate([s.src_index for s in sets]),
            np.concatenate([s.tgt_index for s in sets]),
            utterances,
        )


def trim_silence(c: Cepstrogram, margin_frames: int = 5) -> tuple[Cepstrogram, int]:
    """Drop leading/trailing frames more than 40 dB below the loudest frame."""
    if margin_frames < 0:
        raise ValueError("margin_frames must be non-negative")
    c0 = c.frames[:, 0]
    if c0.size == 0:
        raise AlignmentError("empty utterance")
    if c0.max() <= np.log(LOG_FLOOR) + 1e-6:
        raise AlignmentError("utterance is entirely silent")
    loud = np.flatnonzero(c0 >= c0.max() - SILENCE_NATS)
    first, last = loud[0], loud[-1]
    start = max(0, first - margin_frames)
    stop = min(c0.size, last + 1 + margin_frames)
    return Cepstrogram(c.frames[start:stop].copy(), c.config), int(start)


@numba.njit(cache=True)
def _dtw_kernel(dist):
    ns, nt = dist.shape
    acc = np.empty((ns, nt))
    move = np.zeros((ns, nt), dtype=np.int8)
    acc[0, 0] = dist[0, 0]
    for j in range(1, nt):
        acc[0, j] = acc[0, j - 1] + dist[0, j]
        move[0, j] = _RIGHT
    for i in range(1, ns):
        acc[i, 0] = acc[i - 1, 0] + dist[i, 0]
        move[i, 0] = _DOWN
        for j in range(1, nt):
            best = acc[i - 1, j - 1]
            m = _DIAG
            if acc[i - 1, j] < best:
                best = acc[i - 1, j]
                m = _DOWN
            if acc[i, j - 1] < best:
                best = acc[i, j - 1]
                m = _RIGHT
            acc[i, j] = best + dist[i, j]
            move[i, j] = m
    return acc, move


def frame_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Euclidean distances between rows of ``a`` and ``b`` on c1 and above."""
    return cdist(a[:, 1:], b[:, 1:])


def dtw(src: Cepstrogram, tgt: Cepstrogram) -> AlignmentPath:
    """Minimum-cost monotone path with steps (1,1), (1,0), (0,1); c0 is ignored."""
    fs = src.frames if isinstance(src, Cepstrogram) else np.asarray(src)
    ft = tgt.frames if isinstance(tgt, Cepstrogram) else np.asarray(tgt)
    if fs.shape[0] == 0 or ft.shape[0] == 0:
        raise AlignmentError("dtw needs non-empty sequences")
    dist = frame_distances(fs, ft)
    acc, move = _dtw_kernel(dist)
    i, j = fs.shape[0] - 1, ft.shape[0] - 1
    pairs = [(i, j)]
    while i > 0 or j > 0:
        m = move[i, j]
        if m == _DIAG:
            i, j = i - 1, j - 1
        elif m == _DOWN:
            i -= 1
        else:
            j -= 1
        pairs.append((i, j))
    pairs = np.array(pairs[::-1], dtype=np.int64)
    return AlignmentPath(pairs, float(acc[-1, -1]), dist[pairs[:, 0], pairs[:, 1]])


def pairs_from_path(
    utt_id: str, src: np.ndarray, tgt: np.ndarray, path: AlignmentPath, src_offset: int = 0, tgt_offset: int = 0
) -> AlignedPairSet:
    p = path.pairs
    rows = np.hstack([src[p[:, 0]], tgt[p[:, 1]]])
    return AlignedPairSet(rows, np.zeros(len(p), dtype=np.int64), p[:, 0] + src_offset, p[:, 1] + tgt_offset, [utt_id])


Converter = Callable[[Cepstrogram], Cepstrogram]
Trainer = Callable[[AlignedPairSet], Converter]


def iterative_align(
    corpus: Sequence[tuple[Cepstrogram, Cepstrogram]],
    rounds: int = 3,
    trainer: Trainer | None = None,
    ids: Sequence[str] | None = None,
    offsets: Sequence[tuple[int, int]] | None = None,
) -> AlignedPairSet:
    """Align parallel utterances, refining the paths with an interim conversion model.

    Round 1 aligns source to target directly. Each later round trains
    ``trainer`` on the current pairs, converts every source utterance, re-runs
    DTW between the converted source and the target, and takes the pairs from
    the original source frames along the new path.
    """
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    if not corpus:
        raise AlignmentError("empty corpus")
    if trainer is None:
        from .vc_dnn import interim_trainer

        trainer = interim_trainer
    ids = list(ids) if ids is not None else [f"utt{i:05d}" for i in range(len(corpus))]
    offsets = list(offsets) if offsets is not None else [(0, 0)] * len(corpus)

    def collect(paths):
        return AlignedPairSet.concatenate(
            [
                pairs_from_path(uid, s.frames, t.frames, p, *off)
                for uid, (s, t), p, off in zip(ids, corpus, paths, offsets)
            ]
        )

    paths = [dtw(s, t) for s, t in corpus]
    pairs = collect(paths)
    for r in range(1, rounds):
        convert = trainer(pairs)
        paths = [dtw(convert(s), t) for s, t in corpus]
        pairs = collect(paths)
        log.info("alignment round %d: %d pairs, mean cost %.4f", r + 1, len(pairs), np.mean([p.total_cost / len(p) for p in paths]))
    return pairs


def save_pairs(pairs: AlignedPairSet, path) -> None:
    """Binary rows plus a JSON sidecar (``<path>.json``) with provenance."""
    path = Path(path)
    n, cols = pairs.rows.shape
    with open(path, "wb") as fh:
        fh.write(ALGN_MAGIC + struct.pack("<3I", ALGN_VERSION, n, cols))
        fh.write(np.ascontiguousarray(pairs.rows, dtype="<f4").tobytes())
    sidecar = {
        "utterances": list(pairs.utterances),
        "utt_index": pairs.utt_index.tolist(),
        "src_index": pairs.src_index.tolist(),
        "tgt_index": pairs.tgt_index.tolist(),
    }
    Path(str(path) + ".json").write_text(json.dumps(sidecar))


def load_pairs(path) -> AlignedPairSet:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != ALGN_MAGIC:
        raise AlignmentError(f"{path}: not an ALGN file")
    version, n, cols = struct.unpack("<3I", raw[4:16])
    if version != ALGN_VERSION:
        raise AlignmentError(f"{path}: unsupported version {version}")
    rows = np.frombuffer(raw[16:], dtype="<f4").reshape(n, cols).astype(np.float64)
    meta = json.loads(Path(str(path) + ".json").read_text())
    return AlignedPairSet(rows, meta["utt_index"], meta["src_index"], meta["tgt_index"], meta["utterances"])
