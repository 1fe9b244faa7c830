"""Parallel-corpus manifests, per-speaker splits and training-set selection."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

PARTITIONS = ("train", "validation", "test")
MODES = ("SD", "All", "Excl", "Male", "Female")
GENDERS = ("male", "female")


class ManifestError(ValueError):
    pass


class SplitError(ValueError):
    pass


class SelectionError(ValueError):
    pass


@dataclass(frozen=True)
class Utterance:
    id: str
    speaker: str
    gender: str
    locale: str
    dataset: str
    normal_path: Path
    whisper_path: Path


@dataclass
class Manifest:
    utterances: list
    dataset: str = ""
    version: str = ""

    def __len__(self):
        return len(self.utterances)

    def speakers(self) -> list[str]:
        return sorted({u.speaker for u in self.utterances})

    def by_id(self) -> dict:
        return {u.id: u for u in self.utterances}


@dataclass
class SplitAssignment:
    partition: dict
    seed: int = 0

    def ids(self, part: str) -> list[str]:
        return [k for k, v in self.partition.items() if v == part]

    def save_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["id", "partition"])
            for k, v in self.partition.items():
                w.writerow([k, v])

    @classmethod
    def load_csv(cls, path, seed: int = 0) -> "SplitAssignment":
        with open(path, newline="") as fh:
            return cls({row["id"]: row["partition"] for row in csv.DictReader(fh)}, seed)


def load_manifest(path) -> Manifest:
    """Parse and validate a JSON manifest; relative audio paths resolve against its directory."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestError(f"cannot parse manifest {path}: {exc}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("utterances"), list):
        raise ManifestError(f"{path}: expected an object with an 'utterances' list")
    base = path.parent
    dataset = str(doc.get("dataset", ""))
    utts, seen, missing = [], set(), []
    for i, e in enumerate(doc["utterances"]):
        try:
            uid, spk = str(e["id"]), str(e["speaker"])
            gender = str(e["gender"]).lower()
            normal, whisper = base / e["normal_path"], base / e["whisper_path"]
        except (KeyError, TypeError) as exc:
            raise ManifestError(f"{path}: utterance #{i} lacks field {exc}") from exc
        if uid in seen:
            raise ManifestError(f"{path}: duplicate utterance id {uid!r}")
        if gender not in GENDERS:
            raise ManifestError(f"{path}: utterance {uid!r} has gender {gender!r}")
        seen.add(uid)
        for p in (normal, whisper):
            if not p.is_file():
                missing.append(f"{uid}: {p}")
        utts.append(Utterance(uid, spk, gender, str(e.get("locale", "")), str(e.get("dataset", dataset)), normal, whisper))
    if missing:
        raise ManifestError(f"{path}: missing audio files:\n  " + "\n  ".join(missing))
    if not utts:
        raise ManifestError(f"{path}: manifest is empty")
    return Manifest(utts, dataset, str(doc.get("version", "")))


def largest_remainder(n: int, ratios) -> list[int]:
    """Integer counts summing to ``n``; leftovers go to the largest fractional parts, earlier first on ties."""
    ratios = np.asarray(ratios, dtype=np.float64)
    exact = n * ratios / ratios.sum()
    counts = np.floor(exact + 1e-9).astype(int)
    rem = exact - counts
    for i in sorted(range(len(ratios)), key=lambda i: (-rem[i], i))[: n - counts.sum()]:
        counts[i] += 1
    return counts.tolist()


def split(m: Manifest, ratios=(0.8, 0.1, 0.1), seed: int = 0) -> SplitAssignment:
    """Seeded per-speaker shuffle, then contiguous slices sized by largest-remainder rounding."""
    if len(ratios) != 3 or min(ratios) < 0 or sum(ratios) <= 0:
        raise SplitError("ratios must be three non-negative numbers")
    rng = np.random.default_rng(seed)
    by_spk: dict[str, list[str]] = {}
    for u in m.utterances:
        by_spk.setdefault(u.speaker, []).append(u.id)
    assignment = {}
    for spk in sorted(by_spk):
        ids = by_spk[spk]
        if len(ids) < 3:
            raise SplitError(f"speaker {spk!r} has {len(ids)} utterances; need at least 3")
        order = [ids[i] for i in rng.permutation(len(ids))]
        start = 0
        for part, n in zip(PARTITIONS, largest_remainder(len(ids), ratios)):
            for uid in order[start : start + n]:
                assignment[uid] = part
            start += n
    return SplitAssignment({u.id: assignment[u.id] for u in m.utterances}, seed)


def select_training_set(
    m: Manifest,
    s: SplitAssignment,
    mode: str,
    target_speaker: str | None = None,
    dataset_filter: str | None = None,
    partition: str = "train",
) -> list[Utterance]:
    """Utterances of ``partition`` (train by default) chosen by regime.

    SD keeps only the target speaker, Excl everyone else, All everyone,
    Male/Female one gender. ``dataset_filter`` restricts to one corpus.
    """
    if mode not in MODES:
        raise SelectionError(f"unknown mode {mode!r}; expected one of {MODES}")
    if mode in ("SD", "Excl") and not target_speaker:
        raise SelectionError(f"mode {mode} needs a target speaker")
    keep = {
        "SD": lambda u: u.speaker == target_speaker,
        "Excl": lambda u: u.speaker != target_speaker,
        "All": lambda u: True,
        "Male": lambda u: u.gender == "male",
        "Female": lambda u: u.gender == "female",
    }[mode]
    out = [
        u
        for u in m.utterances
        if s.partition.get(u.id) == partition and keep(u) and (dataset_filter is None or u.dataset == dataset_filter)
    ]
    if not out:
        raise SelectionError(f"no {partition} utterances for mode={mode} target={target_speaker} dataset={dataset_filter}")
    return out


def trained_on(mode: str, utts: list[Utterance], target_speaker: str | None = None, dataset_filter: str | None = None) -> dict:
    return {
        "mode": mode,
        "target_speaker": target_speaker,
        "dataset": dataset_filter,
        "speakers": sorted({u.speaker for u in utts}),
        "n_utterances": len(utts),
    }


def manifest_from_tree(root, dataset: str = "", genders: dict | None = None, locale: str = "") -> dict:
    """Build a manifest document from ``speaker/{NORMAL,WHISPER}/*.wav``, pairing files by stem.

    Gender comes from ``genders`` (speaker -> male/female) or, failing that,
    from an initial M/F in the speaker name.
    """
    root = Path(root)
    genders = genders or {}
    entries = []
    for spk_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        normal = {p.stem: p for p in (spk_dir / "NORMAL").glob("*.wav")}
        whisper = {p.stem: p for p in (spk_dir / "WHISPER").glob("*.wav")}
        spk = spk_dir.name
        gender = genders.get(spk) or {"m": "male", "f": "female"}.get(spk[:1].lower())
        if gender is None:
            raise ManifestError(f"cannot infer gender of speaker {spk!r}")
        for stem in sorted(normal.keys() & whisper.keys()):
            entries.append(
                {
                    "id": f"{spk}_{stem}" if not stem.startswith(spk) else stem,
                    "speaker": spk,
                    "gender": gender,
                    "locale": locale,
                    "normal_path": normal[stem].relative_to(root).as_posix(),
                    "whisper_path": whisper[stem].relative_to(root).as_posix(),
                }
            )
    return {"dataset": dataset, "version": "1", "utterances": entries}
