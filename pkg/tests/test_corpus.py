import json
from collections import Counter

import pytest

from whispervc.corpus import (
    ManifestError,
    SelectionError,
    SplitAssignment,
    SplitError,
    largest_remainder,
    load_manifest,
    manifest_from_tree,
    select_training_set,
    split,
    trained_on,
)


def write_manifest(root, speakers, n_utts, touch=True, extra=()):
    """speakers: {name: gender}; audio files are empty placeholders."""
    entries = []
    for spk, gender in speakers.items():
        for k in range(n_utts if isinstance(n_utts, int) else n_utts[spk]):
            uid = f"{spk}_{k:03d}"
            for kind in ("n", "w"):
                if touch:
                    (root / f"{uid}_{kind}.wav").touch()
            entries.append({"id": uid, "speaker": spk, "gender": gender, "locale": "en", "normal_path": f"{uid}_n.wav", "whisper_path": f"{uid}_w.wav"})
    entries.extend(extra)
    path = root / "manifest.json"
    path.write_text(json.dumps({"dataset": "toy", "utterances": entries}))
    return path


def test_two_utterance_manifest(tmp_path):
    m = load_manifest(write_manifest(tmp_path, {"A": "male"}, 2))
    assert len(m) == 2 and m.dataset == "toy"
    assert m.utterances[0].normal_path == tmp_path / "A_000_n.wav"
    assert m.utterances[0].dataset == "toy"


def test_duplicate_id_named(tmp_path):
    dup = {"id": "A_000", "speaker": "A", "gender": "male", "normal_path": "A_000_n.wav", "whisper_path": "A_000_w.wav"}
    with pytest.raises(ManifestError, match="A_000"):
        load_manifest(write_manifest(tmp_path, {"A": "male"}, 2, extra=[dup]))


def test_missing_whisper_file_listed(tmp_path):
    path = write_manifest(tmp_path, {"A": "male"}, 3)
    (tmp_path / "A_001_w.wav").unlink()
    with pytest.raises(ManifestError, match="A_001"):
        load_manifest(path)


def test_parse_errors(tmp_path):
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(ManifestError):
        load_manifest(tmp_path / "bad.json")
    (tmp_path / "empty.json").write_text(json.dumps({"utterances": []}))
    with pytest.raises(ManifestError):
        load_manifest(tmp_path / "empty.json")
    with pytest.raises(ManifestError):
        load_manifest(write_manifest(tmp_path, {"A": "robot"}, 1))


def test_largest_remainder():
    assert largest_remainder(100, (0.8, 0.1, 0.1)) == [80, 10, 10]
    assert largest_remainder(10, (0.8, 0.1, 0.1)) == [8, 1, 1]
    assert largest_remainder(3, (0.8, 0.1, 0.1)) == [3, 0, 0]
    for n in range(3, 60):
        counts = largest_remainder(n, (0.8, 0.1, 0.1))
        assert sum(counts) == n
        assert all(abs(c - n * r) < 1 for c, r in zip(counts, (0.8, 0.1, 0.1)))


@pytest.mark.parametrize("n, expected", [(100, (80, 10, 10)), (10, (8, 1, 1))])
def test_split_sizes(tmp_path, n, expected):
    m = load_manifest(write_manifest(tmp_path, {"A": "male"}, n))
    counts = Counter(split(m, seed=0).partition.values())
    assert (counts["train"], counts["validation"], counts["test"]) == expected


def test_split_determinism_and_seed_dependence(tmp_path):
    m = load_manifest(write_manifest(tmp_path, {"A": "male", "B": "female"}, 20))
    base = split(m, seed=0).partition
    assert split(m, seed=0).partition == base
    assert any(split(m, seed=s).partition != base for s in range(1, 11))


def test_split_needs_three_per_speaker(tmp_path):
    m = load_manifest(write_manifest(tmp_path, {"A": "male", "B": "female"}, {"A": 5, "B": 2}))
    with pytest.raises(SplitError, match="B"):
        split(m)


def test_split_csv_roundtrip(tmp_path):
    m = load_manifest(write_manifest(tmp_path, {"A": "male"}, 10))
    s = split(m, seed=3)
    s.save_csv(tmp_path / "split.csv")
    assert SplitAssignment.load_csv(tmp_path / "split.csv").partition == s.partition


@pytest.fixture()
def big_manifest(tmp_path):
    speakers = {f"M{i:02d}": "male" for i in range(13)} | {f"F{i:02d}": "female" for i in range(12)}
    return load_manifest(write_manifest(tmp_path, speakers, 10))


def test_selection_modes(big_manifest):
    s = split(big_manifest, seed=1)
    train = set(s.ids("train"))
    sd = select_training_set(big_manifest, s, "SD", "F03")
    assert {u.speaker for u in sd} == {"F03"} and all(u.id in train for u in sd)
    excl = select_training_set(big_manifest, s, "Excl", "F03")
    assert "F03" not in {u.speaker for u in excl}
    female = select_training_set(big_manifest, s, "Female")
    assert len({u.speaker for u in female}) == 12 and all(u.gender == "female" for u in female)
    assert len({u.speaker for u in select_training_set(big_manifest, s, "Male")}) == 13


def test_selection_algebra_over_seeds(big_manifest):
    for seed in range(10):
        s = split(big_manifest, seed=seed)
        test_ids = set(s.ids("test")) | set(s.ids("validation"))
        assert sorted(s.partition) == sorted(u.id for u in big_manifest.utterances)
        everyone = {u.id for u in select_training_set(big_manifest, s, "All")}
        assert not everyone & test_ids
        for spk in ("M00", "F11"):
            sd = {u.id for u in select_training_set(big_manifest, s, "SD", spk)}
            excl = {u.id for u in select_training_set(big_manifest, s, "Excl", spk)}
            assert sd | excl == everyone and not sd & excl


def test_selection_errors(big_manifest):
    s = split(big_manifest)
    with pytest.raises(SelectionError):
        select_training_set(big_manifest, s, "SD")
    with pytest.raises(SelectionError):
        select_training_set(big_manifest, s, "SD", "nobody")
    with pytest.raises(SelectionError):
        select_training_set(big_manifest, s, "All", dataset_filter="other")
    with pytest.raises(SelectionError):
        select_training_set(big_manifest, s, "Gender")


def test_trained_on_descriptor(big_manifest):
    s = split(big_manifest)
    utts = select_training_set(big_manifest, s, "Excl", "F03")
    d = trained_on("Excl", utts, "F03")
    assert d["mode"] == "Excl" and "F03" not in d["speakers"] and len(d["speakers"]) == 24


def test_manifest_from_tree(tmp_path):
    for spk in ("M01", "F02"):
        for kind in ("NORMAL", "WHISPER"):
            (tmp_path / spk / kind).mkdir(parents=True)
        for stem in ("s1", "s2"):
            (tmp_path / spk / "NORMAL" / f"{stem}.wav").touch()
            (tmp_path / spk / "WHISPER" / f"{stem}.wav").touch()
    (tmp_path / "M01" / "NORMAL" / "orphan.wav").touch()
    doc = manifest_from_tree(tmp_path, dataset="wtimit-like")
    assert len(doc["utterances"]) == 4
    (tmp_path / "manifest.json").write_text(json.dumps(doc))
    m = load_manifest(tmp_path / "manifest.json")
    assert {u.gender for u in m.utterances} == {"male", "female"}
    (tmp_path / "X9" / "NORMAL").mkdir(parents=True)
    with pytest.raises(ManifestError):
        manifest_from_tree(tmp_path)
