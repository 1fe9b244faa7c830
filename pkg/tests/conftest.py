import json
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from whispervc.corpus import load_manifest, split  # noqa: E402
from whispervc.synthetic import make_speakers, write_corpus  # noqa: E402

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def frozen():
    return json.loads((DATA / "frozen_oracles.json").read_text())


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """2 male + 1 female speaker, 10 parallel utterances each (8/1/1 split)."""
    root = tmp_path_factory.mktemp("small_corpus")
    path = write_corpus(root, make_speakers(2, 1, seed=3), 10)
    return path, load_manifest(path)


@pytest.fixture(scope="session")
def corpus(tmp_path_factory):
    """2 male + 2 female speakers, 50 parallel utterances each (40/5/5 split)."""
    root = tmp_path_factory.mktemp("corpus")
    path = write_corpus(root, make_speakers(2, 2, seed=0), 50)
    manifest = load_manifest(path)
    return path, manifest, split(manifest, seed=0)


ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """Record one acceptance verdict; FAIL also fails the test."""
    lines = request.config.stash.setdefault(ACCEPTANCE, [])

    def record(n, ok, detail, finding=False):
        verdict = "PASS" if ok else ("FINDING" if finding else "FAIL")
        line = f"criterion {n:2d}: {verdict}  {detail}"
        lines.append((n, line))
        print(line)
        if not finding:
            assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
