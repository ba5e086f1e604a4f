import numpy as np
import pytest

from artcontext.config import SAMPLE_CONFIG
from artcontext.gateway import MockBackend
from artcontext.synthetic import make_corpus, write_corpus_files


@pytest.fixture(scope="session")
def small_corpus():
    return make_corpus(200, seed=3)


@pytest.fixture()
def mock(small_corpus):
    return MockBackend(small_corpus.profile)


@pytest.fixture()
def rng():
    return np.random.default_rng(20240611)


def small_config_text(per_century=8, n_trees=40):
    text = SAMPLE_CONFIG.replace("per_century: 100", f"per_century: {per_century}")
    text = text.replace("n_trees: 300", f"n_trees: {n_trees}")
    text = text.replace("min_support: 5", "min_support: 1")
    return text.replace("n: 100, seed: 0", "n: 5, seed: 0")


@pytest.fixture(scope="session")
def mock_tree(tmp_path_factory, small_corpus):
    """Corpus files plus a config on disk; shared, treat as read-only."""
    root = tmp_path_factory.mktemp("mocktree")
    write_corpus_files(small_corpus, root)
    (root / "config.yaml").write_text(small_config_text(), encoding="utf-8")
    return root


ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
