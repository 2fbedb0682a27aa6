import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from screenrl.embedding import EmbeddingConfig, StructuralLayoutEncoder  # noqa: E402
from screenrl.simenv import generate_app  # noqa: E402

# acceptance tests append "PASS ..." / "FAIL ..." lines here
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def structural():
    return StructuralLayoutEncoder(32)


@pytest.fixture(scope="session")
def config():
    return EmbeddingConfig()


@pytest.fixture(scope="session")
def app():
    return generate_app(3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
