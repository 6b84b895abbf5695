import json
import random
from pathlib import Path

import pytest

from streamvault.keys import SigningKey

GOLDEN = Path(__file__).parent / "golden"

# One human-readable verdict line per acceptance criterion, printed as a
# summary section at the end of the run (see tests/test_acceptance.py).
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def load_vectors(name: str) -> dict:
    return json.loads((GOLDEN / f"{name}.json").read_text())


@pytest.fixture
def rng():
    return random.Random(0xC0FFEE)


@pytest.fixture
def owner_key():
    return SigningKey.from_seed(bytes([1]) * 32)


@pytest.fixture
def other_key():
    return SigningKey.from_seed(bytes([2]) * 32)
