import sys
from pathlib import Path

import pytest

TESTS = Path(__file__).parent
sys.path.insert(0, str(TESTS))

GOLDEN = TESTS / "fixtures" / "golden"


@pytest.fixture(scope="session")
def golden_dir() -> Path:
    return GOLDEN


@pytest.fixture(scope="session")
def golden_sources() -> dict[str, str]:
    return {
        "setup": (GOLDEN / "setup.py").read_text(),
        "jobserver": (GOLDEN / "scripts" / "jobserver_exec.py").read_text(),
        "godot": (GOLDEN / "methods.py").read_text(),
    }
