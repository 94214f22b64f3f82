import json
import sys
from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"
CORPUS = FIXTURES / "corpus"
sys.path.insert(0, str(FIXTURES))

import fixture_repo  # noqa: E402


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def corpus_dir() -> Path:
    return CORPUS


@pytest.fixture(scope="session")
def manifest() -> dict:
    return json.loads((FIXTURES / "fixture_repo_manifest.json").read_text())


@pytest.fixture(scope="session")
def bank_repo(tmp_path_factory):
    """The scripted fixture repository; yields (path, tag -> commit id)."""
    root = tmp_path_factory.mktemp("bankrepo")
    tags = fixture_repo.build(root)
    return root, tags


@pytest.fixture(scope="session")
def bank_issues(tmp_path_factory, manifest) -> Path:
    path = tmp_path_factory.mktemp("issues") / "issues.ndjson"
    path.write_text("".join(json.dumps(rec) + "\n" for rec in manifest["issues"]))
    return path


VERDICTS: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)
