from __future__ import annotations

import shutil
from pathlib import Path

import pytest

from ehrqa import fixtures
from ehrqa.embedding import HashEmbeddingBackend
from ehrqa.llm import ScriptedBackend
from ehrqa.notes import load_notes
from ehrqa.pipeline import Runtime

REPO_ROOT = Path(__file__).resolve().parents[1]
FIXTURES_DIR = REPO_ROOT / "fixtures"


@pytest.fixture(scope="session", autouse=True)
def _fixtures_present():
    import os

    os.environ["EHRQA_FIXTURES_DIR"] = str(FIXTURES_DIR)
    fixtures.ensure_fixtures(FIXTURES_DIR)


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES_DIR


@pytest.fixture()
def mimic_db(fixtures_dir) -> Path:
    return fixtures_dir / fixtures.MIMIC_DB


@pytest.fixture()
def mimic_db_copy(mimic_db, tmp_path) -> Path:
    """Private copy for tests that alter the schema."""
    target = tmp_path / "mimic_demo.db"
    shutil.copyfile(mimic_db, target)
    return target


@pytest.fixture()
def scripted_backend(fixtures_dir) -> ScriptedBackend:
    return ScriptedBackend.from_file(fixtures_dir / fixtures.SCRIPT_FILE, cost_per_1k_tokens=0.002)


@pytest.fixture()
def fixture_runtime(mimic_db, fixtures_dir, scripted_backend) -> Runtime:
    return Runtime(
        db_path=mimic_db,
        profile="fixture",
        llm_backend=scripted_backend,
        embed_backend=HashEmbeddingBackend(64),
        notes=load_notes(fixtures_dir / fixtures.NOTES_FILE),
        deterministic_timing=True,
    )


def make_runtime(db_path: Path, backend, notes_path: Path | None = None, **kwargs) -> Runtime:
    notes = load_notes(notes_path) if notes_path is not None and notes_path.exists() else []
    defaults = dict(
        db_path=db_path,
        profile="fixture",
        llm_backend=backend,
        embed_backend=HashEmbeddingBackend(64),
        notes=notes,
        deterministic_timing=True,
    )
    defaults.update(kwargs)
    return Runtime(**defaults)
