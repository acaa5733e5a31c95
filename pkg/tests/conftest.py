"""Shared fixtures: paths to the checked-in data files and small helpers."""

from __future__ import annotations

import sys
from pathlib import Path

import pytest

TESTS_DIR = Path(__file__).parent
DATA_DIR = TESTS_DIR / "data"

# Make the oracles module importable regardless of rootdir configuration.
if str(TESTS_DIR) not in sys.path:
    sys.path.insert(0, str(TESTS_DIR))


@pytest.fixture(scope="session")
def captions_path() -> Path:
    return DATA_DIR / "captions_20.jsonl"


@pytest.fixture(scope="session")
def vqa_small_path() -> Path:
    return DATA_DIR / "vqa_small.jsonl"
