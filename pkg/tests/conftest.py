"""Shared fixtures."""

import tempfile
from pathlib import Path

import pytest

from bandlift.cache import reset_degradation_cache
from bandlift.config import load_preset, reset_config


@pytest.fixture
def temp_dir():
    """Create temporary directory for test files."""
    with tempfile.TemporaryDirectory() as tmp_dir:
        yield Path(tmp_dir)


@pytest.fixture
def micro_config():
    return load_preset("micro")


@pytest.fixture(autouse=True)
def isolated_runtime_config(monkeypatch, tmp_path):
    """Point every runtime directory at a per-test location."""
    monkeypatch.setenv("BANDLIFT_DATA_DIR", str(tmp_path / "data"))
    monkeypatch.setenv("BANDLIFT_RUNS_DIR", str(tmp_path / "runs"))
    monkeypatch.setenv("BANDLIFT_CACHE_DIR", str(tmp_path / "cache"))
    monkeypatch.setenv("BANDLIFT_EXPORTS_DIR", str(tmp_path / "exports"))
    monkeypatch.setenv("BANDLIFT_DEVICE", "cpu")
    reset_config()
    reset_degradation_cache()
    yield
    reset_degradation_cache()
    reset_config()
