"""Shared pytest configuration."""

import sys
from pathlib import Path

import pytest

# Ensure the project root is on sys.path so `appliance` imports work
project_root = Path(__file__).resolve().parent.parent.parent
if str(project_root) not in sys.path:
    sys.path.insert(0, str(project_root))

from appliance.release.desk import make_release  # noqa: E402

MIRRORS = ["mirror0", "mirror1", "mirror2"]


@pytest.fixture(scope="module")
def release():
    """Two-key desk release: base 1.0, jdk 1.4, daemon 1.0."""
    return make_release(seed=7)


@pytest.fixture
def mirrors():
    return list(MIRRORS)
