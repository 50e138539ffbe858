"""Bundled datasets for tests and quick-start runs."""

from pathlib import Path

FIXTURE_DIR = Path(__file__).resolve().parent


def fixture_path(name: str) -> Path:
    path = FIXTURE_DIR / name
    if not path.exists():
        raise FileNotFoundError(f"no bundled fixture named {name!r}")
    return path
