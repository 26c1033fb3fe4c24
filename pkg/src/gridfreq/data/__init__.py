"""Bundled case and scenario files."""

from importlib import resources
from pathlib import Path


def case_path(name: str) -> Path:
    """Filesystem path of a bundled case file (without the .json suffix)."""
    p = resources.files(__package__) / "cases" / f"{name}.json"
    if not p.is_file():
        raise FileNotFoundError(f"no bundled case named {name!r}")
    return Path(str(p))


def scenario_path(name: str) -> Path:
    """Filesystem path of a bundled scenario file."""
    p = resources.files(__package__) / "scenarios" / f"{name}.json"
    if not p.is_file():
        raise FileNotFoundError(f"no bundled scenario named {name!r}")
    return Path(str(p))


def list_cases() -> list[str]:
    folder = resources.files(__package__) / "cases"
    return sorted(f.name[:-5] for f in folder.iterdir() if f.name.endswith(".json"))


def list_scenarios() -> list[str]:
    folder = resources.files(__package__) / "scenarios"
    return sorted(f.name[:-5] for f in folder.iterdir() if f.name.endswith(".json"))
