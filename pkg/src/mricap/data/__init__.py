"""Bundled example systems."""

from __future__ import annotations

from importlib import resources

BUNDLED = ("table1.json", "oracle2h.json", "oracle3h.json", "two_resource.json")


def bundled_path(name: str):
    """Path-like handle of a bundled config, or None if no such file ships."""
    ref = resources.files(__name__).joinpath(name)
    return ref if ref.is_file() else None


def read_bundled(name: str) -> str:
    ref = bundled_path(name)
    if ref is None:
        raise FileNotFoundError(name)
    return ref.read_text(encoding="utf-8")
