"""Bundled URDF fixtures so every command and test runs without external assets."""

from importlib import resources

FIXTURE_NAMES = ("planar2r", "arm6")


def fixture_path(name: str) -> str:
    """Filesystem path of a bundled URDF (``planar2r`` or ``arm6``)."""
    if name not in FIXTURE_NAMES:
        raise KeyError(f"unknown fixture {name!r}; available: {FIXTURE_NAMES}")
    return str(resources.files(__package__) / f"{name}.urdf")
