"""Built-in benchmark maps and name resolution."""
from __future__ import annotations

from importlib.resources import files
from pathlib import Path

from .grid import GridMap, parse_map

BUILTIN_MAPS = (
    "empty-8-8",
    "empty-16-16",
    "empty-32-32",
    "random-32-32",
    "warehouse-33-57",
    "sortation-33-57",
)


def load_map(name_or_path: str | Path) -> GridMap:
    """Load a bundled map by name or any map file by path."""
    p = Path(name_or_path)
    if p.suffix == ".map" or p.exists():
        return parse_map(p.read_text())
    name = str(name_or_path)
    if name in BUILTIN_MAPS:
        text = files("lmapf").joinpath("maps", f"{name}.map").read_text()
        return parse_map(text)
    raise FileNotFoundError(
        f"no map file at {name_or_path!r} and no builtin of that name; "
        f"builtins: {', '.join(BUILTIN_MAPS)}")
