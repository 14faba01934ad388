"""Gridmap loading and basic geometry.

Maps use the MovingAI ``.map`` layout (``type``/``height``/``width`` header
followed by one character per cell) extended with two extra cell kinds:
``E`` marks an endpoint and ``W`` a workstation. Both are traversable.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np


class MapFormatError(ValueError):
    """Raised when a map file cannot be parsed or fails validation."""


class CellKind(IntEnum):
    FREE = 0
    OBSTACLE = 1
    ENDPOINT = 2
    WORKSTATION = 3


_CHAR_TO_KIND = {
    ".": CellKind.FREE,
    "@": CellKind.OBSTACLE,
    "T": CellKind.OBSTACLE,
    "E": CellKind.ENDPOINT,
    "W": CellKind.WORKSTATION,
}
_KIND_TO_CHAR = {
    CellKind.FREE: ".",
    CellKind.OBSTACLE: "@",
    CellKind.ENDPOINT: "E",
    CellKind.WORKSTATION: "W",
}


class Direction(IntEnum):
    """Movement actions in the fixed tie-break order, plus Wait."""

    RIGHT = 0
    UP = 1
    LEFT = 2
    DOWN = 3
    WAIT = 4


# (row, col) deltas; row 0 is the top row.
DELTAS: tuple[tuple[int, int], ...] = ((0, 1), (-1, 0), (0, -1), (1, 0), (0, 0))
MOVE_DIRECTIONS: tuple[Direction, ...] = (
    Direction.RIGHT,
    Direction.UP,
    Direction.LEFT,
    Direction.DOWN,
)
OPPOSITE: tuple[Direction, ...] = (
    Direction.LEFT,
    Direction.DOWN,
    Direction.RIGHT,
    Direction.UP,
    Direction.WAIT,
)

Coord = tuple[int, int]


@dataclass(frozen=True, eq=False)
class GridMap:
    """Immutable parsed gridmap.

    ``cells`` holds ``CellKind`` codes with shape (height, width); the
    original body lines are kept so serialization is byte-stable.
    """

    height: int
    width: int
    cells: np.ndarray
    body_lines: tuple[str, ...]
    map_type: str = "octile"
    _neighbor_table: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        self.cells.setflags(write=False)
        object.__setattr__(self, "_neighbor_table", _build_neighbor_table(self))
        self._neighbor_table.setflags(write=False)

    # -- queries ------------------------------------------------------------

    @property
    def num_cells(self) -> int:
        return self.height * self.width

    @property
    def free_count(self) -> int:
        """Number of traversable (non-obstacle) cells."""
        return int(np.count_nonzero(self.cells != CellKind.OBSTACLE))

    def in_bounds(self, v: Coord) -> bool:
        r, c = v
        return 0 <= r < self.height and 0 <= c < self.width

    def kind(self, v: Coord) -> CellKind:
        if not self.in_bounds(v):
            raise MapFormatError(f"cell {v} out of bounds for {self.height}x{self.width} map")
        return CellKind(int(self.cells[v]))

    def is_traversable(self, v: Coord) -> bool:
        return self.in_bounds(v) and self.cells[v] != CellKind.OBSTACLE

    def cells_of_kind(self, kind: CellKind) -> list[Coord]:
        rs, cs = np.nonzero(self.cells == kind)
        return [(int(r), int(c)) for r, c in zip(rs, cs)]

    def traversable_cells(self) -> list[Coord]:
        rs, cs = np.nonzero(self.cells != CellKind.OBSTACLE)
        return [(int(r), int(c)) for r, c in zip(rs, cs)]

    @property
    def endpoints(self) -> list[Coord]:
        return self.cells_of_kind(CellKind.ENDPOINT)

    @property
    def workstations(self) -> list[Coord]:
        return self.cells_of_kind(CellKind.WORKSTATION)

    # -- flat indexing used by the solvers -----------------------------------

    def flat(self, v: Coord) -> int:
        return v[0] * self.width + v[1]

    def unflat(self, i: int) -> Coord:
        return divmod(int(i), self.width)

    def neighbor_table(self) -> np.ndarray:
        """(num_cells, 5) int32 table: target flat cell per direction, -1 if invalid.

        Column 4 (Wait) maps a traversable cell to itself.
        """
        return self._neighbor_table

    def obstacle_flat(self) -> np.ndarray:
        return (self.cells.reshape(-1) == CellKind.OBSTACLE).astype(np.uint8)


def _build_neighbor_table(grid: GridMap) -> np.ndarray:
    h, w = grid.height, grid.width
    blocked = grid.cells == CellKind.OBSTACLE
    table = np.full((h * w, 5), -1, dtype=np.int32)
    for r in range(h):
        for c in range(w):
            if blocked[r, c]:
                continue
            i = r * w + c
            for d, (dr, dc) in enumerate(DELTAS[:4]):
                nr, nc = r + dr, c + dc
                if 0 <= nr < h and 0 <= nc < w and not blocked[nr, nc]:
                    table[i, d] = nr * w + nc
            table[i, 4] = i
    return table


def move_neighbors(grid: GridMap, v: Coord, include_wait: bool = False) -> list[tuple[Direction, Coord]]:
    """Valid single-step targets from ``v`` in fixed direction order."""
    if not grid.is_traversable(v):
        raise MapFormatError(f"cell {v} is not a traversable cell")
    out: list[tuple[Direction, Coord]] = []
    for d in MOVE_DIRECTIONS:
        dr, dc = DELTAS[d]
        u = (v[0] + dr, v[1] + dc)
        if grid.is_traversable(u):
            out.append((d, u))
    if include_wait:
        out.append((Direction.WAIT, v))
    return out


def parse_map(text: str) -> GridMap:
    """Parse MovingAI-format map text, validating shape and connectivity."""
    lines = text.splitlines()
    # strip trailing blank lines only; internal structure must be exact
    while lines and lines[-1].strip() == "":
        lines.pop()
    if len(lines) < 4:
        raise MapFormatError("map text too short: expected 4 header lines plus grid body")

    def header(idx: int, key: str) -> str:
        parts = lines[idx].split()
        if len(parts) != 2 or parts[0] != key:
            raise MapFormatError(f"malformed header line {idx + 1}: expected '{key} <value>'")
        return parts[1]

    map_type = header(0, "type")
    try:
        height = int(header(1, "height"))
        width = int(header(2, "width"))
    except ValueError as exc:
        raise MapFormatError(f"non-integer map dimensions: {exc}") from exc
    if height <= 0 or width <= 0:
        raise MapFormatError(f"map dimensions must be positive, got {height}x{width}")
    if lines[3].strip() != "map":
        raise MapFormatError("missing 'map' separator line")

    body = lines[4:]
    if len(body) != height:
        raise MapFormatError(f"expected {height} grid rows, found {len(body)}")
    cells = np.empty((height, width), dtype=np.int8)
    for r, row in enumerate(body):
        if len(row) != width:
            raise MapFormatError(f"grid row {r} has length {len(row)}, expected {width}")
        for c, ch in enumerate(row):
            kind = _CHAR_TO_KIND.get(ch)
            if kind is None:
                raise MapFormatError(f"unknown map character {ch!r} at row {r}, col {c}")
            cells[r, c] = kind

    grid = GridMap(height=height, width=width, cells=cells, body_lines=tuple(body), map_type=map_type)
    _check_connected(grid)
    return grid


def _check_connected(grid: GridMap) -> None:
    free = grid.cells != CellKind.OBSTACLE
    total = int(np.count_nonzero(free))
    if total == 0:
        raise MapFormatError("map has no traversable cells")
    start = tuple(int(x) for x in np.argwhere(free)[0])
    seen = np.zeros_like(free, dtype=bool)
    seen[start] = True
    stack = [start]
    while stack:
        r, c = stack.pop()
        for dr, dc in DELTAS[:4]:
            nr, nc = r + dr, c + dc
            if 0 <= nr < grid.height and 0 <= nc < grid.width and free[nr, nc] and not seen[nr, nc]:
                seen[nr, nc] = True
                stack.append((nr, nc))
    reached = int(np.count_nonzero(seen))
    if reached != total:
        raise MapFormatError(
            f"traversable region is disconnected: reached {reached} of {total} cells"
        )


def serialize_map(grid: GridMap) -> str:
    """Render a map back to MovingAI text; the grid body round-trips byte-for-byte."""
    head = [f"type {grid.map_type}", f"height {grid.height}", f"width {grid.width}", "map"]
    return "\n".join(head + list(grid.body_lines)) + "\n"


def grid_from_cells(cells: np.ndarray, map_type: str = "octile") -> GridMap:
    """Build a validated GridMap from a CellKind array (canonical glyphs)."""
    cells = np.asarray(cells, dtype=np.int8)
    if cells.ndim != 2:
        raise MapFormatError("cells array must be 2-D")
    body = tuple(
        "".join(_KIND_TO_CHAR[CellKind(int(k))] for k in row) for row in cells
    )
    grid = GridMap(
        height=cells.shape[0],
        width=cells.shape[1],
        cells=cells.copy(),
        body_lines=body,
        map_type=map_type,
    )
    _check_connected(grid)
    return grid
