"""Directed, weighted action-cost structure layered over a gridmap.

Every traversable cell carries one outgoing edge per valid move direction
and, optionally, a self edge for waiting. Weights live in a dense tensor
indexed (direction, row, col); entries for invalid edges hold +inf and are
never read through the public API.
"""
from __future__ import annotations

import csv
import io

import numpy as np

from .grid import Coord, Direction, GridMap, MOVE_DIRECTIONS

INVALID_WEIGHT = np.inf


class GuidanceError(ValueError):
    """Raised on invalid edge queries or weight updates."""


def _build_mask(grid: GridMap, with_wait: bool) -> np.ndarray:
    n_dir = 5 if with_wait else 4
    mask = np.zeros((n_dir, grid.height, grid.width), dtype=bool)
    nbr = grid.neighbor_table()
    for d in range(4):
        mask[d] = (nbr[:, d] >= 0).reshape(grid.height, grid.width)
    if with_wait:
        mask[4] = (nbr[:, 4] >= 0).reshape(grid.height, grid.width)
    return mask


class GuidanceGraph:
    """Mutable weight store with a monotonically increasing version counter."""

    def __init__(self, grid: GridMap, with_wait: bool = True, weight_floor: float = 0.0):
        self.grid = grid
        self.with_wait = with_wait
        self.weight_floor = float(weight_floor)
        self.version = 0
        self.mask = _build_mask(grid, with_wait)
        self.mask.setflags(write=False)
        n_dir = 5 if with_wait else 4
        w = np.full((n_dir, grid.height, grid.width), INVALID_WEIGHT, dtype=np.float64)
        w[self.mask] = 1.0
        self._weights = w

    @property
    def n_directions(self) -> int:
        return 5 if self.with_wait else 4

    @property
    def weights(self) -> np.ndarray:
        """Current weight tensor; invalid edges hold +inf. Do not mutate."""
        return self._weights

    @property
    def edge_count(self) -> int:
        return int(np.count_nonzero(self.mask))

    def is_valid_edge(self, v: Coord, d: Direction) -> bool:
        if int(d) >= self.n_directions:
            return False
        return self.grid.in_bounds(v) and bool(self.mask[int(d), v[0], v[1]])

    def action_cost(self, v: Coord, d: Direction) -> float:
        if not self.is_valid_edge(v, d):
            raise GuidanceError(f"no edge from {v} in direction {Direction(d).name}")
        return float(self._weights[int(d), v[0], v[1]])

    def set_all_weights(self, w: np.ndarray) -> int:
        """Install a full weight tensor and bump the version.

        Entries at invalid edges are ignored; valid entries must be finite
        and strictly positive (and at least ``weight_floor`` when one is set).
        Returns the new version.
        """
        w = np.asarray(w, dtype=np.float64)
        expect = (self.n_directions, self.grid.height, self.grid.width)
        if w.shape != expect:
            raise GuidanceError(f"weight tensor shape {w.shape} != expected {expect}")
        vals = w[self.mask]
        if not np.all(np.isfinite(vals)):
            raise GuidanceError("weights at valid edges must be finite")
        if np.any(vals <= 0.0):
            raise GuidanceError("weights at valid edges must be strictly positive")
        if self.weight_floor > 0.0 and np.any(vals < self.weight_floor):
            raise GuidanceError(f"weights fall below the configured floor {self.weight_floor}")
        new = np.full_like(self._weights, INVALID_WEIGHT)
        new[self.mask] = vals
        self._weights = new
        self.version += 1
        return self.version

    # -- flat views consumed by the solvers ----------------------------------

    def weights_flat(self) -> np.ndarray:
        """(n_directions, num_cells) float64 view used by the search kernels."""
        return self._weights.reshape(self.n_directions, -1)

    # -- persistence ----------------------------------------------------------

    def to_csv(self) -> str:
        """Dump valid edges as ``direction,row,col,weight`` rows."""
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["direction", "row", "col", "weight"])
        for d in range(self.n_directions):
            rs, cs = np.nonzero(self.mask[d])
            for r, c in zip(rs, cs):
                wr.writerow([Direction(d).name, int(r), int(c), repr(float(self._weights[d, r, c]))])
        return buf.getvalue()

    def load_csv(self, text: str) -> int:
        """Install weights from ``to_csv`` output; every valid edge must appear once."""
        w = np.full_like(self._weights, INVALID_WEIGHT)
        seen = np.zeros_like(self.mask)
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or rows[0] != ["direction", "row", "col", "weight"]:
            raise GuidanceError("missing or malformed CSV header")
        for row in rows[1:]:
            if len(row) != 4:
                raise GuidanceError(f"malformed CSV row: {row!r}")
            try:
                d = Direction[row[0]]
                r, c = int(row[1]), int(row[2])
                val = float(row[3])
            except (KeyError, ValueError) as exc:
                raise GuidanceError(f"malformed CSV row {row!r}: {exc}") from exc
            if int(d) >= self.n_directions or not (0 <= r < self.grid.height and 0 <= c < self.grid.width):
                raise GuidanceError(f"edge ({row[0]}, {r}, {c}) out of range")
            if not self.mask[int(d), r, c]:
                raise GuidanceError(f"edge ({row[0]}, {r}, {c}) is not a valid edge")
            if seen[int(d), r, c]:
                raise GuidanceError(f"duplicate edge ({row[0]}, {r}, {c})")
            seen[int(d), r, c] = True
            w[int(d), r, c] = val
        if not np.array_equal(seen, self.mask):
            missing = int(np.count_nonzero(self.mask & ~seen))
            raise GuidanceError(f"CSV is missing {missing} valid edges")
        return self.set_all_weights(np.where(self.mask, w, 1.0))


def uniform_guidance(grid: GridMap, with_wait: bool = True, weight_floor: float = 0.0) -> GuidanceGraph:
    """Guidance graph with weight 1.0 on every valid edge, version 0."""
    return GuidanceGraph(grid, with_wait=with_wait, weight_floor=weight_floor)
