"""Per-goal cost-to-goal distance trees, expanded on demand.

Each tree is a reverse best-first search rooted at one goal cell over the
current guidance weights. Trees are shared between agents that chase the
same goal and become stale (unreadable) as soon as the guidance version
moves; the simulation drops them wholesale via ``invalidate_all``.
"""
from __future__ import annotations

import numpy as np

from . import kernels
from .grid import Coord
from .guidance import GuidanceGraph


class StaleTreeError(RuntimeError):
    """Raised when querying trees built against an older guidance version."""


class HeuristicCache:
    """Pool of lazily expanded distance trees keyed by goal cell."""

    def __init__(self, guidance: GuidanceGraph, initial_slots: int = 16):
        if not guidance.with_wait:
            # Trees ignore self edges either way; insisting on the 5-direction
            # tensor keeps one tensor layout across the direct-planning stack.
            raise ValueError("heuristic trees expect a wait-enabled guidance graph")
        self.guidance = guidance
        self.graph_version = guidance.version
        n = guidance.grid.num_cells
        self._n = n
        self._hcap = 4 * n + 8
        self._slot_of_goal: dict[int, int] = {}
        self._free: list[int] = []
        self._alloc(initial_slots)

    def _alloc(self, slots: int) -> None:
        self.t_dist = np.full((slots, self._n), np.inf, dtype=np.float64)
        self.t_state = np.zeros((slots, self._n), dtype=np.uint8)
        self.t_hc = np.zeros((slots, self._hcap), dtype=np.float64)
        self.t_hn = np.zeros((slots, self._hcap), dtype=np.int32)
        self.t_meta = np.zeros((slots, 2), dtype=np.int64)
        self._free = list(range(slots - 1, -1, -1))
        self._slot_of_goal.clear()

    def _grow(self) -> None:
        old = (self.t_dist, self.t_state, self.t_hc, self.t_hn, self.t_meta)
        slots = self.t_dist.shape[0]
        extra = slots
        self.t_dist = np.vstack([old[0], np.full((extra, self._n), np.inf)])
        self.t_state = np.vstack([old[1], np.zeros((extra, self._n), np.uint8)])
        self.t_hc = np.vstack([old[2], np.zeros((extra, self._hcap))])
        self.t_hn = np.vstack([old[3], np.zeros((extra, self._hcap), np.int32)])
        self.t_meta = np.vstack([old[4], np.zeros((extra, 2), np.int64)])
        self._free.extend(range(2 * slots - 1, slots - 1, -1))

    @property
    def tree_count(self) -> int:
        return len(self._slot_of_goal)

    @property
    def total_expansions(self) -> int:
        return int(self.t_meta[:, 1].sum())

    def _check_version(self) -> None:
        if self.graph_version != self.guidance.version:
            raise StaleTreeError(
                f"trees built for guidance version {self.graph_version}, "
                f"graph is at {self.guidance.version}; call invalidate_all()"
            )

    def slot_for(self, goal_flat: int) -> int:
        """Slot index of the tree for this goal, creating it if needed."""
        self._check_version()
        slot = self._slot_of_goal.get(goal_flat)
        if slot is None:
            if not self._free:
                self._grow()
            slot = self._free.pop()
            kernels.tree_reset(slot, goal_flat, self.t_dist, self.t_state,
                               self.t_hc, self.t_hn, self.t_meta)
            self._slot_of_goal[goal_flat] = slot
        return slot

    def distance(self, goal: Coord, v: Coord) -> float:
        """Cost-to-goal of v under the current weights (inf if unreachable)."""
        grid = self.guidance.grid
        if not grid.is_traversable(goal) or not grid.is_traversable(v):
            raise ValueError(f"distance query on non-traversable cell: {goal} -> {v}")
        slot = self.slot_for(grid.flat(goal))
        return float(kernels.tree_query(
            slot, grid.flat(v), self.guidance.weights_flat(), grid.neighbor_table(),
            self.t_dist, self.t_state, self.t_hc, self.t_hn, self.t_meta))

    def expansions_of(self, goal: Coord) -> int:
        slot = self._slot_of_goal.get(self.guidance.grid.flat(goal))
        return 0 if slot is None else int(self.t_meta[slot, 1])

    def invalidate_all(self) -> None:
        """Drop every tree and re-sync to the current guidance version."""
        for slot in self._slot_of_goal.values():
            self._free.append(slot)
        self._slot_of_goal.clear()
        self.graph_version = self.guidance.version
