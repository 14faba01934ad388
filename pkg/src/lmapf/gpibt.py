"""Guide-path planning and following.

Each agent holds a full path to its goal, planned by best-first search
under edge weights that may depend on how many stored paths already use
each directed edge. Per-step motion ranks neighbors by remaining distance
along-or-toward the agent's path suffix (a lazily grown multi-source BFS),
resolved jointly with the same inheritance/backtracking rule as the direct
planner. A large-neighborhood refinement loop replans agent subsets and
keeps only strict total-cost improvements.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .grid import GridMap

W_QUADRATIC = 0
W_CONTRA_OUTFLOW = 1
W_REDUCED_QUADRATIC = 2
W_STATIC = 3

_D_F1 = np.zeros(1, np.float64)
_D_F2 = np.zeros((1, 1), np.float64)
_D_U2 = np.zeros((1, 1), np.uint8)
_D_I2 = np.zeros((1, 1), np.int32)
_D_I1 = np.zeros(1, np.int32)
_D_M2 = np.zeros((1, 2), np.int64)


@dataclass(frozen=True)
class EdgeWeightFn:
    """Edge-cost provider for guide-path search, one of four modes."""
    mode: int
    theta: np.ndarray = field(default_factory=lambda: _D_F1)
    static_w4: np.ndarray = field(default_factory=lambda: _D_F2)
    window: int = 5

    @staticmethod
    def quadratic(theta: np.ndarray, window: int = 5) -> "EdgeWeightFn":
        return EdgeWeightFn(W_QUADRATIC, np.ascontiguousarray(theta, np.float64), _D_F2, window)

    @staticmethod
    def contra_outflow() -> "EdgeWeightFn":
        return EdgeWeightFn(W_CONTRA_OUTFLOW)

    @staticmethod
    def reduced_quadratic(theta: np.ndarray) -> "EdgeWeightFn":
        return EdgeWeightFn(W_REDUCED_QUADRATIC, np.ascontiguousarray(theta, np.float64))

    @staticmethod
    def static(w4flat: np.ndarray) -> "EdgeWeightFn":
        return EdgeWeightFn(W_STATIC, _D_F1, np.ascontiguousarray(w4flat, np.float64))


@dataclass
class LnsConfig:
    iterations: int = 10
    neighborhood: int = 10
    time_limit_s: float | None = 8.0


class GuidePlanner:
    """Per-agent guide paths plus the one-step follower."""

    def __init__(self, grid: GridMap, num_agents: int, seed: int,
                 weight_fn: EdgeWeightFn):
        self.grid = grid
        self.num_agents = num_agents
        self.seed = np.uint64(seed)
        self.weight_fn = weight_fn
        n = grid.num_cells
        self._nbr = grid.neighbor_table()
        self._deg = (self._nbr[:, :4] >= 0).sum(axis=1).astype(np.int32)
        self.usage4 = np.zeros((4, n), np.float64)
        self.paths: list[np.ndarray | None] = [None] * num_agents
        self._g_along: list[np.ndarray | None] = [None] * num_agents
        self._total = np.zeros(num_agents, np.float64)
        self.ptr = np.zeros(num_agents, np.int64)
        # follower state: lazy suffix-distance fields, one per agent
        self._sf_dist = np.zeros((num_agents, n), np.int32)
        self._sf_stamp = np.zeros((num_agents, n), np.int32)
        self._sf_epoch = np.zeros(num_agents, np.int32)
        self._sf_q = np.zeros((num_agents, n), np.int32)
        self._sf_qh = np.zeros(num_agents, np.int32)
        self._sf_qt = np.zeros(num_agents, np.int32)
        # search scratch
        self._g = np.zeros(n, np.float64)
        self._state = np.zeros(n, np.uint8)
        self._parent = np.zeros(n, np.int32)
        self._hc = np.zeros(4 * n + 8, np.float64)
        self._hn = np.zeros(4 * n + 8, np.int32)
        w = weight_fn.window
        self._win = np.zeros((4, w, w), np.float64)
        self._out_path = np.zeros(n, np.int32)
        # one-step scratch
        self._occ_now = np.full(n, -1, np.int32)
        self._occ_next = np.full(n, -1, np.int32)
        self._v_next = np.zeros(num_agents, np.int32)
        self._st_agent = np.zeros(num_agents, np.int32)
        self._st_ci = np.zeros(num_agents, np.int32)
        self._st_k = np.zeros(num_agents, np.int32)
        self._st_sa = np.zeros(num_agents, np.int32)
        self._st_cands = np.zeros((num_agents, 5), np.int32)
        self._st_dirs = np.zeros((num_agents, 5), np.int32)

    def set_static_weights(self, w4flat: np.ndarray) -> None:
        if self.weight_fn.mode != W_STATIC:
            raise ValueError("planner does not use a static weight tensor")
        self.weight_fn = EdgeWeightFn.static(w4flat)

    # -- usage bookkeeping --------------------------------------------------

    def _path_dirs(self, path: np.ndarray) -> np.ndarray:
        w = self.grid.width
        diffs = path[1:].astype(np.int64) - path[:-1]
        dirs = np.full(diffs.shape[0], -1, np.int64)
        dirs[diffs == 1] = 0
        dirs[diffs == -w] = 1
        dirs[diffs == -1] = 2
        dirs[diffs == w] = 3
        if (dirs < 0).any():
            raise AssertionError("guide path contains a non-adjacent hop")
        return dirs

    def _usage_add(self, path: np.ndarray, amount: float) -> None:
        if path.shape[0] < 2:
            return
        dirs = self._path_dirs(path)
        idx = dirs * self.grid.num_cells + path[:-1]
        np.add.at(self.usage4.ravel(), idx, amount)

    def usage_field(self) -> np.ndarray:
        """Directed edge usage as a (4, H, W) array (copy)."""
        return self.usage4.reshape(4, self.grid.height, self.grid.width).copy()

    # -- planning -----------------------------------------------------------

    def plan_agent(self, a: int, start_flat: int, goal_flat: int) -> float:
        """(Re)plan agent `a` from `start_flat`; returns the path cost.

        The agent's stored path is removed from the usage field before the
        search so its own previous plan never penalizes the new one.
        """
        old = self.paths[a]
        if old is not None:
            self._usage_add(old, -1.0)
        fn = self.weight_fn
        plen = kernels.guide_path_search(
            start_flat, goal_flat, fn.mode, fn.theta, self.usage4, fn.static_w4,
            self.grid.height, self.grid.width, fn.window, self._nbr,
            self._g, self._state, self._parent, self._hc, self._hn,
            self._win, self._out_path)
        if plen < 0:
            raise RuntimeError(f"no guide path from {start_flat} to {goal_flat}")
        path = self._out_path[:plen].copy()
        self.paths[a] = path
        self._g_along[a] = self._g[path].copy()
        self._total[a] = float(self._g[goal_flat])
        self.ptr[a] = 0
        self._usage_add(path, 1.0)
        kernels.suffix_seed(a, path, plen, 0, self._sf_dist, self._sf_stamp,
                            self._sf_epoch, self._sf_q, self._sf_qh, self._sf_qt)
        return self._total[a]

    def remaining_cost(self, a: int) -> float:
        """Planning-time cost of the not-yet-traversed part of the path."""
        g_along = self._g_along[a]
        if g_along is None:
            raise ValueError(f"agent {a} has no guide path")
        return float(self._total[a] - g_along[self.ptr[a]])

    def total_remaining_cost(self) -> float:
        return sum(self.remaining_cost(a) for a in range(self.num_agents))

    # -- following ----------------------------------------------------------

    def follow_step(self, t: int, pos_flat: np.ndarray, goal_flat: np.ndarray,
                    priorities: np.ndarray) -> np.ndarray:
        """Next cell per agent, steering along each agent's path suffix."""
        order = np.argsort(-priorities, kind="stable").astype(np.int32)
        kernels.joint_step(
            1, self.seed, t, pos_flat, goal_flat, order,
            self._deg, _D_F2, self._nbr,
            _D_I1, _D_F2, _D_U2, _D_F2, _D_I2, _D_M2,
            self._sf_dist, self._sf_stamp, self._sf_epoch,
            self._sf_q, self._sf_qh, self._sf_qt,
            self._occ_now, self._occ_next, self._v_next,
            self._st_agent, self._st_ci, self._st_k, self._st_sa,
            self._st_cands, self._st_dirs)
        return self._v_next

    def advance(self, a: int, new_pos_flat: int) -> None:
        """Move the progress pointer when the agent lands further along its path."""
        path = self.paths[a]
        if path is None:
            return
        p = int(self.ptr[a])
        if p >= path.shape[0] - 1:
            return
        hits = np.nonzero(path[p + 1:] == new_pos_flat)[0]
        if hits.size == 0:
            return
        self.ptr[a] = p + 1 + int(hits[0])
        kernels.suffix_seed(a, path, path.shape[0], int(self.ptr[a]),
                            self._sf_dist, self._sf_stamp, self._sf_epoch,
                            self._sf_q, self._sf_qh, self._sf_qt)

    # -- refinement ---------------------------------------------------------

    def lns_round(self, rng: np.random.Generator, pos_flat: np.ndarray,
                  goal_flat: np.ndarray, cfg: LnsConfig) -> tuple[int, int]:
        """Replan random agent subsets; keep strict total-cost improvements.

        Returns (accepted, attempted). Rejected replans are rolled back
        exactly, including the usage field.
        """
        accepted = 0
        attempted = 0
        started = time.monotonic()
        size = min(cfg.neighborhood, self.num_agents)
        for _ in range(cfg.iterations):
            if cfg.time_limit_s is not None and time.monotonic() - started > cfg.time_limit_s:
                break
            sel = rng.choice(self.num_agents, size=size, replace=False)
            attempted += 1
            old_cost = 0.0
            snap = []
            for a in sel:
                old_cost += self.remaining_cost(a)
                snap.append((self.paths[a], self._g_along[a],
                             self._total[a], int(self.ptr[a])))
            new_cost = 0.0
            for a in sel:
                new_cost += self.plan_agent(int(a), int(pos_flat[a]), int(goal_flat[a]))
            if new_cost < old_cost:
                accepted += 1
                continue
            for a, (path, g_along, total, p) in zip(sel, snap):
                new_path = self.paths[a]
                assert new_path is not None and path is not None
                self._usage_add(new_path, -1.0)
                self._usage_add(path, 1.0)
                self.paths[a] = path
                self._g_along[a] = g_along
                self._total[a] = total
                self.ptr[a] = p
                kernels.suffix_seed(int(a), path, path.shape[0], p,
                                    self._sf_dist, self._sf_stamp, self._sf_epoch,
                                    self._sf_q, self._sf_qh, self._sf_qt)
        return accepted, attempted
