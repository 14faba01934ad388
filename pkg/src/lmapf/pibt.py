"""One-step rule-based planner: priority inheritance with backtracking.

Agents are planned in descending priority. Priority is the number of
timesteps since the agent's goal was assigned plus a fixed per-agent
tie-break strictly inside (0, 1), so integer parts order agents exactly by
waiting time. Action ranking sums the guidance action cost with the
cost-to-goal of the landing cell; the corridor-swap maneuver reverses a
blocked agent's preferences when a pull-and-rotate is both required and
feasible.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .grid import Coord, Direction, GridMap
from .guidance import GuidanceGraph
from .heuristics import HeuristicCache

# typed placeholders for the kernel arguments a call site does not use
_D_F2 = np.zeros((1, 1), np.float64)
_D_U2 = np.zeros((1, 1), np.uint8)
_D_I2 = np.zeros((1, 1), np.int32)
_D_I1 = np.zeros(1, np.int32)
_D_M2 = np.zeros((1, 2), np.int64)


def tiebreak_of(agent_id: int, num_agents: int) -> float:
    """Fixed per-agent priority fraction in (0, 1)."""
    return (agent_id + 1) / (num_agents + 1)


def initial_priorities(num_agents: int) -> np.ndarray:
    return np.array([tiebreak_of(i, num_agents) for i in range(num_agents)], dtype=np.float64)


@dataclass
class AgentState:
    agent_id: int
    position: Coord
    goal: Coord
    tiebreak: float
    elapsed: int = 0

    @property
    def priority(self) -> float:
        return self.elapsed + self.tiebreak


def rank_actions(cache: HeuristicCache, agent: AgentState, t: int, seed: int,
                 ) -> list[tuple[Direction, Coord]]:
    """Agent's candidate actions, best first, under the current guidance.

    Scores sum the action cost out of the current cell and the cost-to-goal
    of the landing cell; score ties fall back to a per-(seed, t, agent)
    shuffled order.
    """
    guidance = cache.guidance
    grid = guidance.grid
    slot = cache.slot_for(grid.flat(agent.goal))
    cells = np.zeros(5, np.int32)
    dirs = np.zeros(5, np.int32)
    agent_tree = np.full(agent.agent_id + 1, -1, np.int32)
    agent_tree[agent.agent_id] = slot
    k = kernels.rank_candidates(
        0, agent.agent_id, grid.flat(agent.position), np.uint64(seed), t,
        guidance.weights_flat(), grid.neighbor_table(), agent_tree,
        cache.t_dist, cache.t_state, cache.t_hc, cache.t_hn, cache.t_meta,
        _D_I2, _D_I2, _D_I1, _D_I2, _D_I1, _D_I1,
        cells, dirs)
    return [(Direction(int(dirs[i])), grid.unflat(int(cells[i]))) for i in range(k)]


class PibtPlanner:
    """Array-backed joint planner over a guidance graph."""

    def __init__(self, guidance: GuidanceGraph, num_agents: int, seed: int):
        if not guidance.with_wait:
            raise ValueError("direct planning requires wait edges in the guidance graph")
        self.guidance = guidance
        self.grid: GridMap = guidance.grid
        self.seed = np.uint64(seed)
        self.cache = HeuristicCache(guidance, initial_slots=max(16, num_agents))
        n = self.grid.num_cells
        self._nbr = self.grid.neighbor_table()
        self._deg = (self._nbr[:, :4] >= 0).sum(axis=1).astype(np.int32)
        self._agent_tree = np.zeros(num_agents, np.int32)
        self._occ_now = np.full(n, -1, np.int32)
        self._occ_next = np.full(n, -1, np.int32)
        self._v_next = np.zeros(num_agents, np.int32)
        self._st_agent = np.zeros(num_agents, np.int32)
        self._st_ci = np.zeros(num_agents, np.int32)
        self._st_k = np.zeros(num_agents, np.int32)
        self._st_sa = np.zeros(num_agents, np.int32)
        self._st_cands = np.zeros((num_agents, 5), np.int32)
        self._st_dirs = np.zeros((num_agents, 5), np.int32)

    def invalidate(self) -> None:
        """Drop distance trees after a guidance update."""
        self.cache.invalidate_all()

    def plan(self, t: int, pos_flat: np.ndarray, goal_flat: np.ndarray,
             priorities: np.ndarray) -> np.ndarray:
        """Next cell per agent for one synchronized step."""
        cache = self.cache
        for i in range(pos_flat.shape[0]):
            self._agent_tree[i] = cache.slot_for(int(goal_flat[i]))
        order = np.argsort(-priorities, kind="stable").astype(np.int32)
        kernels.joint_step(
            0, self.seed, t, pos_flat, goal_flat, order,
            self._deg, self.guidance.weights_flat(), self._nbr,
            self._agent_tree, cache.t_dist, cache.t_state, cache.t_hc, cache.t_hn, cache.t_meta,
            _D_I2, _D_I2, _D_I1, _D_I2, _D_I1, _D_I1,
            self._occ_now, self._occ_next, self._v_next,
            self._st_agent, self._st_ci, self._st_k, self._st_sa,
            self._st_cands, self._st_dirs)
        return self._v_next
