"""Goal generation for lifelong runs.

Two samplers: a stationary uniform draw over eligible cells, and a moving
mixture of isotropic Gaussians discretized to a categorical over eligible
cells. On maps that have both workstations and endpoints every agent
alternates between delivery targets (endpoints) and pickup targets
(workstations); workstation draws are always uniform.

Reproducibility contract: agent i's goal stream is a pure function of
(master seed, i), so runs agree regardless of agent count or evaluation
order. The mixture centers use their own stream and move only at timesteps
divisible by the resample interval.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .grid import CellKind, Coord, GridMap

_CENTER_STREAM_TAG = 0x6D6F6465  # distinct namespace inside the seed tree
_AGENT_STREAM_TAG = 0x7461736B


class GoalCategory(Enum):
    UNPHASED = "unphased"
    TO_ENDPOINT = "to_endpoint"
    TO_WORKSTATION = "to_workstation"


@dataclass(frozen=True)
class TaskConfig:
    kind: str = "static_uniform"  # or "dynamic_gaussian"
    sigma: float = 1.0
    num_modes: int = 1
    resample_interval: int = 200
    center_domain: str = "auto"  # "endpoints" | "any_free" | "auto"

    def __post_init__(self):
        if self.kind not in ("static_uniform", "dynamic_gaussian"):
            raise ValueError(f"unknown task kind {self.kind!r}")
        if self.kind == "dynamic_gaussian":
            if self.sigma <= 0:
                raise ValueError("sigma must be positive")
            if self.num_modes < 1:
                raise ValueError("num_modes must be >= 1")
            if self.resample_interval < 1:
                raise ValueError("resample_interval must be >= 1")
        if self.center_domain not in ("endpoints", "any_free", "auto"):
            raise ValueError(f"unknown center_domain {self.center_domain!r}")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "sigma": self.sigma,
            "num_modes": self.num_modes,
            "resample_interval": self.resample_interval,
            "center_domain": self.center_domain,
        }


def gaussian_mixture_probs(cells: np.ndarray, centers: np.ndarray, sigma: float) -> np.ndarray:
    """Categorical pmf over ``cells`` from an unnormalized isotropic mixture.

    cells: (M, 2) int coordinates; centers: (K, 2). Weight of a cell is the
    sum over centers of exp(-||c - mu||^2 / (2 sigma^2)), computed in log
    space so distant cells underflow gracefully rather than to all-zeros.
    """
    diff = cells[:, None, :].astype(np.float64) - centers[None, :, :].astype(np.float64)
    sq = np.einsum("mkd,mkd->mk", diff, diff)
    logw = -sq / (2.0 * sigma * sigma)
    peak = logw.max()
    w = np.exp(logw - peak).sum(axis=1)
    total = w.sum()
    if not np.isfinite(total) or total <= 0.0:
        raise ValueError("degenerate mixture: no eligible cell has positive weight")
    return w / total


class TaskSystem:
    """Owns per-agent goal streams and the shared mixture-center state."""

    def __init__(self, grid: GridMap, config: TaskConfig, num_agents: int, master_seed: int):
        self.grid = grid
        self.config = config
        self.num_agents = num_agents
        self.master_seed = master_seed

        self._endpoints = grid.endpoints
        self._workstations = grid.workstations
        self.phased = bool(self._endpoints) and bool(self._workstations)
        if self.phased:
            self._eligible = {
                GoalCategory.TO_ENDPOINT: np.array(self._endpoints, dtype=np.int64),
                GoalCategory.TO_WORKSTATION: np.array(self._workstations, dtype=np.int64),
            }
        else:
            self._eligible = {
                GoalCategory.UNPHASED: np.array(grid.traversable_cells(), dtype=np.int64),
            }

        self._agent_rngs = [
            np.random.default_rng(np.random.SeedSequence((master_seed, _AGENT_STREAM_TAG, i)))
            for i in range(num_agents)
        ]
        # first goal is a delivery; agents then alternate
        self._next_category = [
            GoalCategory.TO_ENDPOINT if self.phased else GoalCategory.UNPHASED
            for _ in range(num_agents)
        ]

        self._center_rng = np.random.default_rng(
            np.random.SeedSequence((master_seed, _CENTER_STREAM_TAG)))
        self.centers: np.ndarray | None = None
        self.center_epoch = -1
        self._probs_cache: dict[tuple, np.ndarray] = {}
        if config.kind == "dynamic_gaussian":
            self.resample_centers(0)

    # -- mixture centers -------------------------------------------------------

    def _center_domain_cells(self) -> np.ndarray:
        domain = self.config.center_domain
        if domain == "auto":
            domain = "endpoints" if self.phased else "any_free"
        if domain == "endpoints":
            if not self._endpoints:
                raise ValueError("center_domain 'endpoints' on a map without endpoints")
            return np.array(self._endpoints, dtype=np.int64)
        return np.array(self.grid.traversable_cells(), dtype=np.int64)

    def resample_centers(self, t: int) -> np.ndarray:
        """Redraw the K mixture centers; only legal when t is on the interval."""
        if self.config.kind != "dynamic_gaussian":
            raise ValueError("centers only exist for dynamic_gaussian tasks")
        if t % self.config.resample_interval != 0:
            raise ValueError(
                f"centers move only at multiples of {self.config.resample_interval}, got t={t}")
        domain = self._center_domain_cells()
        idx = self._center_rng.integers(0, len(domain), size=self.config.num_modes)
        self.centers = domain[idx]
        self.center_epoch += 1
        return self.centers

    def maybe_resample_centers(self, t: int) -> bool:
        if self.config.kind != "dynamic_gaussian" or t == 0:
            return False
        if t % self.config.resample_interval == 0:
            self.resample_centers(t)
            return True
        return False

    # -- goal draws ------------------------------------------------------------

    def _probs_for(self, category: GoalCategory) -> np.ndarray | None:
        """pmf over the category's eligible cells; None means uniform."""
        if self.config.kind != "dynamic_gaussian":
            return None
        if category == GoalCategory.TO_WORKSTATION:
            return None
        key = (category, self.center_epoch)
        probs = self._probs_cache.get(key)
        if probs is None:
            probs = gaussian_mixture_probs(
                self._eligible[category], self.centers, self.config.sigma)
            self._probs_cache = {key: probs}  # one live epoch at a time
        return probs

    def _draw(self, agent_id: int, category: GoalCategory) -> Coord:
        cells = self._eligible[category]
        probs = self._probs_for(category)
        rng = self._agent_rngs[agent_id]
        if probs is None:
            i = int(rng.integers(0, len(cells)))
        else:
            i = int(rng.choice(len(cells), p=probs))
        return (int(cells[i, 0]), int(cells[i, 1]))

    def _flip(self, agent_id: int, category: GoalCategory) -> None:
        if self.phased:
            self._next_category[agent_id] = (
                GoalCategory.TO_WORKSTATION
                if category == GoalCategory.TO_ENDPOINT
                else GoalCategory.TO_ENDPOINT)

    def sample_goal(self, agent_id: int, t: int) -> Coord:
        """One draw from the agent's current category; advances its phase."""
        category = self._next_category[agent_id]
        goal = self._draw(agent_id, category)
        self._flip(agent_id, category)
        return goal

    def next_goal(self, agent_id: int, t: int, current_pos: Coord) -> Coord:
        """One assignment: redraw once (same category) if the goal lands on
        the agent's own cell, then advance the phase."""
        category = self._next_category[agent_id]
        goal = self._draw(agent_id, category)
        if goal == current_pos:
            goal = self._draw(agent_id, category)
        self._flip(agent_id, category)
        return goal

    def upcoming_category(self, agent_id: int) -> GoalCategory:
        """Category the next draw for this agent will use."""
        return self._next_category[agent_id]
