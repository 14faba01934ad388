"""Lifelong multi-agent path finding on 4-neighbor grids.

Rule-based one-step planning (direct and guide-path variants) over a
weighted guidance layer, task streams with static or drifting goal
distributions, policy architectures that turn traffic observations into
edge weights, and a from-scratch evolution strategy to train them against
simulated throughput.
"""

from .cmaes import BudgetExhausted, CmaesOptimizer
from .gpibt import EdgeWeightFn, GuidePlanner, LnsConfig
from .grid import (CellKind, Direction, GridMap, MapFormatError, move_neighbors,
                   parse_map, serialize_map)
from .guidance import GuidanceGraph, uniform_guidance
from .harness import (ALGORITHMS, BatchResult, SimConfig, SimulationReport,
                      batch_evaluate, deadlock_monitor, run_simulation)
from .heuristics import HeuristicCache, StaleTreeError
from .maps import BUILTIN_MAPS, load_map
from .optimize import OptimizeResult, optimize_policy
from .pibt import AgentState, PibtPlanner, rank_actions, tiebreak_of
from .policies import (GuidancePolicy, cnn_forward, cnn_param_count, cnn_policy,
                       contra_outflow_policy, contra_outflow_weight,
                       reduced_quadratic_policy, reduced_quadratic_weight,
                       static_forward, static_policy, window_observation,
                       wq_forward, wq_param_count, wq_policy)
from .tasks import GoalCategory, TaskConfig, TaskSystem
from .validate import assert_valid, validate_trajectory

__version__ = "0.1.0"

__all__ = [
    "ALGORITHMS", "AgentState", "BUILTIN_MAPS", "BatchResult", "BudgetExhausted",
    "CellKind", "CmaesOptimizer", "Direction", "EdgeWeightFn", "GoalCategory",
    "GridMap", "GuidanceGraph", "GuidancePolicy", "GuidePlanner", "HeuristicCache",
    "LnsConfig", "MapFormatError", "OptimizeResult", "PibtPlanner", "SimConfig",
    "SimulationReport", "StaleTreeError", "TaskConfig", "TaskSystem",
    "assert_valid", "batch_evaluate", "cnn_forward", "cnn_param_count",
    "cnn_policy", "contra_outflow_policy", "contra_outflow_weight",
    "deadlock_monitor", "load_map", "move_neighbors", "optimize_policy",
    "parse_map", "rank_actions", "reduced_quadratic_policy",
    "reduced_quadratic_weight", "run_simulation", "serialize_map",
    "static_forward", "static_policy", "tiebreak_of", "uniform_guidance",
    "validate_trajectory", "window_observation", "wq_forward", "wq_param_count",
    "wq_policy",
]
