"""Lifelong simulation loop.

Agents move synchronously for a fixed number of timesteps and receive a
fresh goal the moment they finish one; the score of a run is goals finished
per timestep. Six algorithm variants share this loop:

  off+pibt    direct planning, fixed guidance (uniform or a loaded tensor)
  on+pibt     direct planning, CNN regenerates the guidance every m steps
  off+gpibt   guide paths under fixed edge weights
  on+gpibt    guide paths, quadratic policy priced lazily inside each search
  p-on+gpibt  guide paths, CNN regenerates a weight tensor every m steps
  hm+gpibt    guide paths, fixed contra-flow/outflow pricing

GPIBT variants optionally run a guide-path refinement round each step.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .gpibt import EdgeWeightFn, GuidePlanner, LnsConfig
from .grid import GridMap
from .guidance import GuidanceGraph, uniform_guidance
from .pibt import PibtPlanner, initial_priorities
from .policies import (EPS_WEIGHT, GuidancePolicy, cnn_forward, cnn_policy,
                       normalize_channels, static_forward, wq_policy)
from .tasks import TaskConfig, TaskSystem
from .validate import validate_trajectory

ALGORITHMS = ("off+pibt", "on+pibt", "off+gpibt", "on+gpibt", "p-on+gpibt", "hm+gpibt")

_POLICY_ARCHS = {
    "off+pibt": ("static_weights",),
    "on+pibt": ("cnn",),
    "off+gpibt": ("static_weights",),
    "on+gpibt": ("windowed_quadratic", "reduced_quadratic"),
    "p-on+gpibt": ("cnn",),
    "hm+gpibt": ("contra_outflow",),
}


@dataclass
class SimConfig:
    grid: GridMap
    algorithm: str
    num_agents: int
    num_steps: int = 1000
    update_interval: int = 20
    seed: int = 0
    tasks: TaskConfig = field(default_factory=TaskConfig)
    policy: GuidancePolicy | None = None
    lns: LnsConfig | None = None
    map_name: str = ""

    def __post_init__(self):
        algo = self.algorithm.lower().replace("[p-on]", "p-on")
        self.algorithm = algo
        if algo not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; choose from {ALGORITHMS}")
        if self.num_steps < 1:
            raise ValueError("num_steps must be positive")
        if not 1 <= self.update_interval <= self.num_steps:
            raise ValueError("update interval must be in [1, num_steps]")
        if not 1 <= self.num_agents <= self.grid.free_count:
            raise ValueError(
                f"num_agents must be in [1, {self.grid.free_count}] for this map")
        if self.lns is not None and not algo.endswith("gpibt"):
            raise ValueError("guide-path refinement applies to gpibt variants only")
        if self.policy is not None:
            allowed = _POLICY_ARCHS[algo]
            if self.policy.arch not in allowed:
                raise ValueError(
                    f"{algo} accepts policy arch {allowed}, got {self.policy.arch!r}")
            if self.policy.arch == "static_weights":
                want_wait = algo == "off+pibt"
                if bool(self.policy.meta.get("with_wait", True)) != want_wait:
                    raise ValueError(
                        f"static policy for {algo} must have with_wait={want_wait}")

    def resolved(self) -> dict:
        pol = None
        if self.policy is not None:
            pol = {"arch": self.policy.arch, "params": self.policy.param_count,
                   "meta": self.policy.meta}
        lns = None
        if self.lns is not None:
            lns = {"iterations": self.lns.iterations,
                   "neighborhood": self.lns.neighborhood,
                   "time_limit_s": self.lns.time_limit_s}
        return {
            "map": self.map_name or f"{self.grid.height}x{self.grid.width}",
            "height": self.grid.height,
            "width": self.grid.width,
            "algorithm": self.algorithm,
            "num_agents": self.num_agents,
            "num_steps": self.num_steps,
            "update_interval": self.update_interval,
            "seed": self.seed,
            "tasks": self.tasks.to_dict(),
            "policy": pol,
            "lns": lns,
        }


@dataclass
class SimulationReport:
    config: dict
    throughput: float
    goals_finished: int
    finished_per_step: np.ndarray
    wait_heatmap: np.ndarray
    conflicts_detected: int
    mean_step_wallclock: float
    guidance_updates: int
    lns_accepted: int
    lns_attempted: int
    trajectory: np.ndarray | None = None

    def to_json(self, include_timing: bool = False) -> str:
        """Canonical report serialization.

        Timing is off by default so reruns of one resolved config serialize
        byte-identically; wall-clock never reproduces.
        """
        payload = {
            "config": self.config,
            "throughput": self.throughput,
            "goals_finished": self.goals_finished,
            "finished_per_step": [int(x) for x in self.finished_per_step],
            "wait_heatmap": [[int(x) for x in row] for row in self.wait_heatmap],
            "conflicts_detected": self.conflicts_detected,
            "guidance_updates": self.guidance_updates,
            "lns_accepted": self.lns_accepted,
            "lns_attempted": self.lns_attempted,
        }
        if include_timing:
            payload["mean_step_wallclock"] = self.mean_step_wallclock
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))

    def save(self, out_dir: str | Path, include_timing: bool = True) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(self.to_json(include_timing=include_timing))
        with open(out / "finished_per_step.csv", "w") as f:
            f.write("t,finished\n")
            for t, x in enumerate(self.finished_per_step):
                f.write(f"{t},{int(x)}\n")
        with open(out / "wait_heatmap.csv", "w") as f:
            f.write("row,col,waits\n")
            h, w = self.wait_heatmap.shape
            for r in range(h):
                for c in range(w):
                    f.write(f"{r},{c},{int(self.wait_heatmap[r, c])}\n")


def _executed_edges(usage5_flat: np.ndarray, prev: np.ndarray, new: np.ndarray,
                    width: int) -> None:
    """Count each executed action on its directed edge (Wait on the self-edge)."""
    diff = new.astype(np.int64) - prev
    dcode = np.full(prev.shape[0], 4, np.int64)
    dcode[diff == 1] = 0
    dcode[diff == -width] = 1
    dcode[diff == -1] = 2
    dcode[diff == width] = 3
    np.add.at(usage5_flat, (dcode, prev), 1.0)


def _cnn_observation(usage5: np.ndarray, goals_flat: np.ndarray, grid: GridMap) -> np.ndarray:
    task_map = np.bincount(goals_flat, minlength=grid.num_cells).astype(np.float64)
    obs = np.concatenate([usage5, task_map.reshape(1, grid.height, grid.width)])
    return normalize_channels(obs)


def _default_policy(cfg: SimConfig) -> GuidancePolicy | None:
    if cfg.policy is not None:
        return cfg.policy
    if cfg.algorithm == "on+pibt" or cfg.algorithm == "p-on+gpibt":
        return cnn_policy()
    if cfg.algorithm == "on+gpibt":
        return wq_policy()
    return None


def run_simulation(cfg: SimConfig) -> SimulationReport:
    grid = cfg.grid
    num_agents = cfg.num_agents
    n = grid.num_cells
    policy = _default_policy(cfg)

    rng_pos = np.random.default_rng(np.random.SeedSequence((cfg.seed, 0x706F73)))
    free_flat = np.array([grid.flat(v) for v in grid.traversable_cells()], np.int64)
    pos = rng_pos.choice(free_flat, size=num_agents, replace=False).astype(np.int32)

    tasks = TaskSystem(grid, cfg.tasks, num_agents, cfg.seed)
    goals = np.array(
        [grid.flat(tasks.next_goal(i, 0, grid.unflat(int(pos[i])))) for i in range(num_agents)],
        np.int32)

    tiebreaks = initial_priorities(num_agents)
    elapsed = np.zeros(num_agents, np.float64)
    finished_per_step = np.zeros(cfg.num_steps, np.int64)
    wait_heat_flat = np.zeros(n, np.int64)
    traj = np.empty((cfg.num_steps + 1, num_agents), np.int32)
    traj[0] = pos

    algo = cfg.algorithm
    is_gpibt = algo.endswith("gpibt")
    usage5 = np.zeros((5, n), np.float64)  # executed-action window for CNN variants
    updates = 0
    lns_accepted = 0
    lns_attempted = 0

    if is_gpibt:
        if algo == "on+gpibt":
            if policy.arch == "windowed_quadratic":
                fn = EdgeWeightFn.quadratic(policy.theta, policy.meta.get("window", 5))
            else:
                fn = EdgeWeightFn.reduced_quadratic(policy.theta)
        elif algo == "hm+gpibt":
            fn = EdgeWeightFn.contra_outflow()
        elif algo == "p-on+gpibt":
            fn = EdgeWeightFn.static(np.ones((4, n)))
        else:
            if policy is not None:
                w4 = static_forward(policy, grid).reshape(4, n)
                fn = EdgeWeightFn.static(w4)
            else:
                fn = EdgeWeightFn.static(np.ones((4, n)))
        planner = GuidePlanner(grid, num_agents, cfg.seed, fn)
        for i in range(num_agents):
            planner.plan_agent(i, int(pos[i]), int(goals[i]))
        lns_rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 0x6C6E73)))
    else:
        guidance = uniform_guidance(grid, with_wait=True)
        if algo == "off+pibt" and policy is not None:
            guidance.set_all_weights(static_forward(policy, grid))
        planner = PibtPlanner(guidance, num_agents, cfg.seed)

    loop_seconds = 0.0

    for t in range(cfg.num_steps):
        step_start = time.perf_counter()
        tasks.maybe_resample_centers(t)

        if is_gpibt:
            if cfg.lns is not None:
                acc, att = planner.lns_round(lns_rng, pos, goals, cfg.lns)
                lns_accepted += acc
                lns_attempted += att
            v_next = planner.follow_step(t, pos, goals, elapsed + tiebreaks)
        else:
            v_next = planner.plan(t, pos, goals, elapsed + tiebreaks)

        new_pos = v_next.astype(np.int32, copy=True)
        if algo == "on+pibt" or algo == "p-on+gpibt":
            _executed_edges(usage5, pos, new_pos, grid.width)
        stayed = new_pos == pos
        np.add.at(wait_heat_flat, pos[stayed], 1)
        traj[t + 1] = new_pos
        pos = new_pos

        if is_gpibt:
            for i in range(num_agents):
                planner.advance(i, int(pos[i]))

        arrived = np.nonzero(pos == goals)[0]
        finished_per_step[t] = arrived.size
        elapsed += 1.0
        for i in arrived:
            elapsed[i] = 0.0
            goal = tasks.next_goal(int(i), t, grid.unflat(int(pos[i])))
            goals[i] = grid.flat(goal)
            if is_gpibt:
                planner.plan_agent(int(i), int(pos[i]), int(goals[i]))

        if (t + 1) % cfg.update_interval == 0:
            if algo == "on+pibt":
                obs = _cnn_observation(usage5.reshape(5, grid.height, grid.width),
                                       goals, grid)
                out = cnn_forward(policy, obs)
                guidance.set_all_weights(np.maximum(out, 0.0) + EPS_WEIGHT)
                planner.invalidate()
                usage5[:] = 0.0
                updates += 1
            elif algo == "p-on+gpibt":
                obs = _cnn_observation(usage5.reshape(5, grid.height, grid.width),
                                       goals, grid)
                out = cnn_forward(policy, obs)
                planner.set_static_weights(
                    (np.maximum(out[:4], 0.0) + 1.0).reshape(4, n))
                usage5[:] = 0.0
                updates += 1

        loop_seconds += time.perf_counter() - step_start

    problems = validate_trajectory(grid, traj)
    goals_finished = int(finished_per_step.sum())
    return SimulationReport(
        config=cfg.resolved(),
        throughput=goals_finished / cfg.num_steps,
        goals_finished=goals_finished,
        finished_per_step=finished_per_step,
        wait_heatmap=wait_heat_flat.reshape(grid.height, grid.width),
        conflicts_detected=len(problems),
        mean_step_wallclock=loop_seconds / cfg.num_steps,
        guidance_updates=updates,
        lns_accepted=lns_accepted,
        lns_attempted=lns_attempted,
        trajectory=traj,
    )


@dataclass
class BatchResult:
    mean: float
    std: float
    ci95: float
    throughputs: list[float]

    @property
    def interval(self) -> tuple[float, float]:
        return (self.mean - self.ci95, self.mean + self.ci95)


def _run_with_seed(cfg: SimConfig, seed: int) -> SimulationReport:
    return run_simulation(replace(cfg, seed=seed))


def batch_evaluate(cfg: SimConfig, seeds: list[int], workers: int = 1,
                   ) -> tuple[BatchResult, list[SimulationReport]]:
    """Run one config across seeds; normal-approximation 95% interval.

    Any run with validator findings aborts the whole batch.
    """
    if len(seeds) < 2:
        raise ValueError("batch evaluation needs at least 2 seeds")
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(_run_with_seed, [cfg] * len(seeds), seeds))
    else:
        reports = [_run_with_seed(cfg, s) for s in seeds]
    for s, rep in zip(seeds, reports):
        if rep.conflicts_detected:
            raise RuntimeError(
                f"seed {s}: trajectory failed validation with "
                f"{rep.conflicts_detected} findings")
    xs = np.array([r.throughput for r in reports], np.float64)
    std = float(xs.std(ddof=1))
    ci = 1.96 * std / np.sqrt(len(seeds))
    return BatchResult(float(xs.mean()), std, float(ci), xs.tolist()), reports


def deadlock_monitor(report: "SimulationReport | np.ndarray", window: int = 20,
                     stall_run: int = 200) -> tuple[np.ndarray, bool, int | None]:
    """Trailing moving average of finished-per-step plus a stall flag.

    The flag raises when the smoothed series is exactly zero for at least
    `stall_run` consecutive steps; the returned index is the step where the
    run first reaches that length.
    """
    series = np.asarray(getattr(report, "finished_per_step", report), np.float64)
    if window < 1:
        raise ValueError("window must be >= 1")
    smoothed = np.empty_like(series)
    csum = np.concatenate([[0.0], np.cumsum(series)])
    for t in range(series.shape[0]):
        lo = max(0, t - window + 1)
        smoothed[t] = (csum[t + 1] - csum[lo]) / (t + 1 - lo)
    run = 0
    for t in range(series.shape[0]):
        run = run + 1 if smoothed[t] == 0.0 else 0
        if run >= stall_run:
            return smoothed, True, t
    return smoothed, False, None
