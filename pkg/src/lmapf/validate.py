"""Independent trajectory checks.

Deliberately free of any planner imports: adjacency is recomputed from raw
row/column arithmetic so a planner bug cannot hide behind shared code.
"""
from __future__ import annotations

import numpy as np

from .grid import GridMap


def validate_trajectory(grid: GridMap, traj: np.ndarray) -> list[str]:
    """All conflict and legality violations in `traj`, as readable strings.

    `traj` has shape (T+1, num_agents) and holds flat cell indices; row 0 is
    the start configuration. An empty list means the trajectory is valid.
    """
    traj = np.asarray(traj)
    if traj.ndim != 2:
        raise ValueError("trajectory must be 2-D (steps+1, agents)")
    steps, num_agents = traj.shape
    n = grid.num_cells
    problems: list[str] = []

    if (traj < 0).any() or (traj >= n).any():
        problems.append("trajectory contains out-of-range cell indices")
        return problems

    blocked = grid.obstacle_flat()
    bad = np.nonzero(blocked[traj])
    for t, a in zip(*bad):
        problems.append(f"t={t}: agent {a} occupies non-traversable cell {traj[t, a]}")

    rows = traj // grid.width
    cols = traj % grid.width
    for t in range(steps - 1):
        dr = np.abs(rows[t + 1] - rows[t])
        dc = np.abs(cols[t + 1] - cols[t])
        illegal = np.nonzero(dr + dc > 1)[0]
        for a in illegal:
            problems.append(
                f"t={t}->{t + 1}: agent {a} jumps {traj[t, a]} -> {traj[t + 1, a]}")

    for t in range(steps):
        cells, counts = np.unique(traj[t], return_counts=True)
        for cell in cells[counts > 1]:
            agents = np.nonzero(traj[t] == cell)[0]
            problems.append(
                f"t={t}: vertex conflict at cell {cell} between agents {list(agents)}")

    for t in range(steps - 1):
        cur, nxt = traj[t], traj[t + 1]
        moved = np.nonzero(cur != nxt)[0]
        # swap conflict: some pair exchanges cells across one step
        key_fwd = cur[moved].astype(np.int64) * n + nxt[moved]
        key_rev = nxt[moved].astype(np.int64) * n + cur[moved]
        rev_set = dict(zip(key_rev.tolist(), moved.tolist()))
        seen = set()
        for i, k in zip(moved, key_fwd.tolist()):
            j = rev_set.get(k)
            if j is not None and j != i:
                pair = (min(int(i), int(j)), max(int(i), int(j)))
                if pair not in seen:
                    seen.add(pair)
                    problems.append(
                        f"t={t}->{t + 1}: swap conflict between agents {pair[0]} and {pair[1]}")
    return problems


def assert_valid(grid: GridMap, traj: np.ndarray) -> None:
    problems = validate_trajectory(grid, traj)
    if problems:
        head = "; ".join(problems[:5])
        raise AssertionError(f"{len(problems)} trajectory violations: {head}")
