"""Regenerate the bundled map files.

Layouts are deterministic. The warehouse layout is pinned to exactly 1091
non-obstacle cells; the script refuses to write anything if that drifts.
"""
from __future__ import annotations

import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from lmapf.grid import CellKind, parse_map  # noqa: E402

OUT = Path(__file__).resolve().parent.parent / "src" / "lmapf" / "maps"

FREE, OBST, EP, WS = ".", "@", "E", "W"


def render(rows: list[list[str]], map_type: str = "octile") -> str:
    h, w = len(rows), len(rows[0])
    body = "\n".join("".join(r) for r in rows)
    return f"type {map_type}\nheight {h}\nwidth {w}\nmap\n{body}\n"


def empty(n: int) -> str:
    return render([[FREE] * n for _ in range(n)])


def random_map(n: int, fill: float, seed: int) -> str:
    rng = np.random.default_rng(seed)
    while True:
        rows = [[FREE] * n for _ in range(n)]
        k = int(round(n * n * fill))
        picks = rng.choice(n * n, size=k, replace=False)
        for p in picks:
            rows[p // n][p % n] = OBST
        try:
            parse_map(render(rows))
        except ValueError:
            continue
        return render(rows)


def warehouse() -> str:
    h, w = 33, 57
    rows = [[FREE] * w for _ in range(h)]
    bar_cols: list[int] = []
    for c0 in (5, 17, 29, 41):
        bar_cols.extend(range(c0, c0 + 11))
    band_tops = [3 + 3 * k for k in range(9)]
    for r0 in band_tops:
        for r in (r0, r0 + 1):
            for c in bar_cols:
                rows[r][c] = OBST
    # trim two shelf cells so the free count lands exactly on target
    rows[3][5] = FREE
    rows[28][51] = FREE
    for r0 in band_tops:
        for r in (r0 - 1, r0 + 2):
            for c in bar_cols:
                if rows[r][c] == FREE:
                    rows[r][c] = EP
    for r in range(1, h - 1, 2):
        rows[r][0] = WS
        rows[r][w - 1] = WS
    return render(rows)


def sortation() -> str:
    h, w = 33, 57
    rows = [[FREE] * w for _ in range(h)]
    for r in range(3, 30, 2):
        for c in range(5, 52, 2):
            rows[r][c] = OBST
    for r in range(2, 31):
        for c in range(4, 53):
            if rows[r][c] != FREE:
                continue
            touches = any(
                0 <= r + dr < h and 0 <= c + dc < w and rows[r + dr][c + dc] == OBST
                for dr, dc in ((0, 1), (-1, 0), (0, -1), (1, 0)))
            if touches:
                rows[r][c] = EP
    for r in range(1, h - 1, 2):
        rows[r][0] = WS
        rows[r][w - 1] = WS
    return render(rows)


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    texts = {
        "empty-8-8": empty(8),
        "empty-16-16": empty(16),
        "empty-32-32": empty(32),
        "random-32-32": random_map(32, 0.2, seed=9),
        "warehouse-33-57": warehouse(),
        "sortation-33-57": sortation(),
    }
    grid = parse_map(texts["warehouse-33-57"])
    assert grid.free_count == 1091, f"warehouse free count {grid.free_count} != 1091"
    assert grid.endpoints and grid.workstations
    sg = parse_map(texts["sortation-33-57"])
    assert sg.endpoints and sg.workstations
    for name, text in texts.items():
        g = parse_map(text)
        (OUT / f"{name}.map").write_text(text)
        print(f"{name}: {g.height}x{g.width}, free={g.free_count}, "
              f"E={len(g.endpoints)}, W={len(g.workstations)}")


if __name__ == "__main__":
    main()
