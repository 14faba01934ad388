import numpy as np
import pytest

from lmapf.guidance import uniform_guidance
from lmapf.heuristics import HeuristicCache, StaleTreeError

from conftest import make_map, random_positive_weights
from oracles import dijkstra_to_goal


def _random_grid(rng, h, w):
    while True:
        rows = [["." for _ in range(w)] for _ in range(h)]
        for _ in range(h * w // 5):
            rows[rng.integers(h)][rng.integers(w)] = "@"
        try:
            return make_map("\n".join("".join(r) for r in rows))
        except Exception:
            continue


def test_matches_dijkstra_exactly_small_batch():
    rng = np.random.default_rng(42)
    for _ in range(12):
        grid = _random_grid(rng, int(rng.integers(4, 13)), int(rng.integers(4, 13)))
        g = uniform_guidance(grid)
        g.set_all_weights(random_positive_weights(grid, rng))
        cache = HeuristicCache(g)
        nbr = grid.neighbor_table()
        w5 = g.weights_flat()
        cells = [grid.flat(v) for v in grid.traversable_cells()]
        goal = cells[int(rng.integers(len(cells)))]
        ref = dijkstra_to_goal(w5, nbr, goal)
        for _ in range(30):
            v = cells[int(rng.integers(len(cells)))]
            got = cache.distance(grid.unflat(goal), grid.unflat(v))
            assert got == ref[v]  # bitwise float equality, not approx


def test_wait_cost_does_not_affect_distances(empty8):
    g = uniform_guidance(empty8)
    w = np.array(g.weights)
    w[4][np.isfinite(w[4])] = 17.0  # outrageous wait cost
    g.set_all_weights(w)
    cache = HeuristicCache(g)
    assert cache.distance((0, 0), (0, 5)) == 5.0


def test_lazy_expansion_grows_on_demand(empty16):
    g = uniform_guidance(empty16)
    cache = HeuristicCache(g)
    goal = (0, 0)
    assert cache.distance(goal, (0, 1)) == 1.0
    early = cache.expansions_of(goal)
    assert early < empty16.free_count
    assert cache.distance(goal, (15, 15)) == 30.0
    late = cache.expansions_of(goal)
    assert early < late <= empty16.free_count


def test_trees_shared_by_goal(empty8):
    cache = HeuristicCache(uniform_guidance(empty8))
    s1 = cache.slot_for(empty8.flat((2, 2)))
    s2 = cache.slot_for(empty8.flat((2, 2)))
    s3 = cache.slot_for(empty8.flat((5, 5)))
    assert s1 == s2 != s3
    assert cache.tree_count == 2


def test_stale_tree_detection(empty8):
    g = uniform_guidance(empty8)
    cache = HeuristicCache(g)
    slot = cache.slot_for(empty8.flat((1, 1)))
    g.set_all_weights(np.array(g.weights))
    with pytest.raises(StaleTreeError):
        cache.distance((1, 1), (4, 4))
    # a fresh slot request after invalidation is fine
    cache.invalidate_all()
    assert cache.tree_count == 0
    new_slot = cache.slot_for(empty8.flat((1, 1)))
    assert cache.distance((1, 1), (4, 4)) == 6.0
    del slot, new_slot


def test_slot_pool_grows_past_initial_capacity(empty16):
    cache = HeuristicCache(uniform_guidance(empty16), initial_slots=2)
    goals = [(r, c) for r in range(4) for c in range(4)]
    for v in goals:
        cache.slot_for(empty16.flat(v))
    assert cache.tree_count == 16
    for v in goals:  # distances still correct after pool reallocation
        assert cache.distance(v, (15, 15)) == (15 - v[0]) + (15 - v[1])


def test_distances_on_blocked_map_detour():
    grid = make_map("""
        ...
        @@.
        ...
    """)
    cache = HeuristicCache(uniform_guidance(grid))
    # (2,0) must go around the wall: up is blocked
    assert cache.distance((0, 0), (2, 0)) == 6.0
