"""Quick end-to-end exercise of every algorithm variant on a small map."""
import time

from lmapf import ALGORITHMS, LnsConfig, SimConfig, TaskConfig, load_map, run_simulation

grid = load_map("empty-8-8")
t0 = time.time()
for algo in ALGORITHMS:
    for lns in (None, LnsConfig(iterations=2, neighborhood=4, time_limit_s=None)):
        if lns is not None and not algo.endswith("gpibt"):
            continue
        cfg = SimConfig(grid=grid, algorithm=algo, num_agents=8, num_steps=60,
                        update_interval=20, seed=3,
                        tasks=TaskConfig(kind="dynamic_gaussian", sigma=0.5,
                                         num_modes=2, resample_interval=30),
                        lns=lns, map_name="empty-8-8")
        rep = run_simulation(cfg)
        tag = algo + ("+lns" if lns else "")
        print(f"{tag:18s} throughput={rep.throughput:.3f} conflicts={rep.conflicts_detected} "
              f"updates={rep.guidance_updates} lns={rep.lns_accepted}/{rep.lns_attempted}")
        assert rep.conflicts_detected == 0, tag
print(f"total {time.time() - t0:.1f}s (includes kernel compilation)")
