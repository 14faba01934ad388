import numpy as np
import pytest

from lmapf.harness import SimConfig
from lmapf.optimize import (candidate_seed, optimize_policy, template_policy,
                            _score_one)
from lmapf.tasks import TaskConfig


def base_cfg(grid, algo="on+gpibt"):
    return SimConfig(grid=grid, algorithm=algo, num_agents=8, num_steps=40,
                     update_interval=20, seed=0,
                     tasks=TaskConfig(kind="dynamic_gaussian", sigma=0.5,
                                      num_modes=2, resample_interval=20))


def test_candidate_seed_is_stable():
    assert candidate_seed(7, 3, 2, 1) == candidate_seed(7, 3, 2, 1)
    seeds = {candidate_seed(7, g, c, r)
             for g in range(3) for c in range(3) for r in range(2)}
    assert len(seeds) == 18


def test_template_policy_archs(empty8):
    cfg = base_cfg(empty8)
    assert template_policy("wq", cfg).arch == "windowed_quadratic"
    assert template_policy("reduced", cfg).arch == "reduced_quadratic"
    assert template_policy("cnn", cfg).arch == "cnn"
    with_wait = template_policy("static", base_cfg(empty8, "off+pibt"))
    without = template_policy("static", base_cfg(empty8, "off+gpibt"))
    assert with_wait.param_count > without.param_count  # wait edges included
    with pytest.raises(ValueError):
        template_policy("mlp", cfg)


def test_score_one_returns_neg_inf_on_bad_candidate(empty8):
    cfg = base_cfg(empty8)
    from lmapf.optimize import template_policy as tp
    from dataclasses import replace
    cfg = replace(cfg, policy=tp("wq", cfg))
    assert _score_one((cfg, np.zeros(3), 1)) == -np.inf  # wrong theta size


def test_optimize_history_and_budget(empty8):
    res = optimize_policy("wq", base_cfg(empty8), n_eval=12, batch=4, n_e=1,
                          master_seed=3)
    assert len(res.history) == 3
    assert res.history[-1].evals_used == 12
    assert res.policy.arch == "windowed_quadratic"
    assert np.isfinite(res.best_fitness)
    bests = [h.best_fitness for h in res.history]
    assert bests == sorted(bests)  # best-so-far never regresses
    assert res.best_fitness == max(h.gen_best for h in res.history)
    csv = res.history_csv()
    assert csv.startswith("generation,evals_used")
    assert len(csv.strip().splitlines()) == 4


def test_optimize_resume_matches_straight_run(tmp_path, empty8):
    cfg = base_cfg(empty8)
    straight = optimize_policy("wq", cfg, n_eval=12, batch=4, n_e=1, master_seed=9)
    ck = tmp_path / "ck"
    optimize_policy("wq", cfg, n_eval=8, batch=4, n_e=1, master_seed=9,
                    checkpoint_dir=ck, checkpoint_every=1)
    resumed = optimize_policy("wq", cfg, n_eval=12, batch=4, n_e=1, master_seed=9,
                              resume_from=ck / "cmaes_state.npz")
    assert resumed.best_fitness == straight.best_fitness
    assert np.array_equal(resumed.policy.theta, straight.policy.theta)
    assert [h.generation for h in resumed.history] == [3]


def test_resume_setup_mismatch_rejected(tmp_path, empty8):
    cfg = base_cfg(empty8)
    ck = tmp_path / "ck"
    optimize_policy("wq", cfg, n_eval=4, batch=4, n_e=1, checkpoint_dir=ck,
                    checkpoint_every=1)
    with pytest.raises(ValueError):
        optimize_policy("wq", cfg, n_eval=8, batch=6, n_e=1,
                        resume_from=ck / "cmaes_state.npz")
    with pytest.raises(ValueError):
        optimize_policy("reduced", cfg, n_eval=8, batch=4, n_e=1,
                        resume_from=ck / "cmaes_state.npz")
