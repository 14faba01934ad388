"""Policy optimization against simulated throughput.

Ties the evolution strategy to the simulator: each candidate parameter
vector is scored by the mean throughput of a few simulations whose seeds
derive from (master seed, generation, candidate, replicate), so the result
is independent of evaluation order and worker count.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .cmaes import CmaesOptimizer
from .harness import SimConfig, run_simulation
from .policies import (GuidancePolicy, cnn_policy, reduced_quadratic_policy,
                       static_policy, wq_policy)

log = logging.getLogger(__name__)

_ARCH_ALIASES = {
    "cnn": "cnn",
    "wq": "windowed_quadratic",
    "windowed_quadratic": "windowed_quadratic",
    "reduced": "reduced_quadratic",
    "reduced_quadratic": "reduced_quadratic",
    "static": "static_weights",
    "static_weights": "static_weights",
}


def template_policy(arch: str, cfg: SimConfig) -> GuidancePolicy:
    arch = _ARCH_ALIASES.get(arch.lower())
    if arch is None:
        raise ValueError(f"unknown policy arch {arch!r}")
    if arch == "cnn":
        return cnn_policy()
    if arch == "windowed_quadratic":
        return wq_policy()
    if arch == "reduced_quadratic":
        return reduced_quadratic_policy()
    return static_policy(cfg.grid, with_wait=cfg.algorithm == "off+pibt")


def candidate_seed(master_seed: int, generation: int, candidate: int, replicate: int) -> int:
    ss = np.random.SeedSequence((master_seed, generation, candidate, replicate))
    return int(ss.generate_state(1, np.uint64)[0])


def _score_one(args) -> float:
    cfg, theta, seed = args
    try:
        rep = run_simulation(replace(cfg, policy=cfg.policy.with_theta(theta), seed=seed))
        if rep.conflicts_detected:
            log.error("candidate run seed=%d produced %d conflicts", seed,
                      rep.conflicts_detected)
            return -np.inf
        return rep.throughput
    except Exception:
        log.exception("candidate run seed=%d failed", seed)
        return -np.inf


@dataclass
class GenerationRecord:
    generation: int
    evals_used: int
    best_fitness: float
    gen_best: float
    gen_mean: float
    sigma: float


@dataclass
class OptimizeResult:
    policy: GuidancePolicy
    best_fitness: float
    history: list[GenerationRecord]

    def history_csv(self) -> str:
        lines = ["generation,evals_used,best_fitness,gen_best,gen_mean,sigma"]
        for h in self.history:
            lines.append(f"{h.generation},{h.evals_used},{h.best_fitness!r},"
                         f"{h.gen_best!r},{h.gen_mean!r},{h.sigma!r}")
        return "\n".join(lines) + "\n"


def optimize_policy(arch: str, base_cfg: SimConfig, n_eval: int, batch: int,
                    n_e: int, master_seed: int = 0, workers: int = 1,
                    sigma: float = 1.0, init_theta: np.ndarray | None = None,
                    checkpoint_dir: str | Path | None = None,
                    checkpoint_every: int = 10,
                    resume_from: str | Path | None = None) -> OptimizeResult:
    """Evolve `arch` policy parameters to maximize mean throughput.

    `n_eval` counts candidate evaluations (each costs `n_e` simulations);
    the loop runs full generations until the budget is spent, so n_eval < batch
    still runs one generation. `init_theta` centers the search on a known-good
    parameter vector instead of zeros.
    """
    template = template_policy(arch, base_cfg)
    cfg = replace(base_cfg, policy=template)
    if resume_from is not None:
        opt = CmaesOptimizer.load(resume_from)
        if opt.dim != template.param_count or opt.batch != batch:
            raise ValueError("checkpoint does not match this optimization setup")
    else:
        opt = CmaesOptimizer(template.param_count, batch, sigma=sigma,
                             seed=candidate_seed(master_seed, 0, 0, 0),
                             init_mean=init_theta)
    pool = None
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        pool = ProcessPoolExecutor(max_workers=workers)
    history: list[GenerationRecord] = []
    try:
        while opt.evals_used < n_eval:
            gen = opt.generation + 1
            cands = opt.ask()
            jobs = [(cfg, cands[i], candidate_seed(master_seed, gen, i, r))
                    for i in range(batch) for r in range(n_e)]
            if pool is not None:
                scores = list(pool.map(_score_one, jobs, chunksize=1))
            else:
                scores = [_score_one(j) for j in jobs]
            per_cand = np.array(scores, np.float64).reshape(batch, n_e)
            fitness = per_cand.mean(axis=1)
            opt.tell(cands, fitness)
            finite = fitness[np.isfinite(fitness)]
            history.append(GenerationRecord(
                generation=opt.generation,
                evals_used=opt.evals_used,
                best_fitness=opt.best_fitness,
                gen_best=float(finite.max()) if finite.size else -np.inf,
                gen_mean=float(finite.mean()) if finite.size else -np.inf,
                sigma=float(opt.sigma)))
            log.info("gen %d evals %d best %.4f gen-best %.4f sigma %.3g",
                     opt.generation, opt.evals_used, opt.best_fitness,
                     history[-1].gen_best, opt.sigma)
            if checkpoint_dir is not None and (opt.generation % checkpoint_every == 0
                                               or opt.evals_used >= n_eval):
                ckdir = Path(checkpoint_dir)
                ckdir.mkdir(parents=True, exist_ok=True)
                opt.save(ckdir / "cmaes_state.npz")
                template.with_theta(opt.best_theta).save(ckdir / "best_theta.json")
    finally:
        if pool is not None:
            pool.shutdown()
    return OptimizeResult(policy=template.with_theta(opt.best_theta),
                          best_fitness=opt.best_fitness, history=history)
