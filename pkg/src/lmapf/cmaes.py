"""Covariance matrix adaptation evolution strategy, maximizing, from scratch.

Implements the standard rank-mu variant: log-rank recombination weights,
cumulative step-size adaptation, and rank-one plus rank-mu covariance
updates, with hyperparameters the usual functions of dimension and batch
size. The caller supplies fitnesses to maximize; ranking negates them
internally. Checkpoints round-trip the full sampler state, so long
optimizations are resumable.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

EIGEN_FLOOR = 1e-20


class BudgetExhausted(RuntimeError):
    pass


def default_batch_size(dim: int) -> int:
    return 4 + int(3 * np.log(dim))


class CmaesOptimizer:
    def __init__(self, dim: int, batch_size: int | None = None, sigma: float = 1.0,
                 seed: int = 0, budget: int | None = None,
                 init_mean: np.ndarray | None = None):
        if dim < 1:
            raise ValueError("dim must be positive")
        if sigma <= 0:
            raise ValueError("initial step size must be positive")
        if init_mean is not None:
            init_mean = np.asarray(init_mean, dtype=np.float64)
            if init_mean.shape != (dim,):
                raise ValueError(f"init_mean shape {init_mean.shape} != ({dim},)")
            if not np.all(np.isfinite(init_mean)):
                raise ValueError("init_mean must be finite")
        self.dim = dim
        self.batch = batch_size if batch_size is not None else default_batch_size(dim)
        if self.batch < 2:
            raise ValueError("batch size must be at least 2")
        self.budget = budget
        self.rng = np.random.default_rng(seed)

        d = float(dim)
        mu = self.batch // 2
        raw = np.log(mu + 0.5) - np.log(np.arange(1, mu + 1))
        self.weights = raw / raw.sum()
        self.mu = mu
        self.mu_eff = 1.0 / float((self.weights ** 2).sum())

        self.c_sigma = (self.mu_eff + 2) / (d + self.mu_eff + 5)
        self.d_sigma = (1 + 2 * max(0.0, np.sqrt((self.mu_eff - 1) / (d + 1)) - 1)
                        + self.c_sigma)
        self.c_c = (4 + self.mu_eff / d) / (d + 4 + 2 * self.mu_eff / d)
        self.c_1 = 2 / ((d + 1.3) ** 2 + self.mu_eff)
        self.c_mu = min(1 - self.c_1,
                        2 * (self.mu_eff - 2 + 1 / self.mu_eff) / ((d + 2) ** 2 + self.mu_eff))
        self.chi_n = np.sqrt(d) * (1 - 1 / (4 * d) + 1 / (21 * d * d))

        self.mean = init_mean.copy() if init_mean is not None else np.zeros(dim)
        self.sigma = float(sigma)
        self.cov = np.eye(dim)
        self.p_sigma = np.zeros(dim)
        self.p_c = np.zeros(dim)
        self.generation = 0
        self.evals_used = 0
        self.best_fitness = -np.inf
        self.best_theta = np.zeros(dim)
        self._decompose()

    def _decompose(self) -> None:
        cov = (self.cov + self.cov.T) / 2
        vals, vecs = np.linalg.eigh(cov)
        floored = np.maximum(vals, EIGEN_FLOOR)
        if not np.array_equal(floored, vals):
            # only rebuild C when the floor engaged; the reconstruction is
            # not bit-identical and would break checkpoint round-trips
            self.cov = (vecs * floored) @ vecs.T
        self._eigvecs = vecs
        self._eigsqrt = np.sqrt(floored)

    def ask(self) -> np.ndarray:
        """Batch of candidates drawn from N(mean, sigma^2 C)."""
        if self.budget is not None and self.evals_used >= self.budget:
            raise BudgetExhausted(
                f"evaluation budget {self.budget} exhausted after {self.evals_used}")
        z = self.rng.standard_normal((self.batch, self.dim))
        y = (z * self._eigsqrt) @ self._eigvecs.T
        return self.mean + self.sigma * y

    def tell(self, candidates: np.ndarray, fitnesses: np.ndarray) -> None:
        """Rank-based distribution update; larger fitness is better.

        Non-finite fitnesses rank worst. A generation with all-equal
        fitnesses carries no ranking information: the mean and covariance
        stay put and only the step-size path decays.
        """
        candidates = np.asarray(candidates, np.float64)
        fit = np.asarray(fitnesses, np.float64).copy()
        if candidates.shape != (self.batch, self.dim) or fit.shape != (self.batch,):
            raise ValueError("candidates/fitnesses shape mismatch with batch size")
        fit[~np.isfinite(fit)] = -np.inf
        self.generation += 1
        self.evals_used += self.batch

        gen_best = int(np.lexsort((np.arange(self.batch), -fit))[0])
        if fit[gen_best] > self.best_fitness:
            self.best_fitness = float(fit[gen_best])
            self.best_theta = candidates[gen_best].copy()

        if np.all(fit == fit[0]):
            self.p_sigma = (1 - self.c_sigma) * self.p_sigma
            self.p_c = (1 - self.c_c) * self.p_c
            self.sigma *= np.exp((self.c_sigma / self.d_sigma)
                                 * (np.linalg.norm(self.p_sigma) / self.chi_n - 1))
            return

        order = np.lexsort((np.arange(self.batch), -fit))
        sel = candidates[order[:self.mu]]
        old_mean = self.mean
        y_sel = (sel - old_mean) / self.sigma
        y_w = self.weights @ y_sel
        self.mean = old_mean + self.sigma * y_w

        inv_sqrt_y = self._eigvecs @ ((self._eigvecs.T @ y_w) / self._eigsqrt)
        self.p_sigma = ((1 - self.c_sigma) * self.p_sigma
                        + np.sqrt(self.c_sigma * (2 - self.c_sigma) * self.mu_eff) * inv_sqrt_y)
        ps_norm = float(np.linalg.norm(self.p_sigma))
        denom = np.sqrt(1 - (1 - self.c_sigma) ** (2 * self.generation))
        h_sigma = ps_norm / denom < (1.4 + 2 / (self.dim + 1)) * self.chi_n

        self.p_c = ((1 - self.c_c) * self.p_c
                    + h_sigma * np.sqrt(self.c_c * (2 - self.c_c) * self.mu_eff) * y_w)
        rank_one = np.outer(self.p_c, self.p_c)
        if not h_sigma:
            rank_one = rank_one + self.c_c * (2 - self.c_c) * self.cov
        rank_mu = (y_sel.T * self.weights) @ y_sel
        self.cov = ((1 - self.c_1 - self.c_mu) * self.cov
                    + self.c_1 * rank_one + self.c_mu * rank_mu)
        self.sigma *= np.exp((self.c_sigma / self.d_sigma) * (ps_norm / self.chi_n - 1))
        self._decompose()

    # -- persistence ---------------------------------------------------------

    def save(self, path: str | Path) -> None:
        scalars = {
            "dim": self.dim, "batch": self.batch, "budget": self.budget,
            "sigma": self.sigma, "generation": self.generation,
            "evals_used": self.evals_used, "best_fitness": self.best_fitness,
            "rng_state": self.rng.bit_generator.state,
        }
        np.savez(path, mean=self.mean, cov=self.cov, p_sigma=self.p_sigma,
                 p_c=self.p_c, best_theta=self.best_theta,
                 scalars=np.frombuffer(json.dumps(scalars).encode(), dtype=np.uint8))

    @staticmethod
    def load(path: str | Path) -> "CmaesOptimizer":
        with np.load(path) as data:
            scalars = json.loads(bytes(data["scalars"]).decode())
            opt = CmaesOptimizer(scalars["dim"], scalars["batch"],
                                 sigma=scalars["sigma"], budget=scalars["budget"])
            opt.mean = data["mean"].copy()
            opt.cov = data["cov"].copy()
            opt.p_sigma = data["p_sigma"].copy()
            opt.p_c = data["p_c"].copy()
            opt.best_theta = data["best_theta"].copy()
        opt.generation = scalars["generation"]
        opt.evals_used = scalars["evals_used"]
        opt.best_fitness = scalars["best_fitness"]
        opt.rng.bit_generator.state = scalars["rng_state"]
        opt._decompose()
        return opt
