"""Covariance Matrix Adaptation Evolution Strategy, (mu/mu_w, lambda) variant.

Self-contained implementation of the standard algorithm with rank-one and
rank-mu covariance updates and cumulative step-size adaptation, using Hansen's
canonical parameter formulas.  Selection is purely rank-based, so the sampled
candidate sequence is invariant to adding a constant to the objective.
"""

from __future__ import annotations

from typing import Callable

import numpy as np


def default_popsize(dim: int) -> int:
    return 4 + int(np.floor(3.0 * np.log(dim)))


class CMAES:
    """Ask/tell interface; `cma_es_minimize` is the usual entry point."""

    def __init__(self, init_mean, init_sigma: float, seed: int, popsize: int | None = None):
        self.mean = np.asarray(init_mean, dtype=np.float64).copy()
        n = self.mean.size
        self.n = n
        self.sigma = float(init_sigma)
        self.rng = np.random.Generator(np.random.PCG64(seed))

        self.lam = popsize if popsize is not None else default_popsize(n)
        self.mu = self.lam // 2
        w = np.log((self.lam + 1) / 2.0) - np.log(np.arange(1, self.mu + 1))
        self.weights = w / np.sum(w)
        self.mueff = float(np.sum(self.weights) ** 2 / np.sum(self.weights**2))

        self.cc = (4.0 + self.mueff / n) / (n + 4.0 + 2.0 * self.mueff / n)
        self.cs = (self.mueff + 2.0) / (n + self.mueff + 5.0)
        self.c1 = 2.0 / ((n + 1.3) ** 2 + self.mueff)
        self.cmu = min(
            1.0 - self.c1,
            2.0 * (self.mueff - 2.0 + 1.0 / self.mueff) / ((n + 2.0) ** 2 + self.mueff),
        )
        self.damps = 1.0 + 2.0 * max(0.0, np.sqrt((self.mueff - 1.0) / (n + 1.0)) - 1.0) + self.cs
        self.chi_n = np.sqrt(n) * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n))

        self.pc = np.zeros(n)
        self.ps = np.zeros(n)
        self.cov = np.eye(n)
        self.eig_basis = np.eye(n)
        self.eig_scale = np.ones(n)
        self.inv_sqrt_cov = np.eye(n)
        self.count_eval = 0
        self.best_x = self.mean.copy()
        self.best_f = np.inf

    def ask(self) -> np.ndarray:
        """Sample lambda candidates, shape (lam, n)."""
        z = self.rng.standard_normal((self.lam, self.n))
        y = (self.eig_basis * self.eig_scale) @ z.T  # (n, lam)
        self._pending = self.mean + self.sigma * y.T
        return self._pending.copy()

    def tell(self, candidates: np.ndarray, fitness) -> None:
        fitness = np.asarray(fitness, dtype=np.float64)
        self.count_eval += len(fitness)
        order = np.argsort(fitness, kind="stable")
        if fitness[order[0]] < self.best_f:
            self.best_f = float(fitness[order[0]])
            self.best_x = candidates[order[0]].copy()

        selected = candidates[order[: self.mu]]
        old_mean = self.mean
        self.mean = self.weights @ selected

        y_mean = (self.mean - old_mean) / self.sigma
        self.ps = (1.0 - self.cs) * self.ps + np.sqrt(
            self.cs * (2.0 - self.cs) * self.mueff
        ) * (self.inv_sqrt_cov @ y_mean)
        gens = self.count_eval / self.lam
        hsig = float(
            np.sum(self.ps**2) / self.n / (1.0 - (1.0 - self.cs) ** (2.0 * gens))
            < 2.0 + 4.0 / (self.n + 1.0)
        )
        self.pc = (1.0 - self.cc) * self.pc + hsig * np.sqrt(
            self.cc * (2.0 - self.cc) * self.mueff
        ) * y_mean

        artmp = (selected - old_mean) / self.sigma  # (mu, n)
        rank_mu = (artmp.T * self.weights) @ artmp
        self.cov = (
            (1.0 - self.c1 - self.cmu) * self.cov
            + self.c1
            * (np.outer(self.pc, self.pc) + (1.0 - hsig) * self.cc * (2.0 - self.cc) * self.cov)
            + self.cmu * rank_mu
        )
        self.sigma *= np.exp(
            (self.cs / self.damps) * (np.linalg.norm(self.ps) / self.chi_n - 1.0)
        )
        self._decompose()

    def _decompose(self) -> None:
        self.cov = np.triu(self.cov) + np.triu(self.cov, 1).T
        eigvals, basis = np.linalg.eigh(self.cov)
        eigvals = np.maximum(eigvals, 1e-20)
        self.eig_scale = np.sqrt(eigvals)
        self.eig_basis = basis
        self.inv_sqrt_cov = (basis / self.eig_scale) @ basis.T

    def should_stop(self) -> bool:
        # scale-based criteria only, so stopping is invariant to objective shifts
        if self.sigma * float(np.max(self.eig_scale)) < 1e-13:
            return True
        cond = float(np.max(self.eig_scale) / np.min(self.eig_scale)) ** 2
        return cond > 1e14


def cma_es_minimize(
    objective: Callable[[np.ndarray], float],
    init_mean,
    init_sigma: float,
    budget: int,
    seed: int,
    popsize: int | None = None,
) -> tuple[np.ndarray, float]:
    """Minimize `objective`; returns (best candidate, best objective).

    Runs whole generations until fewer than lambda evaluations remain in
    `budget`, then returns the best candidate evaluated so far.  Deterministic
    for a fixed seed.
    """
    es = CMAES(init_mean, init_sigma, seed, popsize)
    if budget < es.lam:
        raise ValueError(f"budget must cover at least one generation ({es.lam} evaluations)")
    # score the initial mean so the result can never be worse than the start
    es.best_x = es.mean.copy()
    es.best_f = float(objective(es.mean))
    es.count_eval = 1
    while es.count_eval + es.lam <= budget and not es.should_stop():
        xs = es.ask()
        fs = [float(objective(x)) for x in xs]
        es.tell(xs, fs)
    return es.best_x, es.best_f
