"""Benchmark statistics over progression tables.

Covers the deviation of perturbed progression from the default setting (RMSD
and its per-model normalized variant), rank consistency between two score
sets (MMRV), Pearson correlation with its two-sided significance, and Beta
posteriors of success rates under a uniform prior.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import betainc

DEFAULT_FACTOR = "DEFAULT"

Cell = tuple[str, str, str]  # (model, task, perturbation)


@dataclass
class ProgressionTable:
    """Mean progression per (model, task, perturbation) cell, with the sample
    count and success count behind each mean."""

    values: dict[Cell, float] = field(default_factory=dict)
    counts: dict[Cell, int] = field(default_factory=dict)
    successes: dict[Cell, int] = field(default_factory=dict)

    def add_cell(self, model: str, task: str, perturbation: str,
                 mean_progression: float, count: int, successes: int) -> None:
        key = (model, task, perturbation)
        self.values[key] = float(mean_progression)
        self.counts[key] = int(count)
        self.successes[key] = int(successes)

    def models(self) -> list[str]:
        return sorted({m for m, _, _ in self.values})

    def tasks(self) -> list[str]:
        return sorted({t for _, t, _ in self.values})

    def perturbations(self) -> list[str]:
        return sorted({p for _, _, p in self.values})

    def to_json(self) -> dict:
        return {
            "cells": [
                {"model": m, "task": t, "perturbation": p,
                 "mean_progression": self.values[(m, t, p)],
                 "count": self.counts[(m, t, p)],
                 "successes": self.successes[(m, t, p)]}
                for (m, t, p) in sorted(self.values)
            ]
        }

    @staticmethod
    def from_json(d: dict) -> "ProgressionTable":
        table = ProgressionTable()
        for c in d["cells"]:
            table.add_cell(c["model"], c["task"], c["perturbation"],
                           c["mean_progression"], c["count"], c["successes"])
        return table


def _require_cells(table: ProgressionTable, perturbation: str, models, tasks) -> None:
    missing = []
    for m in models:
        for t in tasks:
            for p in (perturbation, DEFAULT_FACTOR):
                if (m, t, p) not in table.values:
                    missing.append((m, t, p))
    if missing:
        raise KeyError(f"missing table cells: {missing}")


def rmsd(table: ProgressionTable, perturbation: str) -> float:
    """Root-mean-square deviation of progression from the default setting,
    over all models and tasks; in [0, 1] for progression-valued tables."""
    models, tasks = table.models(), table.tasks()
    _require_cells(table, perturbation, models, tasks)
    total = 0.0
    for m in models:
        for t in tasks:
            diff = table.values[(m, t, perturbation)] - table.values[(m, t, DEFAULT_FACTOR)]
            total += diff * diff
    return math.sqrt(total / (len(models) * len(tasks)))


def normalized_rmsd(table: ProgressionTable, perturbation: str, model: str) -> Optional[float]:
    """Per-model RMSD over tasks divided by the model's mean default
    progression; None when that mean is zero (undefined).  Used only for
    ranking factors."""
    tasks = table.tasks()
    _require_cells(table, perturbation, [model], tasks)
    total = 0.0
    default_sum = 0.0
    for t in tasks:
        diff = table.values[(model, t, perturbation)] - table.values[(model, t, DEFAULT_FACTOR)]
        total += diff * diff
        default_sum += table.values[(model, t, DEFAULT_FACTOR)]
    mean_default = default_sum / len(tasks)
    if mean_default == 0.0:
        return None
    return math.sqrt(total / len(tasks)) / mean_default


def mmrv(real_scores: Sequence[float], sim_scores: Sequence[float]) -> float:
    """Mean Maximum Rank Violation between real and simulated policy scores.

    A pair violates when its simulated ordering disagrees with its real
    ordering; the violation weight is the real score gap.  Exact ties on
    either side are no violation.
    """
    if len(real_scores) != len(sim_scores):
        raise ValueError("score lists must have equal length")
    if len(real_scores) < 2:
        raise ValueError("need at least two policies")
    real = [float(v) for v in real_scores]
    sim = [float(v) for v in sim_scores]
    n = len(real)
    total = 0.0
    for i in range(n):
        worst = 0.0
        for j in range(n):
            if (sim[i] < sim[j]) != (real[i] < real[j]):
                worst = max(worst, abs(real[i] - real[j]))
        total += worst
    return total / n


def pearson(x: Sequence[float], y: Sequence[float]) -> Optional[float]:
    """Sample Pearson correlation; None when either input has zero variance."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.size < 2:
        raise ValueError("need two equal-length samples of size >= 2")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        return None
    return float(dx @ dy) / math.sqrt(sxx * syy)


def ttest_p(x: Sequence[float], y: Sequence[float]) -> Optional[float]:
    """Two-sided p-value for the Pearson correlation of paired samples, via
    the t distribution with n-2 degrees of freedom (incomplete-beta CDF)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.size < 3:
        raise ValueError("need paired samples of size >= 3")
    r = pearson(x, y)
    if r is None:
        return None
    n = x.size
    df = n - 2
    denom = 1.0 - r * r
    if denom <= 0.0:
        return 0.0
    t_sq = r * r * df / denom
    # two-sided p = I_{df/(df+t^2)}(df/2, 1/2)
    return float(betainc(df / 2.0, 0.5, df / (df + t_sq)))


@dataclass(frozen=True)
class BetaPosterior:
    alpha: float
    beta: float
    mean: float
    interval_95: tuple[float, float]

    def to_json(self) -> dict:
        return {"alpha": self.alpha, "beta": self.beta, "mean": self.mean,
                "interval_95": list(self.interval_95)}


def _beta_ppf_bisect(alpha: float, beta: float, prob: float) -> float:
    lo, hi = 0.0, 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if betainc(alpha, beta, mid) < prob:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def beta_posterior(successes: int, trials: int) -> BetaPosterior:
    """Posterior over the success rate under a uniform Beta(1, 1) prior, with
    the central 95% credible interval found by bisection."""
    if not (0 <= successes <= trials):
        raise ValueError("need 0 <= successes <= trials")
    alpha = 1.0 + successes
    beta = 1.0 + trials - successes
    mean = alpha / (alpha + beta)
    lo = _beta_ppf_bisect(alpha, beta, 0.025)
    hi = _beta_ppf_bisect(alpha, beta, 0.975)
    return BetaPosterior(alpha, beta, mean, (lo, hi))


@dataclass
class MetricsReport:
    """Derived statistics for one evaluation; building block for report files."""

    rmsd_per_factor: dict[str, float]
    normalized_rmsd: dict[str, dict[str, Optional[float]]]  # factor -> model -> value
    factor_ranking: list[str]  # by descending mean normalized RMSD
    beta_posteriors: dict[str, dict[str, BetaPosterior]]  # model -> task -> posterior
    pearson_r: Optional[float] = None
    p_value: Optional[float] = None
    mmrv_value: Optional[float] = None
    time_to_completion: dict[str, dict[str, float]] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "rmsd_per_factor": self.rmsd_per_factor,
            "normalized_rmsd": self.normalized_rmsd,
            "factor_ranking": self.factor_ranking,
            "beta_posteriors": {
                m: {t: b.to_json() for t, b in tasks.items()}
                for m, tasks in self.beta_posteriors.items()
            },
            "pearson_r": self.pearson_r,
            "p_value": self.p_value,
            "mmrv": self.mmrv_value,
            "time_to_completion": self.time_to_completion,
        }


def factor_ranking(norm_rmsd: dict[str, dict[str, Optional[float]]]) -> list[str]:
    """Factors by descending mean normalized RMSD, ties broken by factor id."""
    means = {}
    for factor, per_model in norm_rmsd.items():
        defined = [v for v in per_model.values() if v is not None]
        means[factor] = sum(defined) / len(defined) if defined else -1.0
    return sorted(means, key=lambda f: (-means[f], f))


def compute_report(
    table: ProgressionTable,
    real_values: Optional[dict[Cell, float]] = None,
    durations: Optional[dict[str, list[float]]] = None,
) -> MetricsReport:
    """Assemble all statistics from a progression table, plus real-world
    paired values and per-model success durations when available."""
    factors = [p for p in table.perturbations() if p != DEFAULT_FACTOR]
    models = table.models()
    rmsd_per_factor = {p: rmsd(table, p) for p in factors}
    norm = {p: {m: normalized_rmsd(table, p, m) for m in models} for p in factors}

    beta_post: dict[str, dict[str, BetaPosterior]] = {}
    for m in models:
        beta_post[m] = {}
        for t in table.tasks():
            key = (m, t, DEFAULT_FACTOR)
            if key in table.counts:
                beta_post[m][t] = beta_posterior(table.successes[key], table.counts[key])

    report = MetricsReport(
        rmsd_per_factor=rmsd_per_factor,
        normalized_rmsd=norm,
        factor_ranking=factor_ranking(norm),
        beta_posteriors=beta_post,
    )

    if real_values:
        paired = sorted(set(real_values) & set(table.values))
        if len(paired) >= 3:
            sim = [table.values[c] for c in paired]
            real = [real_values[c] for c in paired]
            report.pearson_r = pearson(real, sim)
            report.p_value = ttest_p(real, sim)
        per_model_cells = {m: [c for c in paired if c[0] == m] for m in models}
        usable = [m for m in models if per_model_cells[m]]
        if len(usable) >= 2:
            real_means = [float(np.mean([real_values[c] for c in per_model_cells[m]])) for m in usable]
            sim_means = [float(np.mean([table.values[c] for c in per_model_cells[m]])) for m in usable]
            report.mmrv_value = mmrv(real_means, sim_means)

    if durations:
        for m, vals in durations.items():
            if vals:
                arr = np.asarray(sorted(vals))
                report.time_to_completion[m] = {
                    "count": int(arr.size),
                    "p25": float(np.quantile(arr, 0.25)),
                    "p50": float(np.quantile(arr, 0.50)),
                    "p75": float(np.quantile(arr, 0.75)),
                    "p90": float(np.quantile(arr, 0.90)),
                }
    return report
