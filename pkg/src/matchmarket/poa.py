"""Price-of-anarchy bound and its Monte-Carlo verification.

The constant lower bound on selfish-vs-fair welfare depends only on the
return functions: with H = max_i q_i'(0), the bound is L/2 where
L = min_i ubar_i(c), ubar_i(c) is the utility at which the stationary
probability's derivative equals c, and c is the fixed point of
c = (H/2) L(c). Both root-finding problems are monotone, so nested
bisection converges unconditionally.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import returns
from .fair import solve_fair
from .market import InstanceSampler, sample_instance
from .returns import ReturnModel
from .selfish import MONOPOLY, Stationary, pi_prime, solve_selfish

OUTER_TOL = 1e-8
INNER_TOL = 1e-12
OUTER_MAX_ITERS = 200


class BoundError(ValueError):
    pass


@dataclass(frozen=True)
class PoABoundReport:
    H: float
    h: float  # min_i q_i'(0), the admissible upper end for c (diagnostic)
    c: float
    L: float
    bound: float
    u_bars: np.ndarray


@dataclass(frozen=True)
class EmpiricalPoAReport:
    trials: int
    ratios: list[float]
    degenerate: int
    settings: dict = field(default_factory=dict)
    # per-trial rows (trial, seed, benchmark_value, achieved_value, ratio);
    # degenerate trials keep a row with ratio = nan
    records: list[tuple] = field(default_factory=list)

    @property
    def min_ratio(self) -> float:
        return min(self.ratios) if self.ratios else float("nan")

    @property
    def mean_ratio(self) -> float:
        return float(np.mean(self.ratios)) if self.ratios else float("nan")


def _ubar(model: ReturnModel, c: float) -> float:
    """Unique positive root of pi'(u) = c; pi' decreases from q'(0) to q'(1) < 0."""
    lo, hi = 0.0, 1.0 - 1e-12
    while hi - lo > INNER_TOL:
        mid = 0.5 * (lo + hi)
        if float(pi_prime(model, MONOPOLY, mid)) > c:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def theorem1_bound(models) -> PoABoundReport:
    """Constant lower bound on the price of anarchy for concave return models."""
    models = list(models)
    for mod in models:
        if not returns.check_assumptions(mod).a3_ok:
            raise BoundError("all return models must be strictly concave on [0, 1]")
    slopes0 = [float(returns.eval_q_prime(mod, 0.0)) for mod in models]
    H = max(slopes0)
    h = min(slopes0)
    if H <= 0.0:
        raise BoundError("needs a model with positive slope at zero utility")

    def L(c: float) -> float:
        return min(_ubar(mod, c) for mod in models)

    lo, hi = 1e-12, h - 1e-12
    c = 0.5 * (lo + hi)
    for _ in range(OUTER_MAX_ITERS):
        c = 0.5 * (lo + hi)
        resid = (H / 2.0) * L(c) - c  # strictly decreasing in c
        if abs(resid) <= OUTER_TOL:
            break
        if resid > 0.0:
            lo = c
        else:
            hi = c
    u_bars = np.array([_ubar(mod, c) for mod in models])
    Lc = float(u_bars.min())
    return PoABoundReport(H=H, h=h, c=c, L=Lc, bound=Lc / 2.0, u_bars=u_bars)


def empirical_poa(
    models,
    sampler: InstanceSampler,
    m: int,
    n: int,
    trials: int,
    stationary: Stationary = MONOPOLY,
    threads: int = 1,
) -> EmpiricalPoAReport:
    """Ratio of selfish to fair total utility across random weight matrices.

    Trials whose fair optimum is zero have an undefined ratio; they are
    skipped and counted as degenerate. Trials are independent with per-trial
    RNG streams, so the report is identical for any ``threads``.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    models = list(models)

    def one(trial: int) -> tuple:
        inst = sample_instance(sampler, m, n, trial)
        fair = solve_fair(inst)
        if fair.value <= 0.0:
            return (trial, sampler.seed, fair.value, 0.0, float("nan"))
        selfish = solve_selfish(inst, models, stationary, seed=sampler.seed)
        value = float(selfish.matching.u.sum())
        return (trial, sampler.seed, fair.value, value, value / fair.value)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(one, range(trials)))
    else:
        records = [one(t) for t in range(trials)]
    ratios = [rec[4] for rec in records if rec[4] == rec[4]]
    degenerate = trials - len(ratios)
    if not ratios:
        raise ValueError("all trials degenerate: every fair optimum was zero")
    settings = {
        "m": m,
        "n": n,
        "sampler": sampler.distribution,
        "seed": sampler.seed,
        "stationary": stationary.kind,
        "eps": stationary.eps if stationary.kind == "competition" else None,
    }
    return EmpiricalPoAReport(trials=trials, ratios=ratios, degenerate=degenerate,
                              settings=settings, records=records)


def competition_sweep(
    models,
    sampler: InstanceSampler,
    m: int,
    n: int,
    trials: int,
    eps_list,
    threads: int = 1,
) -> dict[float, EmpiricalPoAReport]:
    """Empirical PoA under the competition chain for each eps, mirroring
    the convergence of selfish matching to fair matching as eps shrinks."""
    out: dict[float, EmpiricalPoAReport] = {}
    for eps in eps_list:
        out[float(eps)] = empirical_poa(
            models, sampler, m, n, trials,
            Stationary("competition", float(eps)), threads=threads,
        )
    return out


def write_trials_csv(report: EmpiricalPoAReport, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trial", "seed", "fair_value", "selfish_value", "ratio"])
        for trial, seed, fv, sv, ratio in report.records:
            writer.writerow([trial, seed, f"{fv:.9g}", f"{sv:.9g}", f"{ratio:.9g}"])


def write_summary_json(report: EmpiricalPoAReport, path) -> None:
    payload = {
        "trials": report.trials,
        "degenerate": report.degenerate,
        "min_ratio": report.min_ratio,
        "mean_ratio": report.mean_ratio,
        "settings": report.settings,
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def write_sweep_csv(sweep: dict[float, EmpiricalPoAReport], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["eps", "min_ratio", "mean_ratio", "degenerate"])
        for eps in sorted(sweep, reverse=True):
            rep = sweep[eps]
            writer.writerow([f"{eps:.9g}", f"{rep.min_ratio:.9g}",
                             f"{rep.mean_ratio:.9g}", rep.degenerate])
