"""Greedy online selfish policy: users arrive one by one and each grabs the
assignment probabilities that maximize their own stationary probability over
the capacity left by earlier arrivals."""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .fair import solve_fair
from .market import FractionalMatching, InstanceSampler, MarketInstance, sample_instance
from .poa import EmpiricalPoAReport
from .selfish import MONOPOLY, Stationary, _check_models, peak_utility, pi_value

_CAP_TOL = 1e-9  # residual column capacity below this counts as exhausted


@dataclass(frozen=True)
class ArrivalSequence:
    order: np.ndarray  # permutation of rows 0..m-1
    instance: MarketInstance

    def __post_init__(self):
        order = np.asarray(self.order, dtype=int)
        if sorted(order.tolist()) != list(range(self.instance.m)):
            raise ValueError("order must be a permutation of the users")
        order = order.copy()
        order.flags.writeable = False
        object.__setattr__(self, "order", order)


@dataclass(frozen=True)
class OnlineSolution:
    matching: FractionalMatching
    value: float  # sum of stationary probabilities achieved by the greedy play


def greedy_online(
    seq: ArrivalSequence,
    models,
    stationary: Stationary = MONOPOLY,
) -> OnlineSolution:
    """Each arriving user maximizes their own pi over the residual capacities.

    The per-arrival problem is one-dimensional: the objective depends only on
    u_i, achievable utilities form the interval [0, U_max] (U_max by greedy
    fractional knapsack over the remaining column capacity), and pi_i rises to
    its peak and falls after it, so the best feasible utility is
    min(peak_i, U_max). The target is realized by filling higher-quality
    columns first, which uses the fewest columns; ties break to the lowest
    column index.
    """
    inst = seq.instance
    models = _check_models(inst, models)
    w = inst.w
    cap = np.ones(inst.n)
    x = np.zeros_like(w)
    for i in seq.order:
        open_cols = np.nonzero((cap > _CAP_TOL) & (w[i] > 0.0))[0]
        if len(open_cols) == 0:
            continue
        # stable sort on -w keeps lowest column index first among ties
        open_cols = open_cols[np.argsort(-w[i, open_cols], kind="stable")]
        budget = 1.0  # row mass
        target = peak_utility(models[i], stationary)
        achieved = 0.0
        for j in open_cols:
            if budget <= 0.0 or achieved >= target - 1e-15:
                break
            take = min(cap[j], budget, (target - achieved) / w[i, j])
            x[i, j] = take
            cap[j] -= take
            budget -= take
            achieved += take * w[i, j]
    matching = FractionalMatching.from_x(inst, x)
    value = float(sum(
        float(pi_value(models[i], stationary, matching.u[i])) for i in range(inst.m)
    ))
    return OnlineSolution(matching=matching, value=value)


def online_poa_empirical(
    models,
    sampler: InstanceSampler,
    m: int,
    n: int,
    trials: int,
    stationary: Stationary = MONOPOLY,
    threads: int = 1,
) -> EmpiricalPoAReport:
    """Ratio of greedy-online to fair total utility with a fresh random
    arrival order per trial."""
    if trials < 1:
        raise ValueError("trials must be at least 1")

    def one(trial: int) -> tuple:
        inst = sample_instance(sampler, m, n, trial)
        fair = solve_fair(inst)
        if fair.value <= 0.0:
            return (trial, sampler.seed, fair.value, 0.0, float("nan"))
        order_rng = np.random.default_rng(
            np.random.SeedSequence((sampler.seed, trial, 1))
        )
        seq = ArrivalSequence(order=order_rng.permutation(m), instance=inst)
        online = greedy_online(seq, models, stationary)
        value = float(online.matching.u.sum())
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
        "policy": "greedy-online",
    }
    return EmpiricalPoAReport(trials=trials, ratios=ratios, degenerate=degenerate,
                              settings=settings, records=records)


def write_online_csv(report: EmpiricalPoAReport, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trial", "order_seed", "online_value", "fair_value", "ratio"])
        for trial, seed, fv, ov, ratio in report.records:
            writer.writerow([trial, seed, f"{ov:.9g}", f"{fv:.9g}", f"{ratio:.9g}"])
