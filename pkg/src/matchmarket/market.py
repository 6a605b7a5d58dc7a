"""Market instances, fractional matchings, and seeded instance samplers."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FEAS_TOL = 1e-9


class MarketError(ValueError):
    """Invalid market data (bad weights, dimension mismatch, bad sampler)."""


@dataclass(frozen=True)
class MarketInstance:
    """A two-sided market given by its m-by-n matrix of match qualities."""

    w: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        if w.ndim != 2 or w.size == 0:
            raise MarketError("weight matrix must be a non-empty 2-D array")
        if not np.all(np.isfinite(w)):
            raise MarketError("weight matrix contains NaN or infinite entries")
        if w.min() < 0.0 or w.max() > 1.0:
            raise MarketError("weights must lie in [0, 1]")
        w = w.copy()
        w.flags.writeable = False
        object.__setattr__(self, "w", w)

    @property
    def m(self) -> int:
        return self.w.shape[0]

    @property
    def n(self) -> int:
        return self.w.shape[1]


def make_instance(w) -> MarketInstance:
    return MarketInstance(np.asarray(w, dtype=float))


@dataclass(frozen=True)
class FractionalMatching:
    """A doubly-substochastic assignment x together with the utilities it induces."""

    x: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        u = np.asarray(self.u, dtype=float)
        if x.min() < -1e-12:
            raise MarketError("assignment probabilities must be nonnegative")
        if x.sum(axis=1).max() > 1.0 + FEAS_TOL:
            raise MarketError("a row sum exceeds 1")
        if x.sum(axis=0).max() > 1.0 + FEAS_TOL:
            raise MarketError("a column sum exceeds 1")
        if u.min() < -FEAS_TOL or u.max() > 1.0 + FEAS_TOL:
            raise MarketError("utilities must lie in [0, 1]")
        x = x.copy()
        u = u.copy()
        x.flags.writeable = False
        u.flags.writeable = False
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "u", u)

    @classmethod
    def from_x(cls, inst: MarketInstance, x) -> "FractionalMatching":
        x = np.asarray(x, dtype=float)
        return cls(x=x, u=utilities(inst, x))


def utilities(inst: MarketInstance, x) -> np.ndarray:
    """Per-row utilities u_i = sum_j w_ij x_ij."""
    x = np.asarray(x, dtype=float)
    if x.shape != inst.w.shape:
        raise MarketError(
            f"assignment shape {x.shape} does not match instance {inst.w.shape}"
        )
    return (inst.w * x).sum(axis=1)


@dataclass(frozen=True)
class InstanceSampler:
    """Seeded sampler of random weight matrices.

    Identical (seed, trial, m, n) always reproduces the same instance: each
    draw uses a fresh generator keyed by ``SeedSequence((seed, trial))``, so
    parallel trials get independent reproducible streams.
    """

    distribution: str = "beta"  # "beta" | "uniform" | "explicit"
    a: float = 2.0
    b: float = 2.0
    seed: int = 0
    matrix: np.ndarray | None = field(default=None)

    def __post_init__(self):
        if self.distribution not in ("beta", "uniform", "explicit"):
            raise MarketError(f"unknown distribution {self.distribution!r}")
        if self.distribution == "beta" and (self.a <= 0 or self.b <= 0):
            raise MarketError("Beta parameters must be positive")
        if self.distribution == "explicit" and self.matrix is None:
            raise MarketError("explicit sampler needs a matrix")

    def rng(self, trial: int = 0) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence((self.seed, trial)))


def sample_instance(sampler: InstanceSampler, m: int, n: int, trial: int = 0) -> MarketInstance:
    if m < 1 or n < 1:
        raise MarketError("m and n must be at least 1")
    if sampler.distribution == "explicit":
        return make_instance(sampler.matrix)
    rng = sampler.rng(trial)
    if sampler.distribution == "beta":
        w = rng.beta(sampler.a, sampler.b, size=(m, n))
    else:
        w = rng.uniform(0.0, 1.0, size=(m, n))
    return MarketInstance(w)


def write_instance(inst: MarketInstance, csv_path, source: str = "", seed: int | None = None):
    """Write an instance as a CSV matrix plus a JSON sidecar with metadata."""
    csv_path = Path(csv_path)
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in inst.w:
            writer.writerow([f"{v:.9g}" for v in row])
    sidecar = {"m": inst.m, "n": inst.n, "source": source, "seed": seed}
    csv_path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2) + "\n")


def read_instance(csv_path) -> MarketInstance:
    rows = []
    with open(csv_path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise MarketError(f"{csv_path}: line {lineno}: {exc}") from exc
    if not rows:
        raise MarketError(f"{csv_path}: empty instance file")
    width = len(rows[0])
    for lineno, row in enumerate(rows, start=1):
        if len(row) != width:
            raise MarketError(f"{csv_path}: line {lineno}: ragged row")
    return make_instance(rows)
