"""Return-probability models q(u) and the stationary probabilities they induce.

Two model families are supported: the parametric family q(u) = u(1-u)^(1-alpha)
with alpha in [0, 1), and grid models (21 uniform nodes on [0, 1], linear
interpolation, endpoints pinned to 0) used for learned return behavior.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

GRID_NODES = 21
GRID_DERIV_STEP = 1e-5  # central-difference step for grid-model derivatives


class ReturnModelError(ValueError):
    pass


@dataclass(frozen=True)
class ReturnModel:
    """A return-probability function q: [0,1] -> [0,1] with q(0) = q(1) = 0."""

    kind: str  # "parametric-alpha" | "grid"
    alpha: float = 0.0
    values: np.ndarray | None = field(default=None)

    def __post_init__(self):
        if self.kind == "parametric-alpha":
            if not (0.0 <= self.alpha < 1.0):
                raise ReturnModelError("alpha must lie in [0, 1)")
        elif self.kind == "grid":
            v = np.asarray(self.values, dtype=float)
            if v.shape != (GRID_NODES,):
                raise ReturnModelError(f"grid models need {GRID_NODES} node values")
            if v.min() < 0.0 or v.max() > 1.0:
                raise ReturnModelError("grid values must lie in [0, 1]")
            v = v.copy()
            v[0] = 0.0
            v[-1] = 0.0
            v.flags.writeable = False
            object.__setattr__(self, "values", v)
        else:
            raise ReturnModelError(f"unknown model kind {self.kind!r}")

    def cache_key(self) -> tuple:
        """Hashable identity used to memoize peaks and assumption checks."""
        if self.kind == "parametric-alpha":
            return ("parametric-alpha", self.alpha)
        return ("grid", self.values.tobytes())

    def to_json(self) -> str:
        if self.kind == "parametric-alpha":
            return json.dumps({"alpha": self.alpha})
        return json.dumps(list(self.values))

    @classmethod
    def from_json(cls, text: str) -> "ReturnModel":
        data = json.loads(text)
        if isinstance(data, dict):
            return parametric(float(data["alpha"]))
        return grid(data)


def parametric(alpha: float) -> ReturnModel:
    return ReturnModel(kind="parametric-alpha", alpha=alpha)


def grid(values) -> ReturnModel:
    return ReturnModel(kind="grid", values=np.asarray(values, dtype=float))


def _check_domain(u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if np.any(u < -1e-12) or np.any(u > 1.0 + 1e-12):
        raise ReturnModelError("utility outside [0, 1]")
    return np.clip(u, 0.0, 1.0)


def eval_q(model: ReturnModel, u):
    """q(u); grid models interpolate linearly between nodes."""
    u = _check_domain(u)
    if model.kind == "parametric-alpha":
        return u * (1.0 - u) ** (1.0 - model.alpha)
    nodes = np.linspace(0.0, 1.0, GRID_NODES)
    return np.interp(u, nodes, model.values)


def eval_q_prime(model: ReturnModel, u):
    """dq/du.

    Analytic for the parametric family; central differences with step
    ``GRID_DERIV_STEP`` for grid models. For alpha > 0 the derivative
    diverges at u = 1, so u must lie in [0, 1).
    """
    u = np.asarray(u, dtype=float)
    if model.kind == "parametric-alpha":
        e = 1.0 - model.alpha
        # q'(u) = (1-u)^(e-1) * (1 - u - u*e)
        return (1.0 - u) ** (e - 1.0) * (1.0 - u - u * e)
    h = GRID_DERIV_STEP
    lo = np.clip(u - h, 0.0, 1.0)
    hi = np.clip(u + h, 0.0, 1.0)
    return (eval_q(model, hi) - eval_q(model, lo)) / (hi - lo)


def pi_monopoly(model: ReturnModel, u):
    """Stationary in-system probability q(u) / (1 + q(u)) of the two-state chain."""
    q = eval_q(model, u)
    return q / (1.0 + q)


def pi_monopoly_prime(model: ReturnModel, u):
    """d/du of the two-state stationary probability: q'(u) / (1 + q(u))^2."""
    q = eval_q(model, u)
    return eval_q_prime(model, u) / (1.0 + q) ** 2


def pi_competition(model: ReturnModel, u, eps: float):
    """Stationary in-system probability of the three-state competition chain.

    pi(u) = q(u) / (1 + q(u) + (q(u)/eps)(1-u)); eps is the per-step
    probability of coming back from the competing site.
    """
    if eps <= 0.0:
        raise ReturnModelError("eps must be positive")
    u = _check_domain(u)
    q = eval_q(model, u)
    return q / (1.0 + q + (q / eps) * (1.0 - u))


@dataclass(frozen=True)
class AssumptionReport:
    a1_ok: bool
    a2_ok: bool
    a3_ok: bool
    max_second_diff: float

    @property
    def all_ok(self) -> bool:
        return self.a1_ok and self.a2_ok and self.a3_ok


def check_assumptions(model: ReturnModel, grid_size: int = 201) -> AssumptionReport:
    """Numerically check boundary, smoothness, and strict concavity of q.

    Also asserts the stationary probability of the two-state chain inherits
    strict concavity (its sampled second differences stay negative).
    """
    if grid_size < 11:
        raise ReturnModelError("grid_size must be at least 11")
    us = np.linspace(0.0, 1.0, grid_size)
    qs = eval_q(model, us)
    a1 = abs(qs[0]) < 1e-12 and abs(qs[-1]) < 1e-12
    d2 = qs[2:] - 2.0 * qs[1:-1] + qs[:-2]
    a2 = bool(np.all(np.isfinite(d2)))
    max_d2 = float(d2.max()) if a2 else float("nan")
    a3 = a2 and max_d2 < 0.0
    if a3:
        pis = pi_monopoly(model, us)
        pi_d2 = pis[2:] - 2.0 * pis[1:-1] + pis[:-2]
        a3 = bool(np.all(pi_d2 < 0.0))
    return AssumptionReport(a1_ok=a1, a2_ok=a2, a3_ok=a3, max_second_diff=max_d2)


def q_peak(model: ReturnModel) -> float:
    """The utility u' in (0, 1) where q'(u') = 0 (unique for concave models)."""
    lo, hi = 0.0, 1.0 - 1e-12
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if eval_q_prime(model, mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def argmax_pi_competition(model: ReturnModel, eps: float, tol: float = 1e-10) -> float:
    """Utility maximizing the competition stationary probability.

    Solves eps = -q(u)^2 / q'(u) on [u', 1] by bisection, where u' is the peak
    of q. The left side of that interval sends the ratio to +inf and the right
    side to q(1)^2-driven 0, so the root is unique; as eps shrinks the
    maximizer climbs toward 1.
    """
    if eps <= 0.0 or eps > 1.0:
        raise ReturnModelError("eps must lie in (0, 1]")
    if not check_assumptions(model).a3_ok:
        raise ReturnModelError("argmax_pi_competition needs a strictly concave model")

    def ratio(u: float) -> float:
        qp = eval_q_prime(model, u)
        if qp >= 0.0:
            return float("inf")
        return -eval_q(model, u) ** 2 / qp

    lo = q_peak(model)
    hi = 1.0 - 1e-12
    if ratio(hi) >= eps:
        return 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if ratio(mid) > eps:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
