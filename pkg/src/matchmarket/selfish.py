"""Selfish matching: maximize expected returning users over the matching polytope.

The objective sum_i pi_i(u_i) is concave for monopoly stationaries with
strictly concave q, and the solver then runs away-step conditional gradient
(Frank-Wolfe) iterations whose linear subproblems are assignment problems on
the per-edge gradient weights. Each pi_i is single-peaked, so the objective is
clamped at the per-user peak utility; this leaves the optimum unchanged
(rows can always be scaled down) while making the clamped objective monotone,
and the returned matching is row-shrunk so no user lands past their peak.

For competition stationaries or learned (non-concave) models the objective is
not concave; the solver falls back to multistart local search from random
polytope vertices plus the fair solution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import returns
from .fair import AssignmentResult, best_matching, max_weight_assignment, solve_fair
from .market import FractionalMatching, MarketInstance
from .returns import ReturnModel

MAX_ITERS = 10_000
GAP_TOL_PER_USER = 1e-7
MULTISTART_RESTARTS = 16

_peak_cache: dict[tuple, float] = {}
_concavity_cache: dict[tuple, bool] = {}


@dataclass(frozen=True)
class Stationary:
    """Which Markov chain drives the return objective."""

    kind: str = "monopoly"  # "monopoly" | "competition"
    eps: float = 1.0

    def __post_init__(self):
        if self.kind not in ("monopoly", "competition"):
            raise ValueError(f"unknown stationary kind {self.kind!r}")
        if self.kind == "competition" and not (0.0 < self.eps <= 1.0):
            raise ValueError("eps must lie in (0, 1]")


MONOPOLY = Stationary("monopoly")


def competition(eps: float) -> Stationary:
    return Stationary("competition", eps)


def pi_value(model: ReturnModel, stat: Stationary, u):
    if stat.kind == "monopoly":
        return returns.pi_monopoly(model, u)
    return returns.pi_competition(model, u, stat.eps)


def pi_prime(model: ReturnModel, stat: Stationary, u):
    u = np.asarray(u, dtype=float)
    q = returns.eval_q(model, np.clip(u, 0.0, 1.0))
    qp = returns.eval_q_prime(model, u)
    if stat.kind == "monopoly":
        return qp / (1.0 + q) ** 2
    denom = 1.0 + q + (q / stat.eps) * (1.0 - u)
    return (qp + q * q / stat.eps) / denom**2


def peak_utility(model: ReturnModel, stat: Stationary) -> float:
    """Utility maximizing pi for this user; pi is increasing below, decreasing above."""
    key = (model.cache_key(), stat.kind, stat.eps)
    cached = _peak_cache.get(key)
    if cached is None:
        if stat.kind == "monopoly":
            cached = returns.q_peak(model)
        else:
            cached = returns.argmax_pi_competition(model, stat.eps)
        _peak_cache[key] = cached
    return cached


def _is_concave(model: ReturnModel) -> bool:
    key = model.cache_key()
    cached = _concavity_cache.get(key)
    if cached is None:
        cached = returns.check_assumptions(model).a3_ok
        _concavity_cache[key] = cached
    return cached


@dataclass(frozen=True)
class KKTReport:
    stationarity: float
    complementary_slackness: float
    dual_feasibility: float

    @property
    def max_residual(self) -> float:
        return max(self.stationarity, self.complementary_slackness, self.dual_feasibility)


@dataclass(frozen=True)
class SelfishSolution:
    matching: FractionalMatching
    value: float
    fw_gap: float
    iterations: int
    beta: np.ndarray
    sigma: np.ndarray
    mu: np.ndarray
    mode: str  # "concave-exact" | "multistart-local"


def _check_models(inst: MarketInstance, models) -> list[ReturnModel]:
    models = list(models)
    if len(models) != inst.m:
        raise ValueError(f"need one return model per row: got {len(models)} for m={inst.m}")
    return models


class _Compiled:
    """Vectorized batch evaluation of the per-user objective and gradient.

    Identical models are grouped so a market with one shared model costs a
    single numpy expression per evaluation regardless of m.
    """

    def __init__(self, models, stat: Stationary):
        self.stat = stat
        self.m = len(models)
        grouped: dict[tuple, tuple[ReturnModel, list[int]]] = {}
        for i, mod in enumerate(models):
            grouped.setdefault(mod.cache_key(), (mod, []))[1].append(i)
        self.groups = [(mod, np.array(ix)) for mod, ix in grouped.values()]
        self._nodes = np.linspace(0.0, 1.0, returns.GRID_NODES)

    def _q(self, U: np.ndarray) -> np.ndarray:
        q = np.empty(U.shape)
        nodes = self._nodes
        for mod, ix in self.groups:
            sub = U[..., ix]
            if mod.kind == "parametric-alpha":
                q[..., ix] = sub * (1.0 - sub) ** (1.0 - mod.alpha)
            else:
                q[..., ix] = np.interp(sub.ravel(), nodes, mod.values).reshape(sub.shape)
        return q

    def _qp(self, U: np.ndarray) -> np.ndarray:
        qp = np.empty(U.shape)
        for mod, ix in self.groups:
            qp[..., ix] = returns.eval_q_prime(mod, U[..., ix])
        return qp

    def objective(self, U: np.ndarray) -> np.ndarray:
        """Sum_i pi_i(U[..., i]) for a batch of utility vectors."""
        q = self._q(U)
        if self.stat.kind == "monopoly":
            pi = q / (1.0 + q)
        else:
            pi = q / (1.0 + q + (q / self.stat.eps) * (1.0 - U))
        return pi.sum(axis=-1)

    def grad_rows(self, u: np.ndarray) -> np.ndarray:
        """Per-user pi'(u_i); evaluate strictly below 1 for alpha > 0 models."""
        u = np.minimum(u, 1.0 - 1e-9)
        q = self._q(u)
        qp = self._qp(u)
        if self.stat.kind == "monopoly":
            return qp / (1.0 + q) ** 2
        eps = self.stat.eps
        return (qp + q * q / eps) / (1.0 + q + (q / eps) * (1.0 - u)) ** 2


def _objective(models, stat, u) -> float:
    return float(_Compiled(models, stat).objective(np.asarray(u, dtype=float)))


def _vertex_matrix(row_match, shape) -> np.ndarray:
    x = np.zeros(shape)
    for i, j in enumerate(row_match):
        if j >= 0:
            x[i, j] = 1.0
    return x


def _line_search(f_batch, gamma_max: float, points: int = 129, max_stages: int = 24) -> float:
    """Exact-enough 1-D maximization via repeated vectorized grid refinement.

    Each stage evaluates the slice on a uniform grid and zooms into the cells
    adjacent to the best point, shrinking the bracket by ~points/2 per stage;
    refinement continues until the bracket is negligible relative to the best
    step found. On a concave slice this is exact bracketing; on a non-concave
    one the first dense grid makes missing the global cell unlikely.
    """
    lo, hi = 0.0, gamma_max
    best_g, best_v = 0.0, -np.inf
    for _ in range(max_stages):
        gs = np.linspace(lo, hi, points)
        vals = f_batch(gs)
        k = int(np.argmax(vals))
        if vals[k] > best_v:
            best_v = float(vals[k])
            best_g = float(gs[k])
        lo = gs[max(k - 1, 0)]
        hi = gs[min(k + 1, points - 1)]
        if hi - lo <= 1e-10 * (1.0 + best_g):
            break
    return best_g


def _shrink_to_peaks(inst: MarketInstance, x: np.ndarray, peaks) -> np.ndarray:
    """Scale down rows whose utility exceeds the user's peak."""
    x = x.copy()
    u = (inst.w * x).sum(axis=1)
    for i in range(inst.m):
        if u[i] > peaks[i] > 0.0:
            x[i] *= peaks[i] / u[i]
    return x


def _project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    rho = np.nonzero(u * np.arange(1, len(v) + 1) > (css - 1.0))[0][-1]
    theta = (css[rho] - 1.0) / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def _correct_weights(comp: _Compiled, peaks, UV: np.ndarray, lam: np.ndarray,
                     iters: int = 300) -> np.ndarray:
    """Maximize the clamped objective over convex weights of the active set.

    ``UV[k]`` is the per-user utility vector of active vertex k; the weight
    problem is concave over the simplex and solved by projected gradient
    ascent with backtracking.
    """
    t = 1.0
    for _ in range(iters):
        u = lam @ UV
        uc = np.minimum(u, peaks)
        grow = np.where(u >= peaks, 0.0, comp.grad_rows(uc))
        g = UV @ grow
        cur = float(comp.objective(uc))
        while t > 1e-14:
            cand = _project_simplex(lam + t * g)
            uc2 = np.minimum(cand @ UV, peaks)
            if float(comp.objective(uc2)) >= cur + 1e-14:
                break
            t *= 0.5
        else:
            break
        lam = cand
        t = min(t * 2.0, 1e3)
    return lam


def _afw(inst: MarketInstance, models, stat, peaks, gap_tol: float):
    """Fully-corrective Frank-Wolfe on the clamped objective.

    Each iteration adds the LP-oracle vertex and then reoptimizes the convex
    weights over the whole active set, which avoids the zig-zagging of
    plain pairwise steps on the clamped (flat-beyond-peak) objective. The
    empty matching stays in the active set so total mass may stay below 1.
    """
    w = inst.w
    m, n = w.shape
    comp = _Compiled(models, stat)
    empty = tuple([-1] * m)
    active: dict[tuple, float] = {empty: 1.0}
    vertices: dict[tuple, np.ndarray] = {empty: np.zeros((m, n))}
    x = np.zeros((m, n))
    gap = np.inf
    grad = np.zeros((m, n))
    it = 0
    for it in range(1, MAX_ITERS + 1):
        u = (w * x).sum(axis=1)
        grow = np.where(u >= peaks, 0.0, comp.grad_rows(np.minimum(u, peaks)))
        grad = grow[:, None] * w
        row_match, s_value = best_matching(grad)
        gap = float(s_value - (grad * x).sum())
        if gap <= gap_tol:
            break
        s_key = tuple(row_match)
        vertices.setdefault(s_key, _vertex_matrix(row_match, (m, n)))
        active.setdefault(s_key, 0.0)
        keys = sorted(active)
        lam = np.array([active[k] for k in keys])
        UV = np.stack([(w * vertices[k]).sum(axis=1) for k in keys])
        lam = _correct_weights(comp, peaks, UV, lam)
        active = {k: float(a) for k, a in zip(keys, lam) if a > 1e-14}
        active.setdefault(empty, 0.0)
        vertices = {k: vertices[k] for k in active}
        x = np.zeros((m, n))
        for k, a in active.items():
            x = x + a * vertices[k]
    return x, gap, it, grad


def _random_vertex(m: int, n: int, rng: np.random.Generator) -> np.ndarray:
    perm = rng.permutation(n)
    keep = rng.random(m) < 0.7
    x = np.zeros((m, n))
    for i in range(min(m, n)):
        if keep[i]:
            x[i, perm[i]] = 1.0
    return x


def _local_fw(inst: MarketInstance, models, stat, x0: np.ndarray, iters: int = 2000):
    """Vanilla Frank-Wolfe ascent with dense line search (non-concave objectives)."""
    w = inst.w
    comp = _Compiled(models, stat)
    x = x0.copy()
    gap = np.inf
    it = 0
    prev = -np.inf
    for it in range(1, iters + 1):
        u = (w * x).sum(axis=1)
        grow = comp.grad_rows(u)
        g = grow[:, None] * w
        row_match, s_value = best_matching(g)
        s = _vertex_matrix(row_match, w.shape)
        gap = float(s_value - (g * x).sum())
        if abs(gap) <= 1e-9 * max(1, inst.m):
            break
        du = (w * (s - x)).sum(axis=1)

        def slice_obj(gammas):
            U = np.clip(u[None, :] + np.outer(gammas, du), 0.0, 1.0)
            return comp.objective(U)

        gamma = _line_search(slice_obj, 1.0)
        val = float(slice_obj(np.array([gamma]))[0])
        if gamma <= 1e-15 or val <= prev + 1e-14:
            break
        prev = val
        x = x + gamma * (s - x)
    return x, gap, it


def solve_selfish(
    inst: MarketInstance,
    models,
    stationary: Stationary = MONOPOLY,
    seed: int = 0,
) -> SelfishSolution:
    models = _check_models(inst, models)
    concave = stationary.kind == "monopoly" and all(_is_concave(mod) for mod in models)
    gap_tol = GAP_TOL_PER_USER * inst.m

    if concave:
        peaks = np.array([peak_utility(mod, stationary) for mod in models])
        x, gap, iters, _ = _afw(inst, models, stationary, peaks, gap_tol)
        x = _shrink_to_peaks(inst, x, peaks)
        mode = "concave-exact"
    else:
        rng = np.random.default_rng(np.random.SeedSequence((seed, 1)))
        starts = [_random_vertex(inst.m, inst.n, rng) for _ in range(MULTISTART_RESTARTS)]
        starts.append(solve_fair(inst).matching.x.copy())
        best = None
        for x0 in starts:
            cand = _local_fw(inst, models, stationary, x0)
            if best is None:
                best = cand
                continue
            val_c = _objective(models, stationary, (inst.w * cand[0]).sum(axis=1))
            val_b = _objective(models, stationary, (inst.w * best[0]).sum(axis=1))
            if val_c > val_b + 1e-12 or (
                abs(val_c - val_b) <= 1e-12
                and tuple(cand[0].ravel()) < tuple(best[0].ravel())
            ):
                best = cand
        x, gap, iters = best
        mode = "multistart-local"

    x = np.clip(x, 0.0, None)
    matching = FractionalMatching.from_x(inst, x)
    value = _objective(models, stationary, matching.u)
    grow = np.array([float(pi_prime(mod, stationary, min(ui, 1.0 - 1e-9)))
                     for mod, ui in zip(models, matching.u)])
    if concave:
        grow = np.where(matching.u >= peaks - 1e-15, 0.0, grow)
    final = max_weight_assignment(grow[:, None] * inst.w)
    beta, sigma = final.beta, final.sigma
    mu = beta[:, None] + sigma[None, :] - grow[:, None] * inst.w
    return SelfishSolution(
        matching=matching,
        value=value,
        fw_gap=max(gap, 0.0),
        iterations=iters,
        beta=beta,
        sigma=sigma,
        mu=mu,
        mode=mode,
    )


def kkt_residual(
    inst: MarketInstance,
    models,
    x,
    beta,
    sigma,
    mu=None,
    stationary: Stationary = MONOPOLY,
) -> KKTReport:
    """Residuals of the first-order optimality system at (x, beta, sigma, mu).

    If mu is omitted it is recovered from stationarity, so the reported
    stationarity residual is zero and all slackness lands in the other terms.
    """
    models = _check_models(inst, models)
    x = np.asarray(x, dtype=float)
    beta = np.asarray(beta, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if beta.shape != (inst.m,) or sigma.shape != (inst.n,):
        raise ValueError("multiplier shapes do not match the instance")
    u = (inst.w * x).sum(axis=1)
    grow = np.array([float(pi_prime(mod, stationary, min(ui, 1.0 - 1e-9)))
                     for mod, ui in zip(models, u)])
    g = grow[:, None] * inst.w
    lag = beta[:, None] + sigma[None, :] - g
    if mu is None:
        mu = lag
    mu = np.asarray(mu, dtype=float)
    stat_res = float(np.abs(lag - mu).max())
    comp = max(
        float(np.abs(mu * x).max()),
        float(np.abs(beta * (x.sum(axis=1) - 1.0)).max()),
        float(np.abs(sigma * (x.sum(axis=0) - 1.0)).max()),
    )
    dual = max(0.0, -float(min(beta.min(), sigma.min(), mu.min())))
    return KKTReport(stationarity=stat_res, complementary_slackness=comp, dual_feasibility=dual)


def kkt_residual_of(inst: MarketInstance, models, sol: SelfishSolution,
                    stationary: Stationary = MONOPOLY) -> KKTReport:
    return kkt_residual(inst, models, sol.matching.x, sol.beta, sol.sigma,
                        mu=sol.mu, stationary=stationary)


def solve_selfish_integral(
    inst: MarketInstance,
    models,
    stationary: Stationary = MONOPOLY,
) -> SelfishSolution:
    """Best integral matching: per-edge objective pi_i(w_ij) reduces to assignment."""
    models = _check_models(inst, models)
    v = np.zeros(inst.w.shape)
    for i, mod in enumerate(models):
        v[i] = pi_value(mod, stationary, inst.w[i])
    res = max_weight_assignment(v)
    x = res.x_matrix(inst.w.shape)
    matching = FractionalMatching.from_x(inst, x)
    grow = np.array([float(pi_prime(mod, stationary, min(ui, 1.0 - 1e-9)))
                     for mod, ui in zip(models, matching.u)])
    mu = res.beta[:, None] + res.sigma[None, :] - grow[:, None] * inst.w
    return SelfishSolution(
        matching=matching,
        value=res.value,
        fw_gap=float("nan"),
        iterations=0,
        beta=res.beta,
        sigma=res.sigma,
        mu=mu,
        mode="integral",
    )
