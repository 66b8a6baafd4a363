"""Comparison methods: exhaustive hard allocations, per-bucket greedy, and
multiple-choice knapsack (MCKP) solvers on the cell means.

The knapsack solvers maximize total mean value subject to total mean cost
not exceeding a budget (the region's cost threshold).  Infeasible instances
return a `KnapsackResult` with ``feasible=False`` instead of raising.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .criterion import CriterionValue, SuccessRegion, _check_dims, criterion_from_params
from .model import PolicyCellStats, one_hot_allocation

BRUTEFORCE_LIMIT = 10**7
EXHAUSTIVE_LIMIT = 10**6
MCKP_SIZE_LIMIT = 10**4
_CHUNK = 1 << 16


class EnumerationLimitError(ValueError):
    pass


def _choices(start: int, stop: int, n_buckets: int, n_policies: int) -> np.ndarray:
    """Policy tuples with ranks ``start..stop-1`` in lexicographic order (bucket 0 most significant)."""
    idx = np.arange(start, stop, dtype=np.int64)
    out = np.empty((len(idx), n_buckets), dtype=np.int64)
    for g in range(n_buckets - 1, -1, -1):
        out[:, g] = idx % n_policies
        idx //= n_policies
    return out


def bruteforce(stats: PolicyCellStats, region: SuccessRegion, limit: int = BRUTEFORCE_LIMIT):
    """Best hard allocation by exhaustive search over all ``K**M`` policy tuples.

    Returns ``(allocation, CriterionValue)``.  Ties go to the lexicographically
    smallest tuple of policy indices.
    """
    _check_dims(stats, region)
    M, K, _ = stats.mean.shape
    total = K**M
    if total > limit:
        raise EnumerationLimitError(f"K**M = {K}**{M} = {total} exceeds the bruteforce limit {limit}")
    rows = np.arange(M)
    best_val, best_choice = -np.inf, None
    for start in range(0, total, _CHUNK):
        ch = _choices(start, min(start + _CHUNK, total), M, K)
        mean = stats.mean[rows, ch].sum(axis=1)
        cov = stats.cov[rows, ch].sum(axis=1)
        vals = criterion_from_params(mean, cov, region)
        i = int(np.argmax(vals))
        if vals[i] > best_val:
            best_val, best_choice = float(vals[i]), ch[i]
    return one_hot_allocation(best_choice, K), CriterionValue(best_val, "closed_form")


def greedy_1d(stats: PolicyCellStats, allow_value_projection: bool = False) -> np.ndarray:
    """One-hot allocation on the highest mean value in each bucket (ties: lowest index).

    Two-dimensional stats are rejected unless ``allow_value_projection`` is
    set, in which case only the value coordinate is used.
    """
    M, K, d = stats.mean.shape
    if d != 1 and not allow_value_projection:
        raise ValueError("greedy_1d needs one-dimensional outcomes (or allow_value_projection=True)")
    return one_hot_allocation(np.argmax(stats.mean[..., 0], axis=1), K)


@dataclass(frozen=True, eq=False)
class KnapsackProblem:
    """Maximize ``sum psi * values`` s.t. ``sum psi * costs <= budget``, rows of psi stochastic."""

    values: np.ndarray
    costs: np.ndarray
    budget: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        c = np.asarray(self.costs, dtype=float)
        if v.ndim != 2 or v.shape != c.shape:
            raise ValueError(f"values {v.shape} and costs {c.shape} must be matching 2-D arrays")
        if not (np.all(np.isfinite(v)) and np.all(np.isfinite(c)) and np.isfinite(self.budget)):
            raise ValueError("knapsack data must be finite")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "costs", c)
        object.__setattr__(self, "budget", float(self.budget))

    @classmethod
    def from_stats(cls, stats: PolicyCellStats, region: SuccessRegion) -> "KnapsackProblem":
        """Value/cost means of two-dimensional stats, budget = the region's cost threshold."""
        if stats.mean.shape[-1] != 2 or region.dim != 2:
            raise ValueError("knapsack baselines need (value, cost) outcomes")
        return cls(stats.mean[..., 0], stats.mean[..., 1], region.cost_threshold)

    def objective(self, psi) -> float:
        return float(np.sum(np.asarray(psi) * self.values))

    def cost(self, psi) -> float:
        return float(np.sum(np.asarray(psi) * self.costs))

    @property
    def tol(self) -> float:
        scale = max(1.0, abs(self.budget), float(np.abs(self.costs).sum()))
        return 1e-12 * scale


@dataclass(frozen=True, eq=False)
class KnapsackResult:
    feasible: bool
    allocation: Optional[np.ndarray] = None
    objective: Optional[float] = None
    cost: Optional[float] = None


def _bucket_frontier(costs: np.ndarray, values: np.ndarray) -> list:
    """Item indices on the upper concave (cost, value) hull of one bucket.

    Starts at the cheapest item (ties: highest value, then lowest index);
    every later item costs more and adds value at a strictly lower rate.
    """
    order = np.lexsort((np.arange(len(costs)), -values, costs))
    hull: list = []
    for k in order:
        if hull and values[k] <= values[hull[-1]]:
            continue                       # dominated: costs at least as much, no more value
        while len(hull) >= 2:
            i, j = hull[-2], hull[-1]
            # drop j unless the slope i->j is strictly greater than j->k
            lhs = (values[j] - values[i]) * (costs[k] - costs[j])
            rhs = (values[k] - values[j]) * (costs[j] - costs[i])
            if lhs > rhs:
                break
            hull.pop()
        hull.append(int(k))
    return hull


def _lp_greedy(problem: KnapsackProblem, buckets, budget: float, frontiers):
    """LP relaxation restricted to ``buckets``; returns ``(value, rows)`` or ``None`` if infeasible.

    ``rows`` maps each bucket to a list of ``(policy, weight)`` pairs.
    """
    v, c = problem.values, problem.costs
    rows = {}
    spent = 0.0
    value = 0.0
    steps = []
    for g in buckets:
        hull = frontiers[g]
        rows[g] = [(hull[0], 1.0)]
        spent += c[g, hull[0]]
        value += v[g, hull[0]]
        for j in range(1, len(hull)):
            a, b = hull[j - 1], hull[j]
            dc, dv = c[g, b] - c[g, a], v[g, b] - v[g, a]
            steps.append((-dv / dc, g, j, dc, dv))
    if spent > budget + problem.tol:
        return None
    remaining = budget - spent
    steps.sort()
    for _, g, j, dc, dv in steps:
        hull = frontiers[g]
        if dc <= remaining + problem.tol:
            remaining -= dc
            value += dv
            rows[g] = [(hull[j], 1.0)]
            continue
        t = max(remaining, 0.0) / dc
        if t > 0.0:
            rows[g] = [(hull[j - 1], 1.0 - t), (hull[j], t)]
            value += t * dv
        break
    return value, rows


def linprog_mckp(problem: KnapsackProblem) -> KnapsackResult:
    """Exact LP relaxation of the multiple-choice knapsack (soft allocation).

    Greedy over the per-bucket concave hull increments sorted by
    value-per-cost; the optimum has at most one fractional row, mixing two
    adjacent hull policies.
    """
    M, K = problem.values.shape
    frontiers = [_bucket_frontier(problem.costs[g], problem.values[g]) for g in range(M)]
    res = _lp_greedy(problem, range(M), problem.budget, frontiers)
    if res is None:
        return KnapsackResult(False)
    _, rows = res
    psi = np.zeros((M, K))
    for g, items in rows.items():
        for k, w in items:
            psi[g, k] += w
    return KnapsackResult(True, psi, problem.objective(psi), problem.cost(psi))


def _mckp_exhaustive(problem: KnapsackProblem):
    M, K = problem.values.shape
    rows = np.arange(M)
    best_val, best = -np.inf, None
    total = K**M
    for start in range(0, total, _CHUNK):
        ch = _choices(start, min(start + _CHUNK, total), M, K)
        cost = problem.costs[rows, ch].sum(axis=1)
        val = problem.values[rows, ch].sum(axis=1)
        val = np.where(cost <= problem.budget + problem.tol, val, -np.inf)
        i = int(np.argmax(val))
        if val[i] > best_val:
            best_val, best = float(val[i]), ch[i]
    return best


def _mckp_branch_and_bound(problem: KnapsackProblem):
    M, K = problem.values.shape
    v, c = problem.values, problem.costs
    frontiers = [_bucket_frontier(c[g], v[g]) for g in range(M)]
    min_cost_suffix = np.concatenate([np.cumsum(c.min(axis=1)[::-1])[::-1], [0.0]])
    tol = problem.tol
    best = {"value": -np.inf, "choice": None}
    choice = np.zeros(M, dtype=np.int64)

    def beats(candidate: float) -> bool:
        incumbent = best["value"]
        return incumbent == -np.inf or candidate > incumbent + 1e-12 * max(1.0, abs(incumbent))

    def visit(g: int, spent: float, value: float):
        if g == M:
            if beats(value):
                best["value"], best["choice"] = value, choice.copy()
            return
        remaining = problem.budget - spent
        if min_cost_suffix[g] > remaining + tol:
            return
        lp = _lp_greedy(problem, range(g, M), remaining, frontiers)
        if lp is None or not beats(value + lp[0]):
            return
        for k in range(K):
            if c[g, k] + min_cost_suffix[g + 1] > remaining + tol:
                continue
            choice[g] = k
            visit(g + 1, spent + c[g, k], value + v[g, k])

    visit(0, 0.0, 0.0)
    return best["choice"]


def mixedint_mckp(problem: KnapsackProblem, method: str = "auto") -> KnapsackResult:
    """Exact 0/1 multiple-choice knapsack (hard allocation).

    ``method="auto"`` enumerates when ``K**M <= 1e6`` and otherwise runs a
    depth-first branch-and-bound with the LP relaxation as bound.  Ties go
    to the lexicographically smallest policy tuple.
    """
    M, K = problem.values.shape
    if M * K > MCKP_SIZE_LIMIT:
        raise EnumerationLimitError(f"M*K = {M * K} exceeds {MCKP_SIZE_LIMIT}")
    if method == "auto":
        method = "exhaustive" if K**M <= EXHAUSTIVE_LIMIT else "bnb"
    if method == "exhaustive":
        choice = _mckp_exhaustive(problem)
    elif method == "bnb":
        choice = _mckp_branch_and_bound(problem)
    else:
        raise ValueError(f"unknown method {method!r}")
    if choice is None:
        return KnapsackResult(False)
    psi = one_hot_allocation(choice, K)
    return KnapsackResult(True, psi, problem.objective(psi), problem.cost(psi))
