"""Projected gradient ascent of the success probability over allocations."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .criterion import CriterionValue, SuccessRegion, _check_dims, criterion_from_params
from .gradients import closed_form_value_and_grad, grad_lemma1
from .model import PolicyCellStats, check_allocation, uniform_allocation

STALL_GRAD_NORM = 1e-12
STALL_CRITERION = 1e-9

INIT_KINDS = ("uniform", "warm_start", "explore")
BACKENDS = ("closed_form", "lemma1_mc")


class OptimizationError(FloatingPointError):
    """Gradient evaluation produced non-finite values."""

    def __init__(self, step: int, message: str):
        super().__init__(f"step {step}: {message}")
        self.step = step


def project_simplex(v) -> np.ndarray:
    """Euclidean projection of a vector onto the probability simplex.

    Sort-based algorithm: find the largest ``j`` with
    ``u_j - (sum_{i<=j} u_i - 1) / j > 0`` over the descending sort ``u``
    and shift by that threshold.
    """
    return project_allocation(np.asarray(v, dtype=float)[None, :])[0]


def project_allocation(psi_raw) -> np.ndarray:
    """Project each row of an ``(M, K)`` matrix onto the probability simplex."""
    x = np.asarray(psi_raw, dtype=float)
    if x.ndim != 2:
        raise ValueError(f"expected a 2-D array, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("cannot project non-finite entries")
    K = x.shape[1]
    u = -np.sort(-x, axis=1)
    css = np.cumsum(u, axis=1) - 1.0
    j = np.arange(1, K + 1)
    cond = u - css / j > 0
    rho = K - 1 - np.argmax(cond[:, ::-1], axis=1)
    theta = css[np.arange(len(x)), rho] / (rho + 1)
    out = np.maximum(x - theta[:, None], 0.0)
    # fold the residual rounding error into the largest entry
    out[np.arange(len(x)), out.argmax(axis=1)] += 1.0 - out.sum(axis=1)
    return out


def random_allocations(n: int, n_buckets: int, n_policies: int, rng) -> np.ndarray:
    """``n`` allocations with rows i.i.d. uniform on the simplex (normalized exponentials)."""
    e = rng.standard_exponential((n, n_buckets, n_policies))
    return e / e.sum(axis=-1, keepdims=True)


def explore_init(stats: PolicyCellStats, region: SuccessRegion, n_random: int = 50_000,
                 seed=0, batch: int = 10_000) -> np.ndarray:
    """Best of ``n_random`` uniformly drawn allocations under the closed-form criterion.

    Ties go to the earliest draw.
    """
    _check_dims(stats, region)
    if n_random < 1:
        raise ValueError("n_random must be >= 1")
    M, K, _ = stats.mean.shape
    rng = np.random.default_rng(seed)
    best_val, best_psi = -math.inf, None
    remaining = n_random
    while remaining > 0:
        size = min(batch, remaining)
        cand = random_allocations(size, M, K, rng)
        mean = np.einsum("bgk,gkd->bd", cand, stats.mean)
        cov = np.einsum("bgk,gkde->bde", cand, stats.cov)
        vals = criterion_from_params(mean, cov, region)
        i = int(np.argmax(vals))
        if vals[i] > best_val:
            best_val, best_psi = float(vals[i]), cand[i]
        remaining -= size
    return best_psi


@dataclass
class OptimizerConfig:
    """Settings for `run`.

    ``init`` is one of ``"uniform"``, ``"warm_start"`` (uses ``warm_start``)
    or ``"explore"`` (best of ``explore_n`` random allocations drawn with
    ``explore_seed``).  ``backend`` selects the closed-form gradient or the
    score-function Monte Carlo with ``mc_samples`` draws per step.
    """

    learning_rate: float = 0.1
    n_steps: int = 10_000
    init: str = "uniform"
    warm_start: Optional[np.ndarray] = None
    explore_n: int = 50_000
    explore_seed: int = 0
    backend: str = "closed_form"
    mc_samples: int = 100_000
    mc_seed: int = 0
    trace_every: int = 100

    def __post_init__(self):
        if not (self.learning_rate >= 0.0 and math.isfinite(self.learning_rate)):
            raise ValueError("learning_rate must be a finite non-negative number")
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        if self.init not in INIT_KINDS:
            raise ValueError(f"init must be one of {INIT_KINDS}, got {self.init!r}")
        if self.init == "warm_start" and self.warm_start is None:
            raise ValueError("warm_start init requires an allocation")
        if self.explore_n < 1:
            raise ValueError("explore_n must be >= 1")
        if self.backend not in BACKENDS:
            raise ValueError(f"backend must be one of {BACKENDS}, got {self.backend!r}")
        if self.mc_samples < 1 or self.trace_every < 1:
            raise ValueError("mc_samples and trace_every must be >= 1")

    def to_dict(self) -> dict:
        doc = {
            "learning_rate": self.learning_rate,
            "n_steps": self.n_steps,
            "init": self.init,
            "explore_n": self.explore_n,
            "explore_seed": self.explore_seed,
            "backend": self.backend,
            "mc_samples": self.mc_samples,
            "mc_seed": self.mc_seed,
            "trace_every": self.trace_every,
        }
        if self.warm_start is not None:
            doc["warm_start"] = np.asarray(self.warm_start).tolist()
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "OptimizerConfig":
        doc = dict(doc)
        if doc.get("warm_start") is not None:
            doc["warm_start"] = np.asarray(doc["warm_start"], dtype=float)
        return cls(**doc)


@dataclass
class OptResult:
    psi_final: np.ndarray
    criterion_final: CriterionValue
    psi_init: np.ndarray
    trace: list = field(default_factory=list)
    stalled: bool = False

    def write_trace(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "criterion"])
            for step, value in self.trace:
                writer.writerow([step, repr(float(value))])


def initial_allocation(stats: PolicyCellStats, region: SuccessRegion, config: OptimizerConfig) -> np.ndarray:
    M, K, _ = stats.mean.shape
    if config.init == "uniform":
        return uniform_allocation(M, K)
    if config.init == "warm_start":
        psi = np.asarray(config.warm_start, dtype=float)
        if psi.shape != (M, K):
            raise ValueError(f"warm start shape {psi.shape} does not match ({M}, {K})")
        return project_allocation(psi)
    return explore_init(stats, region, config.explore_n, config.explore_seed)


def run(stats: PolicyCellStats, region: SuccessRegion, config: OptimizerConfig) -> OptResult:
    """Projected gradient ascent: ``psi <- P(psi + lr * grad C(psi))`` for ``n_steps`` steps.

    The criterion is recorded at step 0, every ``trace_every`` steps and at
    the last step.  ``stalled`` is set when some iterate had a criterion
    below 1e-9 together with a gradient norm below 1e-12.  The final
    iterate is returned as is (no best-iterate substitution).
    """
    _check_dims(stats, region)
    psi = project_allocation(initial_allocation(stats, region, config))
    psi_init = psi.copy()
    lr = config.learning_rate
    mc = config.backend == "lemma1_mc"
    mc_seeds = np.random.SeedSequence(config.mc_seed).spawn(config.n_steps) if mc else None
    trace = []
    stalled = False
    for t in range(config.n_steps):
        if mc:
            grad = grad_lemma1(stats, psi, region, config.mc_samples, mc_seeds[t]).grad
        else:
            try:
                _, grad = closed_form_value_and_grad(stats, psi, region, need_value=False)
            except ValueError as exc:
                raise OptimizationError(t, str(exc)) from exc
        grad = np.asarray(grad, dtype=float)
        if not np.all(np.isfinite(grad)):
            raise OptimizationError(t, "non-finite gradient")
        # the criterion is only needed for the trace and the stall test
        flat = np.sqrt(np.sum(grad * grad)) < STALL_GRAD_NORM
        if flat or t % config.trace_every == 0:
            value = _closed_value(stats, psi, region)
            if flat and value < STALL_CRITERION:
                stalled = True
            if t % config.trace_every == 0:
                trace.append((t, value))
        psi = project_allocation(psi + lr * grad)
    final = _closed_value(stats, psi, region)
    trace.append((config.n_steps, final))
    return OptResult(
        psi_final=check_allocation(psi),
        criterion_final=CriterionValue(final, "closed_form"),
        psi_init=psi_init,
        trace=trace,
        stalled=stalled,
    )


def _closed_value(stats, psi, region) -> float:
    mean = np.einsum("gk,gkd->d", psi, stats.mean)
    cov = np.einsum("gk,gkde->de", psi, stats.cov)
    return float(np.clip(criterion_from_params(mean, cov, region), 0.0, 1.0))
