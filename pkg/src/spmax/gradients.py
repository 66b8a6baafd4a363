"""Gradients of the success probability with respect to the allocation.

Three independent routes:

* `grad_lemma1` -- score-function (likelihood-ratio) Monte Carlo,
  ``E[1_S(Y) * d/dpsi log p(Y; mu(psi), Sigma(psi))]``;
* `grad_closed_form` -- chain rule through the normal / bivariate normal CDF;
* `grad_finite_diff` -- central differences of the closed-form criterion.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .criterion import (
    RHO_MAX,
    SuccessRegion,
    _check_dims,
    criterion_from_params,
    iter_blocks,
)
from .model import MixtureParams, PolicyCellStats, inverse_with_ridge, mixture_params, psd_sqrt


@dataclass(frozen=True, eq=False)
class GradientEstimate:
    """Gradient with the same ``(M, K)`` indexing as the allocation.

    ``stderr`` is the per-entry Monte-Carlo standard error (score-function
    route only); ``ridged`` records that the covariance needed a ridge
    before inversion.
    """

    grad: np.ndarray
    method: str
    n_samples: Optional[int] = None
    stderr: Optional[np.ndarray] = None
    ridged: bool = False


class DegenerateVarianceError(ValueError):
    """The closed-form gradient needs positive variance on thresholded dimensions."""


# --------------------------------------------------------------------------
# score-function route

def lemma1_scores(stats: PolicyCellStats, params: MixtureParams, y: np.ndarray,
                  cov_inv: np.ndarray) -> np.ndarray:
    """Per-draw score ``d/dpsi[g,k] log p(y)`` for an ``(n, d)`` batch, shape ``(n, M, K)``.

    The covariance term contracts ``Sigma - e e^T`` against
    ``Sigma^-1 Sigma_gk Sigma^-1`` with the Frobenius inner product.
    """
    M, K, d = stats.mean.shape
    e = y - params.mean
    w_mean = stats.mean.reshape(M * K, d) @ cov_inv.T            # rows: Sigma^-1 mu_gk
    sandwich = np.einsum("ij,cjk,kl->cil", cov_inv, stats.cov.reshape(M * K, d, d), cov_inv)
    const = np.einsum("ij,cij->c", params.cov, sandwich)         # <Sigma, B_gk>_F
    outer = (e[:, :, None] * e[:, None, :]).reshape(len(e), d * d)
    quad = outer @ sandwich.reshape(M * K, d * d).T              # e^T B_gk e
    score = e @ w_mean.T - 0.5 * (const[None, :] - quad)
    return score.reshape(len(e), M, K)


def lemma1_from_draws(stats: PolicyCellStats, psi, region: SuccessRegion, y: np.ndarray):
    """Score-function gradient estimate on a given ``(n, d)`` batch of draws.

    Returns ``(mean, stderr, ridged)`` over the batch.
    """
    params = mixture_params(stats, psi)
    cov_inv, ridged = inverse_with_ridge(params.cov)
    contrib = lemma1_scores(stats, params, y, cov_inv) * region.contains(y)[:, None, None]
    n = len(y)
    mean = contrib.mean(axis=0)
    sd = contrib.std(axis=0, ddof=1) if n > 1 else np.zeros_like(mean)
    return mean, sd / math.sqrt(n), ridged


def lemma1_scalar_from_draws(means, variances, psi_row, r: float, y) -> np.ndarray:
    """Single-bucket, scalar-outcome specialization of the score-function gradient.

    ``d_k C = E[1(y > r) (mu_k (y - mu) / S - (S_k / 2) (S - (y - mu)^2) / S^2)]``
    with ``mu = sum psi_k mu_k`` and ``S = sum psi_k S_k``.
    """
    means = np.asarray(means, dtype=float)
    variances = np.asarray(variances, dtype=float)
    psi_row = np.asarray(psi_row, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    mu = float(psi_row @ means)
    s = float(psi_row @ variances)
    e = (y - mu)[:, None]
    terms = means[None, :] * e / s - 0.5 * variances[None, :] * (s - e * e) / (s * s)
    return (terms * (y > r)[:, None]).mean(axis=0)


def grad_lemma1(stats: PolicyCellStats, psi, region: SuccessRegion,
                n: int = 100_000, seed=0) -> GradientEstimate:
    """Monte-Carlo score-function gradient from ``n`` draws of the total outcome.

    Blocks of draws come from spawned child seeds and are reduced in order,
    so the estimate depends only on ``(n, seed)``.
    """
    _check_dims(stats, region)
    if n < 1:
        raise ValueError("n must be >= 1")
    params = mixture_params(stats, psi)
    cov_inv, ridged = inverse_with_ridge(params.cov)
    root = psd_sqrt(params.cov)
    M, K, d = stats.mean.shape
    total = np.zeros((M, K))
    total_sq = np.zeros((M, K))
    for rng, size in iter_blocks(n, seed):
        y = params.mean + rng.standard_normal((size, d)) @ root.T
        contrib = lemma1_scores(stats, params, y, cov_inv) * region.contains(y)[:, None, None]
        total += contrib.sum(axis=0)
        total_sq += np.einsum("nij,nij->ij", contrib, contrib)
    mean = total / n
    var = np.clip(total_sq / n - mean * mean, 0.0, None) * (n / max(n - 1, 1))
    return GradientEstimate(mean, "lemma1_mc", n, np.sqrt(var / n), ridged)


# --------------------------------------------------------------------------
# closed-form route

def closed_form_value_and_grad(stats: PolicyCellStats, psi, region: SuccessRegion,
                               need_value: bool = True):
    """Criterion value and its exact gradient under the Gaussian approximation.

    With ``need_value=False`` the (bivariate CDF) value is skipped and
    returned as ``None``.  Raises `DegenerateVarianceError` if a thresholded
    dimension has zero variance under ``psi``.
    """
    psi = np.asarray(psi, dtype=float)
    params = mixture_params(stats, psi)
    mu, cov = params.mean, params.cov
    m = stats.mean
    s = stats.cov
    M, K, _ = m.shape
    zeros = np.zeros((M, K))
    r_v = region.value_threshold

    if region.dim == 1:
        return _upper_tail_grad(float(mu[0]), float(cov[0, 0]), r_v, m[..., 0], s[..., 0, 0])

    r_c = region.cost_threshold
    if r_v == math.inf or r_c == -math.inf:
        return 0.0, zeros
    if r_v == -math.inf and r_c == math.inf:
        return 1.0, zeros
    if r_v == -math.inf:
        # only the cost constraint binds: P(Y_c <= r_c) = P(-Y_c > -r_c)
        return _upper_tail_grad(-float(mu[1]), float(cov[1, 1]), -r_c, -m[..., 1], s[..., 1, 1])
    if r_c == math.inf:
        return _upper_tail_grad(float(mu[0]), float(cov[0, 0]), r_v, m[..., 0], s[..., 0, 0])

    var_v, var_c = float(cov[0, 0]), float(cov[1, 1])
    if var_v <= 0.0 or var_c <= 0.0:
        raise DegenerateVarianceError("zero marginal variance; use the Monte-Carlo gradient")
    sd_v, sd_c = math.sqrt(var_v), math.sqrt(var_c)
    a = (float(mu[0]) - r_v) / sd_v   # P(Y_v > r_v) == Phi(a)
    b = (r_c - float(mu[1])) / sd_c   # P(Y_c <= r_c) == Phi(b)
    rho = float(cov[0, 1]) / (sd_v * sd_c)
    rho_c = min(max(rho, -RHO_MAX), RHO_MAX)
    nrho = -rho_c                     # criterion == Phi2(a, b; -rho)
    value = float(criterion_from_params(mu, cov, region)) if need_value else None

    one_m = (1.0 - nrho) * (1.0 + nrho)
    root = math.sqrt(one_m)
    d_a = _pdf(a) * _cdf((b - nrho * a) / root)
    d_b = _pdf(b) * _cdf((a - nrho * b) / root)
    d_r = math.exp(-0.5 * (a * a - 2.0 * nrho * a * b + b * b) / one_m) / (2.0 * math.pi * root)

    da = m[..., 0] / sd_v - 0.5 * a * s[..., 0, 0] / var_v
    db = -m[..., 1] / sd_c - 0.5 * b * s[..., 1, 1] / var_c
    drho = s[..., 0, 1] / (sd_v * sd_c) - 0.5 * rho * (s[..., 0, 0] / var_v + s[..., 1, 1] / var_c)
    if abs(rho) > RHO_MAX:
        drho = np.zeros_like(drho)
    grad = d_a * da + d_b * db - d_r * drho
    return value, grad


def _upper_tail_grad(mu, var, r, m, s):
    """Value and gradient of ``P(Y > r)`` for scalar ``Y ~ N(mu, var)`` linear in psi."""
    shape = np.shape(m)
    if r == -math.inf:
        return 1.0, np.zeros(shape)
    if r == math.inf:
        return 0.0, np.zeros(shape)
    if var <= 0.0:
        raise DegenerateVarianceError("zero variance on the thresholded dimension")
    sd = math.sqrt(var)
    u = (mu - r) / sd
    grad = _pdf(u) * (m / sd - 0.5 * u * s / var)
    return _cdf(u), grad


def _pdf(z: float) -> float:
    return math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)


def _cdf(z: float) -> float:
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def grad_closed_form(stats: PolicyCellStats, psi, region: SuccessRegion) -> GradientEstimate:
    """Analytic gradient of `criterion_closed_form` with respect to ``psi``."""
    _check_dims(stats, region)
    _, grad = closed_form_value_and_grad(stats, psi, region)
    return GradientEstimate(np.asarray(grad, dtype=float), "closed_form")


def grad_finite_diff(stats: PolicyCellStats, psi, region: SuccessRegion,
                     h: float = 1e-5) -> GradientEstimate:
    """Central differences of the closed-form criterion, one coordinate at a time.

    Perturbed points are not projected back onto the simplex; the criterion
    formula is smooth off the simplex as long as variances stay positive.
    """
    if not 1e-7 <= h <= 1e-3:
        raise ValueError(f"step h must lie in [1e-7, 1e-3], got {h}")
    _check_dims(stats, region)
    psi = np.asarray(psi, dtype=float)
    M, K = psi.shape
    # all 2*M*K perturbed allocations evaluated in one batch
    eye = np.eye(M * K).reshape(M * K, M, K)
    batch = np.concatenate([psi + h * eye, psi - h * eye])
    mean = np.einsum("bgk,gkd->bd", batch, stats.mean)
    cov = np.einsum("bgk,gkde->bde", batch, stats.cov)
    vals = criterion_from_params(mean, cov, region)
    grad = (vals[: M * K] - vals[M * K:]) / (2.0 * h)
    return GradientEstimate(grad.reshape(M, K), "finite_diff")
