"""Core data types and the linear Gaussian mixture over allocations.

An allocation ``psi`` is an ``(M, K)`` row-stochastic array: ``psi[g, k]`` is
the share of bucket ``g`` sent to policy ``k``.  Per-cell statistics hold the
mean vector and covariance matrix of the total bucket outcome under each
policy, with outcomes ordered ``(value, cost)`` when two-dimensional.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

ROW_SUM_TOL = 1e-9
SYMMETRY_TOL = 1e-9
PSD_TOL = 1e-9
RIDGE_SCALE = 1e-12


class ValidationError(ValueError):
    """Raised when inputs violate a structural invariant."""


@dataclass(frozen=True)
class ProblemShape:
    n_buckets: int
    n_policies: int
    outcome_dim: int

    def __post_init__(self):
        if self.n_buckets < 1:
            raise ValidationError(f"n_buckets must be >= 1, got {self.n_buckets}")
        if self.n_policies < 1:
            raise ValidationError(f"n_policies must be >= 1, got {self.n_policies}")
        if self.outcome_dim not in (1, 2):
            raise ValidationError(f"outcome_dim must be 1 or 2, got {self.outcome_dim}")


class MixtureParams(NamedTuple):
    """Mean vector and covariance of the Gaussian total outcome."""

    mean: np.ndarray
    cov: np.ndarray


def _clip_psd(cov: np.ndarray) -> np.ndarray:
    """Symmetrize each trailing ``d x d`` block and clip tiny negative eigenvalues."""
    cov = 0.5 * (cov + np.swapaxes(cov, -1, -2))
    w, v = np.linalg.eigh(cov)
    trace = np.trace(cov, axis1=-2, axis2=-1)
    floor = -PSD_TOL * np.maximum(np.abs(trace), np.finfo(float).tiny)
    if np.any(w < floor[..., None]):
        bad = np.argwhere(w < floor[..., None])[0][:-1]
        raise ValidationError(f"covariance at cell {tuple(int(i) for i in bad)} is not PSD")
    if np.all(w >= 0):
        return cov
    w = np.clip(w, 0.0, None)
    return np.einsum("...ij,...j,...kj->...ik", v, w, v)


@dataclass(frozen=True, eq=False)
class PolicyCellStats:
    """Per-(bucket, policy) Gaussian statistics of the total bucket outcome.

    Parameters
    ----------
    mean : array_like, shape (M, K, d)
    cov : array_like, shape (M, K, d, d)
        Symmetric PSD blocks.  Negative eigenvalues within ``1e-9 * trace``
        are clipped to zero; larger violations raise `ValidationError`.
    """

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float)
        cov = np.array(self.cov, dtype=float)
        if mean.ndim != 3:
            raise ValidationError(f"mean must have shape (M, K, d), got {mean.shape}")
        M, K, d = mean.shape
        ProblemShape(M, K, d)
        if cov.shape != (M, K, d, d):
            raise ValidationError(f"cov must have shape {(M, K, d, d)}, got {cov.shape}")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise ValidationError("stats contain non-finite entries")
        asym = np.abs(cov - np.swapaxes(cov, -1, -2))
        scale = np.maximum(1.0, np.abs(cov).max(axis=(-2, -1), keepdims=True))
        if np.any(asym > SYMMETRY_TOL * scale):
            raise ValidationError("covariance blocks are not symmetric")
        cov = _clip_psd(cov)
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def shape(self) -> ProblemShape:
        return ProblemShape(*self.mean.shape)

    @classmethod
    def from_1d(cls, mean, var) -> "PolicyCellStats":
        """Build one-dimensional stats from ``(M, K)`` mean and variance tables."""
        mean = np.asarray(mean, dtype=float)
        var = np.asarray(var, dtype=float)
        if mean.ndim == 1:
            mean, var = mean[None, :], var[None, :]
        return cls(mean[..., None], var[..., None, None])

    @classmethod
    def from_2d(cls, mean_v, var_v, mean_c, var_c, rho) -> "PolicyCellStats":
        """Build (value, cost) stats from per-dimension tables and a correlation.

        The off-diagonal entry of each cell is ``rho * sqrt(var_v * var_c)``.
        """
        arrs = [np.asarray(a, dtype=float) for a in (mean_v, var_v, mean_c, var_c)]
        if arrs[0].ndim == 1:
            arrs = [a[None, :] for a in arrs]
        mv, vv, mc, vc = arrs
        rho = np.broadcast_to(np.asarray(rho, dtype=float), mv.shape)
        off = rho * np.sqrt(vv * vc)
        mean = np.stack([mv, mc], axis=-1)
        cov = np.stack([np.stack([vv, off], -1), np.stack([off, vc], -1)], -2)
        return cls(mean, cov)

    def permute_policies(self, order) -> "PolicyCellStats":
        order = np.asarray(order)
        return PolicyCellStats(self.mean[:, order], self.cov[:, order])

    def to_dict(self) -> dict:
        M, K, d = self.mean.shape
        cells = [
            {"g": g, "k": k, "mean": self.mean[g, k].tolist(), "cov": self.cov[g, k].tolist()}
            for g in range(M)
            for k in range(K)
        ]
        return {"shape": {"M": M, "K": K, "d": d}, "cells": cells}

    @classmethod
    def from_dict(cls, doc: dict) -> "PolicyCellStats":
        try:
            M, K, d = (int(doc["shape"][key]) for key in ("M", "K", "d"))
            cells = doc["cells"]
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed stats document: missing {exc}") from exc
        ProblemShape(M, K, d)
        mean = np.full((M, K, d), np.nan)
        cov = np.full((M, K, d, d), np.nan)
        for cell in cells:
            g, k = int(cell["g"]), int(cell["k"])
            if not (0 <= g < M and 0 <= k < K):
                raise ValidationError(f"cell index ({g}, {k}) outside shape ({M}, {K})")
            mean[g, k] = np.asarray(cell["mean"], dtype=float).reshape(d)
            cov[g, k] = np.asarray(cell["cov"], dtype=float).reshape(d, d)
        missing = np.argwhere(np.isnan(mean).any(axis=-1))
        if len(missing):
            raise ValidationError(f"stats document lacks cell {tuple(int(i) for i in missing[0])}")
        return cls(mean, cov)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "PolicyCellStats":
        return cls.from_dict(json.loads(Path(path).read_text()))


def uniform_allocation(n_buckets: int, n_policies: int) -> np.ndarray:
    return np.full((n_buckets, n_policies), 1.0 / n_policies)


def one_hot_allocation(choices, n_policies: int) -> np.ndarray:
    """Hard allocation sending bucket ``g`` entirely to policy ``choices[g]``."""
    choices = np.asarray(choices, dtype=int)
    psi = np.zeros((len(choices), n_policies))
    psi[np.arange(len(choices)), choices] = 1.0
    return psi


def check_allocation(psi, shape: ProblemShape | None = None) -> np.ndarray:
    """Return ``psi`` as a float array after checking it is row-stochastic."""
    psi = np.asarray(psi, dtype=float)
    if psi.ndim != 2:
        raise ValidationError(f"allocation must be 2-D, got shape {psi.shape}")
    if shape is not None and psi.shape != (shape.n_buckets, shape.n_policies):
        raise ValidationError(
            f"allocation shape {psi.shape} does not match ({shape.n_buckets}, {shape.n_policies})"
        )
    if not np.all(np.isfinite(psi)) or psi.min() < 0.0 or psi.max() > 1.0:
        raise ValidationError("allocation entries must lie in [0, 1]")
    if np.any(np.abs(psi.sum(axis=1) - 1.0) > ROW_SUM_TOL):
        raise ValidationError("allocation rows must sum to 1")
    return psi


def mixture_params(stats: PolicyCellStats, psi) -> MixtureParams:
    """Mean and covariance of the total outcome under allocation ``psi``.

    Both are linear in ``psi``: the mean is ``sum psi[g,k] * mean[g,k]`` and
    the covariance ``sum psi[g,k] * cov[g,k]`` (allocation noise is ignored).
    """
    psi = np.asarray(psi, dtype=float)
    if psi.shape != stats.mean.shape[:2]:
        raise ValidationError(f"allocation shape {psi.shape} does not match stats {stats.mean.shape[:2]}")
    mean = np.einsum("gk,gkd->d", psi, stats.mean)
    cov = np.einsum("gk,gkde->de", psi, stats.cov)
    return MixtureParams(mean, cov)


def psd_sqrt(cov: np.ndarray) -> np.ndarray:
    """Symmetric square root ``L`` with ``L @ L.T == cov``; works for singular ``cov``."""
    cov = np.asarray(cov, dtype=float)
    w, v = np.linalg.eigh(0.5 * (cov + cov.T))
    tol = PSD_TOL * max(abs(np.trace(cov)), np.finfo(float).tiny)
    if w.min() < -tol:
        raise FloatingPointError(f"covariance is not PSD (min eigenvalue {w.min():.3g})")
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def sample_outcome(params: MixtureParams, n: int, seed=None) -> np.ndarray:
    """Draw ``n`` i.i.d. outcomes from ``N(params.mean, params.cov)``.

    Returns an ``(n, d)`` array.  Draws for singular covariances stay on the
    affine support.  The same ``seed`` always yields the same draws.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    mean = np.atleast_1d(np.asarray(params.mean, dtype=float))
    root = psd_sqrt(np.atleast_2d(params.cov))
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, mean.size))
    return mean + z @ root.T


def inverse_with_ridge(cov: np.ndarray) -> tuple[np.ndarray, bool]:
    """Invert ``cov``; singular matrices get ``1e-12 * trace * I`` added first.

    Returns the inverse and whether the ridge was applied.
    """
    cov = np.asarray(cov, dtype=float)
    d = cov.shape[0]
    trace = float(np.trace(cov))
    w = np.linalg.eigvalsh(cov)
    ridged = w.min() <= RIDGE_SCALE * max(trace, 0.0)
    if ridged:
        if trace <= 0.0:
            raise FloatingPointError("covariance is identically zero; score function undefined")
        cov = cov + RIDGE_SCALE * trace * np.eye(d)
    return np.linalg.inv(cov), bool(ridged)
