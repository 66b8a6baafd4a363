"""Success-probability criterion: closed-form CDFs and a Monte-Carlo check.

One-dimensional success is ``{y > r}``.  Two-dimensional success is
``{y_value > r_v and y_cost <= r_c}``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import erfc

from .model import MixtureParams, PolicyCellStats, mixture_params, psd_sqrt

RHO_MAX = 1.0 - 1e-12
MC_CHUNK = 1 << 18
Z_SATURATE = 40.0

# Gauss-Legendre nodes/weights (20 points, half-interval) for the
# Drezner-Wesolowsky single-integral form, as tabulated by A. Genz.
_GL_W = np.array([
    0.01761400713915212, 0.04060142980038694, 0.06267204833410906,
    0.08327674157670475, 0.1019301198172404, 0.1181945319615184,
    0.1316886384491766, 0.1420961093183821, 0.1491729864726037,
    0.1527533871307259,
])
_GL_X = np.array([
    0.9931285991850949, 0.9639719272779138, 0.9122344282513259,
    0.8391169718222188, 0.7463319064601508, 0.6360536807265150,
    0.5108670019508271, 0.3737060887154196, 0.2277858511416451,
    0.07652652113349733,
])
_W = np.concatenate([_GL_W, _GL_W])
_X = np.concatenate([1.0 - _GL_X, 1.0 + _GL_X])
_TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class SuccessRegion:
    """Axis-aligned success region.

    ``dim=1``: success iff ``y > value_threshold``.
    ``dim=2``: success iff ``y_value > value_threshold and y_cost <= cost_threshold``.
    Thresholds may be ``+-inf``.
    """

    dim: int
    value_threshold: float
    cost_threshold: Optional[float] = None

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"region dim must be 1 or 2, got {self.dim}")
        if (self.cost_threshold is None) != (self.dim == 1):
            raise ValueError("cost_threshold is required for dim=2 and forbidden for dim=1")
        for t in (self.value_threshold, self.cost_threshold):
            if t is not None and math.isnan(t):
                raise ValueError("thresholds must not be NaN")

    @classmethod
    def one_dim(cls, r: float) -> "SuccessRegion":
        return cls(1, float(r))

    @classmethod
    def two_dim(cls, r_v: float, r_c: float) -> "SuccessRegion":
        return cls(2, float(r_v), float(r_c))

    @property
    def thresholds(self) -> tuple:
        if self.dim == 1:
            return (self.value_threshold,)
        return (self.value_threshold, self.cost_threshold)

    def contains(self, y) -> np.ndarray:
        """Indicator of the region for an ``(n, d)`` array of outcomes."""
        y = np.atleast_2d(np.asarray(y, dtype=float))
        inside = y[:, 0] > self.value_threshold
        if self.dim == 2:
            inside &= y[:, 1] <= self.cost_threshold
        return inside

    def to_dict(self) -> dict:
        if self.dim == 1:
            return {"dim": 1, "r": _encode_float(self.value_threshold)}
        return {
            "dim": 2,
            "r_v": _encode_float(self.value_threshold),
            "r_c": _encode_float(self.cost_threshold),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SuccessRegion":
        if int(doc["dim"]) == 1:
            return cls.one_dim(_decode_float(doc["r"]))
        return cls.two_dim(_decode_float(doc["r_v"]), _decode_float(doc["r_c"]))


def _encode_float(x: float):
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def _decode_float(x) -> float:
    if isinstance(x, str):
        if x not in ("inf", "-inf", "+inf"):
            raise ValueError(f"unsupported threshold string {x!r}")
        return float(x)
    return float(x)


@dataclass(frozen=True)
class CriterionValue:
    p: float
    method: str
    mc_stderr: Optional[float] = None


def phi(z):
    """Standard normal CDF."""
    return 0.5 * erfc(-np.asarray(z, dtype=float) / math.sqrt(2.0))


def normal_pdf(z):
    z = np.asarray(z, dtype=float)
    return np.exp(-0.5 * z * z) / math.sqrt(_TWO_PI)


def bvn_pdf(a, b, rho):
    """Standardized bivariate normal density."""
    a, b, rho = (np.asarray(x, dtype=float) for x in (a, b, rho))
    one_m = (1.0 - rho) * (1.0 + rho)
    with np.errstate(invalid="ignore", over="ignore"):
        q = (a * a - 2.0 * rho * a * b + b * b) / one_m
        out = np.exp(-0.5 * q) / (_TWO_PI * np.sqrt(one_m))
    return np.where(np.isfinite(a) & np.isfinite(b), out, 0.0)


def _bvn_upper_finite(h, k, r):
    """``P(X > h, Y > k)`` for finite 1-D arrays, ``|r| < 1``."""
    out = np.empty_like(h)
    mid = np.abs(r) < 0.925

    if np.any(mid):
        hm, km, rm = h[mid], k[mid], r[mid]
        hk = hm * km
        hs = 0.5 * (hm * hm + km * km)
        asr = 0.5 * np.arcsin(rm)
        sn = np.sin(asr[:, None] * _X[None, :])
        val = np.exp((sn * hk[:, None] - hs[:, None]) / (1.0 - sn * sn)) @ _W
        out[mid] = val * asr / _TWO_PI + phi(-hm) * phi(-km)

    tail = ~mid
    if np.any(tail):
        h_, r_ = h[tail], r[tail]
        k_ = np.where(r_ < 0, -k[tail], k[tail])
        hk = h_ * k_
        as_ = (1.0 - r_) * (1.0 + r_)
        a = np.sqrt(as_)
        bs = (h_ - k_) ** 2
        c = (4.0 - hk) / 8.0
        d = (12.0 - hk) / 80.0
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            asr = -0.5 * (bs / as_ + hk)
            bvn = np.where(
                asr > -100.0,
                a * np.exp(asr) * (1.0 - c * (bs - as_) * (1.0 - d * bs) / 3.0 + c * d * as_ * as_),
                0.0,
            )
            b = np.sqrt(bs)
            safe_hk = np.where(hk > -160.0, hk, 0.0)
            corr = (
                np.exp(-0.5 * safe_hk) * math.sqrt(_TWO_PI) * phi(-b / a) * b
                * (1.0 - c * bs * (1.0 - d * bs) / 3.0)
            )
            bvn = bvn - np.where(hk > -160.0, corr, 0.0)
            a2 = 0.5 * a
            for wi, xi in zip(_W, _X):
                xs = (a2 * xi) ** 2
                rs = np.sqrt(1.0 - xs)
                asr_i = -0.5 * (bs / xs + hk)
                term = a2 * wi * np.exp(asr_i) * (
                    np.exp(-hk * xs / (2.0 * (1.0 + rs) ** 2)) / rs - (1.0 + c * xs * (1.0 + 5.0 * d * xs))
                )
                bvn = bvn + np.where(asr_i > -100.0, term, 0.0)
        bvn = -bvn / _TWO_PI
        pos = r_ > 0
        res = np.where(pos, bvn + phi(-np.maximum(h_, k_)), -bvn)
        neg_swap = (~pos) & (h_ < k_)
        lower = np.where(h_ < 0, phi(k_) - phi(h_), phi(-h_) - phi(-k_))
        res = np.where(neg_swap, lower - bvn, res)
        out[tail] = res
    return np.clip(out, 0.0, 1.0)


def bvn_cdf(z1, z2, rho):
    """Standardized bivariate normal CDF ``P(X <= z1, Y <= z2)`` with correlation ``rho``.

    Vectorized over broadcast inputs.  ``rho`` is clipped to ``+-(1 - 1e-12)``;
    infinite arguments reduce to the univariate marginals.  Uses the
    Drezner-Wesolowsky integral with 20-point Gauss-Legendre quadrature
    (absolute error well below 1e-10).
    """
    z1, z2, rho = np.broadcast_arrays(
        np.asarray(z1, dtype=float), np.asarray(z2, dtype=float), np.asarray(rho, dtype=float)
    )
    shape = z1.shape
    h = -z1.ravel()
    k = -z2.ravel()
    r = np.clip(rho.ravel(), -RHO_MAX, RHO_MAX)
    out = np.full(h.shape, np.nan)
    finite = np.isfinite(h) & np.isfinite(k) & np.isfinite(r)
    if np.any(finite):
        # beyond |z| = 40 the normal tail underflows, so clipping changes nothing
        # but keeps the products inside the integrand finite
        hf = np.clip(h[finite], -Z_SATURATE, Z_SATURATE)
        kf = np.clip(k[finite], -Z_SATURATE, Z_SATURATE)
        out[finite] = _bvn_upper_finite(hf, kf, r[finite])
    inf = ~finite & ~(np.isnan(h) | np.isnan(k) | np.isnan(r))
    if np.any(inf):
        hi, ki = h[inf], k[inf]
        res = np.where(np.isneginf(hi), phi(-ki), phi(-hi))
        res = np.where(np.isneginf(hi) & np.isneginf(ki), 1.0, res)
        res = np.where(np.isposinf(hi) | np.isposinf(ki), 0.0, res)
        out[inf] = res
    out = out.reshape(shape)
    return out if shape else float(out)


def _standardize(mu, var, threshold):
    """Return ``(threshold - mu) / sd`` with infinities propagated, and a zero-variance mask."""
    sd = np.sqrt(np.clip(var, 0.0, None))
    degenerate = sd <= 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        z = (threshold - mu) / np.where(degenerate, 1.0, sd)
    if np.isinf(threshold):
        z = np.full_like(mu, threshold)
    return z, sd, degenerate


def criterion_from_params(mean, cov, region: SuccessRegion):
    """Closed-form success probability for (batched) Gaussian parameters.

    ``mean`` has shape ``(..., d)`` and ``cov`` shape ``(..., d, d)``.  Zero
    variance along a thresholded dimension collapses that factor to an
    indicator using the region's own strict/non-strict convention.
    """
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    r_v = region.value_threshold
    zv, sv, deg_v = _standardize(mean[..., 0], cov[..., 0, 0], r_v)
    # P(Y_v > r_v) on its own
    p_v = np.where(deg_v, (mean[..., 0] > r_v).astype(float), phi(-zv))
    if region.dim == 1:
        return p_v
    r_c = region.cost_threshold
    zc, sc, deg_c = _standardize(mean[..., 1], cov[..., 1, 1], r_c)
    p_c = np.where(deg_c, (mean[..., 1] <= r_c).astype(float), phi(zc))
    with np.errstate(divide="ignore", invalid="ignore"):
        rho = cov[..., 0, 1] / (sv * sc)
    rho = np.where(deg_v | deg_c, 0.0, np.nan_to_num(rho))
    # P(Y_v > r_v, Y_c <= r_c) == Phi2(-z_v, z_c; -rho) == Phi(z_c) - Phi2(z_v, z_c; rho)
    joint = np.asarray(bvn_cdf(-zv, zc, -rho))
    return np.where(deg_v | deg_c, p_v * p_c, joint)


def criterion_closed_form(stats: PolicyCellStats, psi, region: SuccessRegion) -> CriterionValue:
    """Success probability of allocation ``psi`` under the Gaussian approximation."""
    _check_dims(stats, region)
    params = mixture_params(stats, psi)
    p = float(criterion_from_params(params.mean, params.cov, region))
    return CriterionValue(min(max(p, 0.0), 1.0), "closed_form")


def criterion_monte_carlo(stats: PolicyCellStats, psi, region: SuccessRegion,
                          n: int = 1_000_000, seed=0) -> CriterionValue:
    """Fraction of ``n`` Gaussian draws of the total outcome that land in ``region``.

    Draws are generated in fixed-size blocks from spawned child seeds and
    summed in block order, so results depend only on ``(n, seed)``.
    """
    _check_dims(stats, region)
    if n < 1:
        raise ValueError("n must be >= 1")
    params = mixture_params(stats, psi)
    hits = count_hits(params, region, n, seed)
    p = hits / n
    return CriterionValue(p, "monte_carlo", math.sqrt(p * (1.0 - p) / n))


def count_hits(params: MixtureParams, region: SuccessRegion, n: int, seed=0) -> int:
    root = psd_sqrt(params.cov)
    d = root.shape[0]
    hits = 0
    for rng, size in iter_blocks(n, seed):
        y = params.mean + rng.standard_normal((size, d)) @ root.T
        hits += int(np.count_nonzero(region.contains(y)))
    return hits


def iter_blocks(n: int, seed, block: int = MC_CHUNK):
    """Yield ``(generator, size)`` pairs covering ``n`` draws in a fixed order."""
    n_blocks = -(-n // block)
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    children = root.spawn(n_blocks)
    for i, ss in enumerate(children):
        yield np.random.default_rng(ss), min(block, n - i * block)


def _check_dims(stats: PolicyCellStats, region: SuccessRegion) -> None:
    if stats.mean.shape[-1] != region.dim:
        raise ValueError(f"region dim {region.dim} does not match outcome dim {stats.mean.shape[-1]}")
