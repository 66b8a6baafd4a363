"""Independent reference implementations used only by the tests.

None of these share code with the package: they use scipy quadrature,
scipy's LP/MILP solvers, mpmath and plain enumeration.
"""
import itertools
import math

import mpmath
import numpy as np
from scipy import integrate, optimize


def phi_mp(z, dps=40) -> float:
    """Standard normal CDF in high precision."""
    with mpmath.workdps(dps):
        return float(mpmath.ncdf(z))


def bvn_quad(h, k, rho) -> float:
    """P(X <= h, Y <= k) for a standard bivariate normal with correlation rho.

    Plackett's identity: d/dr Phi2(h, k; r) = phi2(h, k; r), integrated
    from 0 (where the CDF factorizes) to rho with adaptive quadrature.
    """
    base = phi_mp(h) * phi_mp(k)

    def dens(r):
        s = 1.0 - r * r
        return math.exp(-(h * h - 2 * r * h * k + k * k) / (2 * s)) / (2 * math.pi * math.sqrt(s))

    val, _ = integrate.quad(dens, 0.0, rho, epsabs=1e-14, epsrel=1e-12, limit=200)
    return base + val


def criterion_direct(mean, cov, region):
    """Success probability from the mixture moments, straight from the definition."""
    if region.dim == 1:
        mu, var = float(mean[0]), float(cov[0, 0])
        r = region.value_threshold
        if var == 0:
            return float(mu > r)
        return 1.0 - phi_mp((r - mu) / math.sqrt(var))
    r_v, r_c = region.value_threshold, region.cost_threshold
    sv, sc = math.sqrt(cov[0, 0]), math.sqrt(cov[1, 1])
    zv, zc = (r_v - mean[0]) / sv, (r_c - mean[1]) / sc
    rho = cov[0, 1] / (sv * sc)
    # P(V > r_v, C <= r_c) = P(C <= r_c) - P(V <= r_v, C <= r_c)
    return phi_mp(zc) - bvn_quad(zv, zc, rho)


def hard_enumeration(stats, region, order_seed=None):
    """Max criterion over all one-hot allocations, visited in an optional random order."""
    M, K, _ = stats.mean.shape
    tuples = list(itertools.product(range(K), repeat=M))
    if order_seed is not None:
        np.random.default_rng(order_seed).shuffle(tuples)
    best = -1.0
    for t in tuples:
        mean = sum(stats.mean[g, k] for g, k in enumerate(t))
        cov = sum(stats.cov[g, k] for g, k in enumerate(t))
        best = max(best, criterion_direct(mean, cov, region))
    return best


def mckp_scipy(values, costs, budget, integral):
    """Multiple-choice knapsack via scipy (HiGHS); returns objective or None if infeasible."""
    M, K = values.shape
    c = -values.ravel()
    a_eq = np.kron(np.eye(M), np.ones(K))
    cons = [
        optimize.LinearConstraint(a_eq, 1.0, 1.0),
        optimize.LinearConstraint(costs.ravel()[None, :], -np.inf, budget + 1e-12),
    ]
    res = optimize.milp(c, constraints=cons, bounds=optimize.Bounds(0, 1),
                        integrality=np.full(M * K, 1 if integral else 0))
    if res.status != 0:
        return None
    return -res.fun


def simplex_points(n, k, rng):
    """Uniform points on the K-simplex by sorted-uniform spacings."""
    u = np.sort(rng.uniform(size=(n, k - 1)), axis=1)
    edges = np.concatenate([np.zeros((n, 1)), u, np.ones((n, 1))], axis=1)
    return np.diff(edges, axis=1)


def simplex_grid(k, steps):
    """All points of the K-simplex with coordinates in multiples of 1/steps."""
    pts = []
    for combo in itertools.product(range(steps + 1), repeat=k - 1):
        if sum(combo) <= steps:
            pts.append([*combo, steps - sum(combo)])
    return np.asarray(pts, dtype=float) / steps
