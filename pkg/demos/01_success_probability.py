"""
Success probability of an allocation
====================================

A population is split into buckets, and each bucket can be served by one
of K policies.  The total outcome is approximated by a Gaussian whose mean
and covariance are mixtures of the per-cell statistics.  The criterion is
the probability that this total lands in a success region.
"""
import math

import numpy as np

from spmax import PolicyCellStats, SuccessRegion, bvn_cdf, criterion_closed_form, criterion_monte_carlo
from spmax.model import mixture_params, one_hot_allocation

# three policies in a single bucket: a risky good one, a safe good one, a bad one
stats = PolicyCellStats.from_1d([[2.0, 1.9, 0.0]], [[9.0, 1.0, 9.0]])
region = SuccessRegion.one_dim(0.0)          # success: total value > 0

for k in range(3):
    psi = one_hot_allocation([k], 3)
    p = criterion_closed_form(stats, psi, region).p
    print(f"all users on policy {k}: P(success) = {p:.5f}")

# a soft allocation mixes means and variances linearly
psi = np.array([[0.25, 0.5, 0.25]])
params = mixture_params(stats, psi)
print("mixture mean", params.mean, "variance", params.cov.ravel())

# the closed form agrees with brute-force sampling
cf = criterion_closed_form(stats, psi, region).p
mc = criterion_monte_carlo(stats, psi, region, n=10**6, seed=0)
print(f"closed form {cf:.5f}  monte carlo {mc.p:.5f} +- {mc.mc_stderr:.5f}")

# %%
# Two outcomes: value must exceed r_v while cost stays at or below r_c.
# The joint probability needs the bivariate normal CDF.
print("Phi2(0, 0; 0.5) =", bvn_cdf(0.0, 0.0, 0.5), " exact:", 0.25 + math.asin(0.5) / (2 * math.pi))

two = PolicyCellStats.from_2d([2.0, 1.0], [9.0, 1.0], [1.0, 1.5], [4.0, 1.0], rho=0.5)
for rc in (0.0, 1.0, 2.0, 3.0):
    r = SuccessRegion.two_dim(0.0, rc)
    ps = [criterion_closed_form(two, one_hot_allocation([k], 2), r).p for k in range(2)]
    print(f"r_c = {rc}: policy 0 -> {ps[0]:.4f}, policy 1 -> {ps[1]:.4f}")
