"""
Three ways to differentiate the criterion
=========================================

The score-function estimator only needs samples of the total outcome and
the Gaussian log-likelihood.  Under the Gaussian approximation the
gradient also has a closed form, and finite differences give a third,
independent check.
"""
import numpy as np

from spmax import PolicyCellStats, SuccessRegion, grad_closed_form, grad_finite_diff, grad_lemma1
from spmax.model import uniform_allocation

stats = PolicyCellStats.from_1d([[2.0, 1.9, 0.0]], [[9.0, 1.0, 9.0]])
psi = uniform_allocation(1, 3)
region = SuccessRegion.one_dim(0.0)

mc = grad_lemma1(stats, psi, region, n=10**6, seed=0)
cf = grad_closed_form(stats, psi, region)
fd = grad_finite_diff(stats, psi, region)

np.set_printoptions(precision=5, suppress=True)
print("score function ", mc.grad.ravel(), " stderr", mc.stderr.ravel())
print("closed form    ", cf.grad.ravel())
print("finite diff    ", fd.grad.ravel())

# only the component along the simplex matters for the ascent: the
# middle policy gains relative to the row average
g = cf.grad.ravel()
print("tangent part   ", g - g.mean())

# %%
# With the region equal to the whole space the criterion is constant 1, and
# the score function has mean zero, so the estimate is pure noise.
flat = grad_lemma1(stats, psi, SuccessRegion.one_dim(-np.inf), n=10**5, seed=1)
print("whole space, in stderr units:", (flat.grad / flat.stderr).ravel())
