"""
Projected gradient ascent on the toy problem
============================================

Starting from the uniform allocation, each step moves along the gradient
and projects every bucket's row back onto the probability simplex.
"""
import numpy as np

from spmax import OptimizerConfig, PolicyCellStats, SuccessRegion, run
from spmax.optimizer import project_simplex

print("projection of [2, 0, 0]:", project_simplex([2.0, 0.0, 0.0]))
print("projection of [0.4, 0.3, -0.5]:", project_simplex([0.4, 0.3, -0.5]))

stats = PolicyCellStats.from_1d([[2.0, 1.9, 0.0]], [[9.0, 1.0, 9.0]])
res = run(stats, SuccessRegion.one_dim(0.0), OptimizerConfig(learning_rate=0.1, n_steps=10_000, trace_every=1000))
for step, value in res.trace:
    print(f"step {step:6d}  criterion {value:.5f}")
print("final allocation", np.round(res.psi_final, 4))

# %%
# Greedy on means would pick policy 0 (mean 2.0), but its variance makes
# success less likely than with the safer policy 1.
