"""
Value and cost together
=======================

With two outcomes the success region asks for value above r_v and cost
at or below r_c.  The knapsack baselines only look at the means: they
maximize expected value under an expected-cost budget r_c.
"""
import numpy as np

from spmax import (
    KnapsackProblem,
    OptimizerConfig,
    SuccessRegion,
    bruteforce,
    criterion_closed_form,
    linprog_mckp,
    mixedint_mckp,
    preset_stats,
    run,
)

stats = preset_stats("table2_case_i")
cfg = OptimizerConfig(learning_rate=1e-2, n_steps=10_000)

print(" r_c    spm     brute   linprog  mixedint")
for rc in np.arange(0.0, 5.01, 1.0):
    region = SuccessRegion.two_dim(0.0, rc)
    spm = run(stats, region, cfg).criterion_final.p
    best = bruteforce(stats, region)[1].p
    prob = KnapsackProblem.from_stats(stats, region)
    cols = []
    for sol in (linprog_mckp(prob), mixedint_mckp(prob)):
        cols.append(f"{criterion_closed_form(stats, sol.allocation, region).p:.4f}" if sol.feasible else "  infeas")
    print(f"{rc:4.1f}  {spm:.4f}  {best:.4f}  {cols[0]}   {cols[1]}")

# %%
# The small hand instance shows the LP relaxation splitting a bucket.
hand = KnapsackProblem(np.array([[2.0, 1.0]]), np.array([[1.0, 0.5]]), budget=0.75)
print("LP  ", linprog_mckp(hand))
print("MILP", mixedint_mckp(hand))
