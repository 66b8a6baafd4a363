"""
Sweeping the difficulty level
=============================

Three buckets with three policies each.  Policy 0 has the highest mean
everywhere, so greedy picks it in every bucket.  As the threshold rises
the best allocation changes, and the optimizer follows it.

At r = 3.5 the ascent from the uniform start stops at (pi1, pi0, pi0)
while exhaustive search finds (pi1, pi1, pi0).  Both are local maxima on
the product of simplices; the criterion is not concave in the allocation.
"""
import numpy as np

from spmax import OptimizerConfig, SuccessRegion, bruteforce, criterion_closed_form, greedy_1d, preset_stats, run

stats = preset_stats("table1_large")
greedy = greedy_1d(stats)
cfg = OptimizerConfig(learning_rate=0.1, n_steps=10_000)

print("   r    spm     brute   greedy")
for r in np.arange(0.0, 6.01, 0.5):
    region = SuccessRegion.one_dim(r)
    spm = run(stats, region, cfg)
    best_psi, best = bruteforce(stats, region)
    g = criterion_closed_form(stats, greedy, region).p
    print(f"{r:4.1f}  {spm.criterion_final.p:.4f}  {best.p:.4f}  {g:.4f}")

# %%
# The r = 3.5 case in detail, including an exploratory start.
region = SuccessRegion.one_dim(3.5)
for init in ("uniform", "explore"):
    res = run(stats, region, OptimizerConfig(0.1, 10_000, init=init))
    print(init, "->", res.psi_final.argmax(1), round(res.criterion_final.p, 5))
print("bruteforce ->", bruteforce(stats, region)[0].argmax(1), round(bruteforce(stats, region)[1].p, 5))

# %%
# With small variances a hard threshold makes the uniform start hopeless:
# the criterion and its gradient underflow, and the run is flagged as stalled.
small = preset_stats("table1_small")
res = run(small, SuccessRegion.one_dim(7.0), cfg)
print("uniform start stalled:", res.stalled, "criterion", res.criterion_final.p)
res = run(small, SuccessRegion.one_dim(7.0), OptimizerConfig(0.1, 10_000, init="explore"))
print("explore start criterion", round(res.criterion_final.p, 6))
