"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with pytest (lines appear in the terminal summary) or directly:
``python3 tests/test_acceptance.py``.
"""
import csv
import math
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).parent))

from conftest import ACCEPTANCE, DATA  # noqa: E402
from oracles import hard_enumeration, mckp_scipy, phi_mp, simplex_points  # noqa: E402
from spmax import cli  # noqa: E402
from spmax.baselines import KnapsackProblem, bruteforce, greedy_1d, linprog_mckp, mixedint_mckp  # noqa: E402
from spmax.criterion import SuccessRegion, bvn_cdf, criterion_closed_form, iter_blocks  # noqa: E402
from spmax.data import (  # noqa: E402
    PRESETS,
    BootstrapSpec,
    SyntheticConfig,
    estimate_stats,
    generate_synthetic,
    identity_bucketizer,
    preset_stats,
)
from spmax.experiments import HYPERPARAMETERS, sweep  # noqa: E402
from spmax.gradients import grad_closed_form, grad_finite_diff, grad_lemma1  # noqa: E402
from spmax.model import PolicyCellStats, one_hot_allocation  # noqa: E402
from spmax.optimizer import OptimizerConfig, project_simplex, run  # noqa: E402

from test_criterion import random_instance  # noqa: E402

R_GRID = [float(r) for r in np.arange(0.0, 6.01, 0.5)]


def record(n, ok, detail, elapsed, limit):
    fast = elapsed < limit
    ok = bool(ok and fast)
    ACCEPTANCE[n] = (ok, f"{detail} [{elapsed:.1f}s / limit {limit:.0f}s]")
    print(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {ACCEPTANCE[n][1]}")
    assert ok, ACCEPTANCE[n][1]


def test_criterion_01_toy_convergence():
    t0 = time.perf_counter()
    stats = PolicyCellStats.from_1d([[2.0, 1.9, 0.0]], [[9.0, 1.0, 9.0]])
    res = run(stats, SuccessRegion.one_dim(0.0), OptimizerConfig(0.1, 10_000, init="uniform"))
    l1 = float(np.abs(res.psi_final - [[0, 1, 0]]).sum())
    err = abs(res.criterion_final.p - phi_mp(1.9))
    record(1, l1 <= 0.05 and err <= 1e-3,
           f"L1 to [0,1,0] = {l1:.2e}, |C - Phi(1.9)| = {err:.2e}", time.perf_counter() - t0, 10)


def test_criterion_02_large_variance_sweep():
    t0 = time.perf_counter()
    stats = preset_stats("table1_large")
    cfg = OptimizerConfig(**HYPERPARAMETERS["table1_large"])
    gaps, leads = {}, []
    greedy = greedy_1d(stats)
    for r in R_GRID:
        region = SuccessRegion.one_dim(r)
        spm = run(stats, region, cfg).criterion_final.p
        gaps[r] = bruteforce(stats, region)[1].p - spm
        leads.append(spm - criterion_closed_form(stats, greedy, region).p)
    short = {r: round(g, 5) for r, g in gaps.items() if g > 1e-3}
    ok = not short and max(leads) >= 0.05
    detail = f"max SPM lead over greedy {max(leads):.4f}; "
    detail += f"SPM below bruteforce by > 1e-3 at r={short}" if short else "SPM >= bruteforce - 1e-3 at every r"
    record(2, ok, detail, time.perf_counter() - t0, 120)


def test_criterion_03_small_variance_stall():
    t0 = time.perf_counter()
    stats = preset_stats("table1_small")
    region = SuccessRegion.one_dim(7.0)
    uni = run(stats, region, OptimizerConfig(0.1, 10_000, init="uniform"))
    exp = run(stats, region, OptimizerConfig(0.1, 10_000, init="explore", explore_n=50_000, explore_seed=0))
    best = bruteforce(stats, region)[1].p
    gap = abs(exp.criterion_final.p - best)
    ok = uni.stalled and uni.criterion_final.p < 1e-6 and gap <= 1e-3
    record(3, ok, f"uniform: stalled={uni.stalled} C={uni.criterion_final.p:.1e}; "
                  f"explore C={exp.criterion_final.p:.6f} vs bruteforce {best:.6f}",
           time.perf_counter() - t0, 120)


def test_criterion_04_two_dim_synthetic():
    t0 = time.perf_counter()
    worst = 0.0
    for preset in ("table2_case_i", "table2_case_ii"):
        stats = preset_stats(preset)
        cfg = OptimizerConfig(**HYPERPARAMETERS[preset])
        for rc in np.arange(-1.0, 5.01, 0.5):
            region = SuccessRegion.two_dim(0.0, float(rc))
            spm = run(stats, region, cfg).criterion_final.p
            worst = max(worst, abs(spm - bruteforce(stats, region)[1].p))
    stats = preset_stats("table2_case_i")
    region = SuccessRegion.two_dim(0.0, 3.0)
    hard = [criterion_closed_form(stats, one_hot_allocation([k], 2), region).p for k in range(2)]
    pick = int(np.argmax(hard))
    enum_ok = abs(max(hard) - hard_enumeration(stats, region)) <= 5e-6
    ok = worst <= 1e-3 and pick == 1 and enum_ok
    record(4, ok, f"max |SPM - bruteforce| = {worst:.2e}; hard optimum at (0,3) is pi{pick}",
           time.perf_counter() - t0, 120)


def test_criterion_05_gradients():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst_mc, worst_fd = -math.inf, 0.0
    for i in range(50):
        stats, psi, region = random_instance(rng, d=1 + i % 2)
        cf = grad_closed_form(stats, psi, region).grad
        mc = grad_lemma1(stats, psi, region, n=10**6, seed=i)
        fd = grad_finite_diff(stats, psi, region, h=1e-5).grad
        # ratio of the observed gap to its allowance; <= 1 passes
        worst_mc = max(worst_mc, float(np.max(np.abs(mc.grad - cf) / (4 * mc.stderr + 1e-4))))
        worst_fd = max(worst_fd, float(np.max(np.abs(cf - fd))))
    ok = worst_mc <= 1.0 and worst_fd <= 1e-5
    record(5, ok, f"max |MC - CF| / (4 se + 1e-4) = {worst_mc:.3f}, max |CF - FD| = {worst_fd:.2e}",
           time.perf_counter() - t0, 300)


def test_criterion_06_projection():
    t0 = time.perf_counter()
    rng = np.random.default_rng(6)
    bad = 0
    for _ in range(1000):
        k = int(rng.integers(1, 6))
        v = rng.normal(scale=2.0, size=k)
        p = project_simplex(v)
        feasible = np.all(p >= 0) and abs(p.sum() - 1) <= 1e-12
        idem = np.allclose(project_simplex(p), p, atol=1e-15, rtol=0)
        pts = simplex_points(10_000, k, rng) if k > 1 else np.ones((1, 1))
        closest = np.linalg.norm(p - v) <= np.min(np.linalg.norm(pts - v, axis=1)) + 1e-12
        bad += not (feasible and idem and closest)
    exact = (np.array_equal(project_simplex([2.0, 0.0, 0.0]), [1.0, 0.0, 0.0])
             and np.array_equal(project_simplex([1.0, 1.0]), [0.5, 0.5]))
    record(6, bad == 0 and exact, f"{bad} of 1000 vectors failed; exact examples {'ok' if exact else 'wrong'}",
           time.perf_counter() - t0, 30)


def test_criterion_07_bivariate_cdf():
    t0 = time.perf_counter()
    sheppard = max(abs(bvn_cdf(0.0, 0.0, r) - (0.25 + math.asin(r) / (2 * math.pi)))
                   for r in np.round(np.arange(-0.9, 0.91, 0.1), 10))
    rng = np.random.default_rng(7)
    worst = 0.0
    n = 10**7
    for i in range(20):
        h, k = rng.uniform(-2.5, 2.5, size=2)
        r = rng.uniform(-0.95, 0.95)
        hits = 0
        for g, size in iter_blocks(n, 1000 + i):
            x = g.standard_normal((size, 2))
            y2 = r * x[:, 0] + math.sqrt(1 - r * r) * x[:, 1]
            hits += int(np.count_nonzero((x[:, 0] <= h) & (y2 <= k)))
        p = hits / n
        se = math.sqrt(p * (1 - p) / n)
        worst = max(worst, abs(bvn_cdf(h, k, r) - p) / se)
    ok = sheppard <= 5e-6 and worst <= 4
    record(7, ok, f"Sheppard max err {sheppard:.1e}; worst MC deviation {worst:.2f} stderr",
           time.perf_counter() - t0, 120)


def test_criterion_08_knapsack():
    t0 = time.perf_counter()
    rng = np.random.default_rng(8)
    mismatches = order = 0
    for _ in range(100):
        while True:
            M, K = int(rng.integers(1, 7)), int(rng.integers(1, 5))
            if K**M <= 10**4:
                break
        values = rng.normal(size=(M, K))
        costs = rng.uniform(0, 2, size=(M, K))
        budget = float(rng.uniform(costs.min(1).sum(), costs.max(1).sum()))
        prob = KnapsackProblem(values, costs, budget)
        mi, lp = mixedint_mckp(prob, method="bnb"), linprog_mckp(prob)
        ex = mixedint_mckp(prob, method="exhaustive")
        ref = mckp_scipy(values, costs, budget, integral=True)
        mismatches += not (ex.feasible and abs(mi.objective - ex.objective) <= 1e-12
                           and abs(ex.objective - ref) <= 1e-7)
        order += not lp.objective >= mi.objective - 1e-12
    hand = KnapsackProblem(np.array([[2.0, 1.0]]), np.array([[1.0, 0.5]]), 0.75)
    lp, mi = linprog_mckp(hand), mixedint_mckp(hand)
    hand_ok = (np.allclose(lp.allocation, [[0.5, 0.5]], atol=1e-12) and abs(lp.objective - 1.5) <= 1e-12
               and np.array_equal(mi.allocation, [[0.0, 1.0]]) and mi.objective == 1.0)
    record(8, mismatches == 0 and order == 0 and hand_ok,
           f"{mismatches} MILP mismatches, {order} LP<MILP violations, hand instance {'ok' if hand_ok else 'wrong'}",
           time.perf_counter() - t0, 60)


def test_criterion_09_estimation_round_trip():
    t0 = time.perf_counter()
    n = 10_000
    worst_z, worst_rel = 0.0, 0.0
    estimated = {}
    for preset in PRESETS:
        truth, data = generate_synthetic(SyntheticConfig(preset, n, seed=0))
        M = truth.mean.shape[0]
        est = estimate_stats(data, identity_bucketizer("bucket", M), BootstrapSpec(100, 0), estimand="per_row")
        var = np.diagonal(truth.cov, axis1=-2, axis2=-1)
        worst_z = max(worst_z, float(np.max(np.abs(est.mean - truth.mean) / np.sqrt(var / n))))
        worst_rel = max(worst_rel, float(np.max(np.abs(np.diagonal(est.cov, axis1=-2, axis2=-1) / var - 1))))
        estimated[preset] = est
    est = estimated["table1_large"]
    rows = sweep(est, [SuccessRegion.one_dim(r) for r in R_GRID], ["spm", "greedy1d"],
                 OptimizerConfig(**HYPERPARAMETERS["table1_large"]))
    crit = {(row.region.value_threshold, row.method): row.criterion for row in rows}
    wins = sum(crit[(r, "spm")] >= crit[(r, "greedy1d")] for r in R_GRID)
    ok = worst_z <= 4 and worst_rel <= 0.2 and wins > len(R_GRID) / 2
    record(9, ok, f"max mean error {worst_z:.2f} se, max variance error {100 * worst_rel:.1f}%, "
                  f"SPM >= greedy at {wins}/{len(R_GRID)} points", time.perf_counter() - t0, 300)


def test_criterion_10_criteo_fixture_golden():
    t0 = time.perf_counter()
    import tempfile

    with tempfile.TemporaryDirectory() as out:
        rc = cli.main(["sweep", "--config", str(DATA / "criteo_sweep_config.json"), "--out", out])
        with open(Path(out) / "sweep.csv", newline="") as fh:
            got = list(csv.reader(fh))
    with open(DATA / "criteo_golden_sweep.csv", newline="") as fh:
        want = list(csv.reader(fh))
    wall = want[0].index("wall_time_ms")

    def same(a, b):
        if a == b:
            return True
        try:
            return abs(float(a) - float(b)) <= 1e-9
        except ValueError:
            return False

    diff = sum(not same(a, b) for g, w in zip(got, want) for j, (a, b) in enumerate(zip(g, w)) if j != wall)
    ok = rc == 0 and len(got) == len(want) and diff == 0
    record(10, ok, f"exit {rc}, {len(got) - 1} rows, {diff} cells differ from golden",
           time.perf_counter() - t0, 60)


if __name__ == "__main__":
    failed = 0
    for name, fn in sorted(globals().items()):
        if name.startswith("test_criterion_"):
            try:
                fn()
            except AssertionError:
                failed += 1
    sys.exit(1 if failed else 0)
