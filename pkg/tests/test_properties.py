import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from spmax.baselines import KnapsackProblem, linprog_mckp, mixedint_mckp
from spmax.criterion import SuccessRegion, bvn_cdf, criterion_from_params, phi
from spmax.model import PolicyCellStats, mixture_params
from spmax.optimizer import project_allocation, project_simplex

finite = st.floats(-1e3, 1e3, allow_nan=False)
z = st.floats(-8, 8, allow_nan=False)
corr = st.floats(-0.999, 0.999, allow_nan=False)


@st.composite
def stats_and_psi(draw, d=None):
    M = draw(st.integers(1, 4))
    K = draw(st.integers(1, 4))
    d = d or draw(st.integers(1, 2))
    mean = draw(arrays(float, (M, K, d), elements=st.floats(-5, 5)))
    a = draw(arrays(float, (M, K, d, d), elements=st.floats(-2, 2)))
    w = draw(arrays(float, (M, K), elements=st.floats(0.01, 1)))
    return PolicyCellStats(mean, a @ np.swapaxes(a, -1, -2)), w / w.sum(1, keepdims=True)


@given(arrays(float, st.integers(1, 8), elements=finite))
def test_projection_feasible_and_idempotent(v):
    p = project_simplex(v)
    assert np.all(p >= 0)
    assert abs(p.sum() - 1) <= 1e-12
    np.testing.assert_allclose(project_simplex(p), p, atol=1e-12)


@given(arrays(float, st.integers(1, 6), elements=finite), st.floats(-50, 50))
def test_projection_shift_invariant(v, c):
    np.testing.assert_allclose(project_simplex(v + c), project_simplex(v), atol=1e-9)


@given(arrays(float, (3, 4), elements=finite))
def test_projection_rows_independent(x):
    out = project_allocation(x)
    for row, p in zip(x, out):
        np.testing.assert_array_equal(project_simplex(row), p)


@given(z, z, corr)
def test_bvn_bounds_and_symmetry(a, b, r):
    p = bvn_cdf(a, b, r)
    assert -1e-15 <= p <= min(phi(a), phi(b)) + 1e-12
    assert p >= phi(a) + phi(b) - 1 - 1e-12
    assert abs(p - bvn_cdf(b, a, r)) <= 1e-14


@given(z, z, corr)
def test_bvn_reflection(a, b, r):
    # P(X <= a, Y <= b) + P(X <= a, Y > b) = Phi(a), with P(X <= a, Y > b) = Phi2(a, -b; -r)
    assert abs(bvn_cdf(a, b, r) + bvn_cdf(a, -b, -r) - phi(a)) <= 5e-6


@given(stats_and_psi(), st.floats(0, 1))
def test_mixture_linearity(sp, alpha):
    stats, psi = sp
    M, K = psi.shape
    other = np.roll(psi, 1, axis=1)
    mix = mixture_params(stats, alpha * psi + (1 - alpha) * other)
    a, b = mixture_params(stats, psi), mixture_params(stats, other)
    np.testing.assert_allclose(mix.mean, alpha * a.mean + (1 - alpha) * b.mean, atol=1e-10)
    np.testing.assert_allclose(mix.cov, alpha * a.cov + (1 - alpha) * b.cov, atol=1e-10)


@settings(max_examples=50)
@given(stats_and_psi(), finite, finite)
def test_criterion_in_unit_interval(sp, rv, rc):
    stats, psi = sp
    p = mixture_params(stats, psi)
    d = stats.mean.shape[-1]
    region = SuccessRegion.one_dim(rv) if d == 1 else SuccessRegion.two_dim(rv, rc)
    v = float(criterion_from_params(p.mean, p.cov, region))
    assert 0.0 <= v <= 1.0 + 1e-15


@settings(max_examples=50)
@given(stats_and_psi(d=2), st.floats(-5, 5), st.floats(-5, 5), st.floats(0, 3))
def test_two_dim_monotone(sp, rv, rc, step):
    stats, psi = sp
    p = mixture_params(stats, psi)
    base = float(criterion_from_params(p.mean, p.cov, SuccessRegion.two_dim(rv, rc)))
    harder_v = float(criterion_from_params(p.mean, p.cov, SuccessRegion.two_dim(rv + step, rc)))
    harder_c = float(criterion_from_params(p.mean, p.cov, SuccessRegion.two_dim(rv, rc - step)))
    assert harder_v <= base + 1e-9
    assert harder_c <= base + 1e-9


@settings(max_examples=100)
@given(st.integers(1, 4), st.integers(1, 4), st.data())
def test_lp_bounds_milp(M, K, data):
    values = data.draw(arrays(float, (M, K), elements=st.floats(-5, 5)))
    costs = data.draw(arrays(float, (M, K), elements=st.floats(0, 5)))
    budget = data.draw(st.floats(0, 5 * M))
    prob = KnapsackProblem(values, costs, budget)
    lp, mi = linprog_mckp(prob), mixedint_mckp(prob)
    if mi.feasible:
        assert lp.feasible
        assert lp.objective >= mi.objective - 1e-9
        assert prob.cost(mi.allocation) <= budget + prob.tol
    if lp.feasible:
        assert prob.cost(lp.allocation) <= budget + 1e-9
        np.testing.assert_allclose(lp.allocation.sum(1), 1.0, atol=1e-12)
