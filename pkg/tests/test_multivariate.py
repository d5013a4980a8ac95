import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize

from grovermean import multivariate as mv
from grovermean import params
from grovermean.errors import CapExceeded, PreconditionError
from grovermean.prob import FiniteDist, UniRV, covariance, truncate_multi, truncate_uni
from grovermean.sim import LatticeSpec
from grovermean.trials import SuccessRate, trial_seeds


def point_mass(x):
    return FiniteDist(np.ones(1), np.array([x], dtype=float))


# Tail gate.
def test_tail_gate_passes_on_fixtures(fixtures):
    for name, dist in fixtures.items():
        if dist.dim <= 2:
            assert mv.variance_tail_check(dist, LatticeSpec(dist.dim, 8)).passed, name


def test_tail_gate_reports_violations_for_tiny_D(fixtures):
    result = mv.variance_tail_check(fixtures["bench_2d"], LatticeSpec(2, 8), D=0.05)
    assert not result.passed
    t, u = result.violations[0]
    assert t > 0 and len(u) == 2


def test_tail_gate_against_brute_force(fixtures):
    dist = fixtures["bench_2d"]
    lat = LatticeSpec(2, 4)
    cov = covariance(dist).matrix
    variances = [float(u @ cov @ u) for u in lat.points()]
    result = mv.variance_tail_check(dist, lat, t_grid=[0.0, 0.01, 0.02])
    for t, emp in zip(result.t, result.empirical):
        assert emp == pytest.approx(np.mean([v >= t for v in variances]))


def test_tail_gate_validation(fixtures):
    with pytest.raises(PreconditionError):
        mv.variance_tail_check(fixtures["bench_2d"], LatticeSpec(1, 8))
    with pytest.raises(PreconditionError):
        mv.variance_tail_check(fixtures["bench_2d"], LatticeSpec(2, 8), D=0.0)


# Simple estimator.
def test_refine_multi_preconditions(fixtures):
    small = fixtures["bench_2d_small"]
    with pytest.raises(PreconditionError, match="900"):
        mv.refine_multi(small, 0.05, 0.1)
    with pytest.raises(PreconditionError, match="tr Sigma"):
        mv.refine_multi(fixtures["bench_2d"], 1e-4, 0.1)


def test_refine_multi_relaxed_accuracy(fixtures):
    # eps far above the admissible cap so the lattice fits on a desk; a check of the mechanics only
    dist = fixtures["bench_2d_small"]
    eps = 0.05
    reps = [mv.refine_multi(dist, eps, 0.1, seed=s, check=False) for s in trial_seeds(9, 20)]
    hits = sum(np.abs(r.estimate - dist.mean()).max() <= eps / 2 for r in reps)
    assert SuccessRate(hits, 20, 0.9).passed
    assert reps[0].details["N"] == params.multi_resolution(eps)


def test_constrained_simple_fails_fast_at_d2(fixtures):
    dist = fixtures["bench_2d"]
    sigma0 = math.sqrt(covariance(dist).trace)
    with pytest.raises(CapExceeded, match="N=65536"):
        mv.constrained_simple(dist.shifted(dist.mean()), 2, sigma0, params.mean_bound_eps0(sigma0, 2.0), 0.1)


def test_constrained_simple_one_dimensional(fixtures):
    dist = fixtures["uni_a"].shifted(fixtures["uni_a"].mean() + 0.01)
    sigma0 = math.sqrt(covariance(dist).trace)
    rep = mv.constrained_simple(dist, 2, sigma0, params.mean_bound_eps0(sigma0, 2.0), 0.1, seed=0)
    assert np.abs(rep.estimate - dist.mean()).max() <= sigma0 / 2


def test_constrained_simple_preconditions(fixtures):
    dist = fixtures["uni_a"]
    with pytest.raises(PreconditionError, match="eps0"):
        mv.constrained_simple(dist, 2, 0.2, 10.0, 0.1)
    with pytest.raises(PreconditionError, match="tr Sigma"):
        mv.constrained_simple(dist, 2, 0.01, 0.001, 0.1)


# V channel and meticulous estimator.
def test_ideal_v_channel_deviation_is_xi_squared():
    rv = UniRV(np.array([0.5, 0.5]), np.array([-0.2, 0.3]))
    ch = mv.build_v_channel(rv, 16, 1.0, 1.0 / 3.0)
    assert ch.deviation_sq == pytest.approx(params.METICULOUS_XI ** 2, rel=1e-12)
    assert ch.passed
    assert abs(ch.amplitude) == pytest.approx(1 - params.METICULOUS_XI ** 2 / 2)


def test_empirical_v_channel_meets_proof_bound():
    rv = UniRV(np.array([0.5, 0.5]), np.array([-0.2, 0.3]))
    ch = mv.build_v_channel(rv, 4, 1.0, 1.0 / 3.0, mode="empirical", seed=1, draws=60)
    assert ch.passed
    assert ch.deviation_sq <= 4 * ch.delta_v + (4 / ch.n_v) ** 2
    q, values = ch.outcomes
    assert q.sum() == pytest.approx(1.0)


def test_v_channel_validation():
    rv = UniRV(np.ones(1), np.zeros(1))
    with pytest.raises(PreconditionError):
        mv.build_v_channel(rv, 4, 1.0, 1 / 3, mode="exact")
    with pytest.raises(PreconditionError):
        mv.build_v_channel(rv, 4, 1.0, 1 / 3, xi=1.5)


def test_meticulous_point_mass_and_zero_sigma():
    rep = mv.constrained_meticulous(point_mass([0.0, 0.0]), 4, 0.0, 0.1)
    assert np.all(rep.estimate == 0.0)


def test_meticulous_n_assumption(fixtures):
    dist = fixtures["bench_2d"].shifted(fixtures["bench_2d"].mean())
    sigma0 = math.sqrt(covariance(dist).trace)
    with pytest.raises(PreconditionError, match="ln"):
        mv.constrained_meticulous(dist, 2, sigma0, 0.1)
    rep = mv.constrained_meticulous(dist, 2, sigma0, 0.1, enforce_n_assumption=False, seed=0)
    assert rep.details["N"] == params.meticulous_resolution(2, 2.0)
    # the floor is undefined at d = 1, so it is not applied there
    mv.constrained_meticulous(fixtures["uni_a"].shifted(fixtures["uni_a"].mean()), 1, 0.2, 0.1, seed=0)


def test_meticulous_empirical_mode_small_lattice():
    dist = FiniteDist(np.array([0.5, 0.5]), np.array([[0.05], [-0.05]]))
    rep = mv.constrained_meticulous(dist, 0.25, 0.06, 0.2, mode="empirical", seed=3, v_draws=20)
    assert rep.details["N"] == params.meticulous_resolution(0.25, 2.0)
    assert np.abs(rep.estimate).max() <= 0.06 / 0.25


def test_meticulous_empirical_cap():
    dist = FiniteDist(np.array([0.5, 0.5]), np.array([[0.05, 0.0], [-0.05, 0.0]]))
    with pytest.raises(CapExceeded):
        mv.constrained_meticulous(dist, 4, 0.06, 0.2, mode="empirical")


def test_v_sweep_on_tiny_lattice(fixtures):
    dist = fixtures["bench_2d"].shifted(fixtures["bench_2d"].mean())
    scale = math.sqrt(20.0) * math.sqrt(covariance(dist).trace)
    sweep = mv.v_certificate_sweep(dist, LatticeSpec(2, 2), scale, seed=0, draws=30)
    assert len(sweep) == 4
    assert all(ch.passed for _, ch in sweep)


# Classical pieces.
@settings(max_examples=30, deadline=None)
@given(st.integers(1, 12), st.integers(1, 3), st.integers(0, 2 ** 31))
def test_geometric_median_minimises_distance_sum(k, d, seed):
    pts = np.random.default_rng(seed).normal(size=(k, d))
    gm = mv.geometric_median(pts)

    def cost(x):
        return np.linalg.norm(pts - x, axis=1).sum()

    best = minimize(cost, pts.mean(axis=0), method="Nelder-Mead",
                    options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 20000}).fun
    assert cost(gm) <= best + 1e-6


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2 ** 31), st.floats(-10, 10))
def test_geometric_median_translation_equivariant(k, seed, shift):
    pts = np.random.default_rng(seed).normal(size=(k, 2))
    np.testing.assert_allclose(mv.geometric_median(pts + shift), mv.geometric_median(pts) + shift, atol=1e-6)


def test_geometric_median_of_repeated_point():
    pts = np.array([[1.0, 1.0]] * 3 + [[5.0, 5.0]])
    np.testing.assert_allclose(mv.geometric_median(pts), [1.0, 1.0], atol=1e-8)


def test_classical_multi_success(fixtures):
    dist = fixtures["bench_2d"]
    trace = covariance(dist).trace
    n = params.full_classical_n(0.2)
    hits = sum(np.linalg.norm(mv.classical_multi(dist.sampler(), n, 0.05, seed=s) - dist.mean())
               <= math.sqrt(trace) / 5 for s in trial_seeds(2, 200))
    assert SuccessRate(hits, 200, 0.95).passed


def test_classical_multi_constant_input_exact():
    assert np.all(mv.classical_multi(point_mass([0.1, -0.2]).sampler(), 5, 0.1, seed=0) == [0.1, -0.2])


# Quantiles.
@settings(max_examples=80, deadline=None)
@given(st.lists(st.tuples(st.floats(0.01, 1), st.integers(-5, 5)), min_size=1, max_size=6), st.floats(0.01, 1.0))
def test_upper_quantile_definition(pairs, x):
    w = np.array([p for p, _ in pairs])
    rv = UniRV(w / w.sum(), np.array([float(v) for _, v in pairs]))
    q = mv.upper_quantile(rv, x)
    assert rv.probs[rv.values >= q].sum() >= x - 1e-12
    # no larger support value qualifies
    larger = rv.values[rv.values > q]
    for y in larger:
        assert rv.probs[rv.values >= y].sum() < x - 1e-15 or np.isclose(rv.probs[rv.values >= y].sum(), x)


def test_quantile_estimate_sandwich_rate():
    rv = UniRV(np.array([0.5, 0.3, 0.15, 0.05]), np.array([0.0, 1.0, 2.0, 3.0]))
    p, delta, C = 0.2, 0.1, 0.5
    lo, hi = mv.upper_quantile(rv, p), mv.upper_quantile(rv, C * p)
    hits = sum(lo <= mv.quantile_estimate(rv, p, delta, seed=s, C=C) <= hi for s in trial_seeds(8, 200))
    assert SuccessRate(hits, 200, 1 - delta).passed


def test_quantile_validation():
    rv = UniRV(np.ones(1), np.zeros(1))
    with pytest.raises(PreconditionError):
        mv.quantile_estimate(rv, 1.0, 0.1)
    with pytest.raises(PreconditionError):
        mv.upper_quantile(rv, 0.0)


def test_zeroing_truncation_can_break_the_second_moment_step():
    # norms 10 and 1 with mass 0.3 each: with p = 1/2, C = 1/2 the sandwich is [Q(1/2), Q(1/4)] = [1, 10]
    dist = FiniteDist(np.array([0.3, 0.3, 0.4]), np.array([[10.0, 0.0], [0.0, 1.0], [0.0, 0.0]]))
    norms = dist.norms()
    p, C = 0.5, 0.5
    assert mv.upper_quantile(norms, p) == 1.0
    assert mv.upper_quantile(norms, C * p) == 10.0
    for K in (1.0, 5.0):
        zeroed = truncate_multi(dist, K)
        second = float(zeroed.probs @ np.sum(zeroed.values ** 2, axis=1))
        tail = float(norms.probs[norms.values >= K].sum())
        assert second < K * K * p
        assert second < K * K * tail
        # clamping the norm instead keeps E|Y|^2 >= K^2 P[|Z| >= K] >= K^2 C p
        clamped = truncate_uni(norms, K)
        clamped_second = float(clamped.probs @ clamped.values ** 2)
        assert clamped_second >= K * K * tail >= K * K * C * p


# Reductions.
def test_notso_multi_point_mass():
    rep = mv.notso_multi(point_mass([1.0, -2.0]), 4, 0.0, 0.2, seed=0)
    np.testing.assert_allclose(rep.estimate, [1.0, -2.0])


def test_notso_multi_trace_precondition(fixtures):
    with pytest.raises(PreconditionError, match="tr Sigma"):
        mv.notso_multi(fixtures["bench_2d"], 4, 0.1, 0.1)
    with pytest.raises(PreconditionError, match="inner"):
        mv.notso_multi(fixtures["bench_2d"], 4, 1.0, 0.1, inner="fancy")


def test_notso_multi_labels_stage_errors(fixtures):
    dist = fixtures["bench_2d"]
    sigma0 = math.sqrt(covariance(dist).trace)
    with pytest.raises(CapExceeded) as info:
        mv.notso_multi(dist, 2, sigma0, 0.2, inner="simple", seed=0)
    assert str(info.value).startswith("stage constrained_simple:")


def test_notso_multi_meticulous_accuracy(fixtures):
    dist = fixtures["bench_2d"]
    sigma0 = math.sqrt(covariance(dist).trace)
    rep = mv.notso_multi(dist, 4, sigma0, 0.2, seed=5)
    assert np.abs(rep.estimate - dist.mean()).max() <= sigma0 / 4
    assert rep.details["inner"] == "meticulous"


def test_full_estimator_point_mass():
    rep = mv.full_estimator(point_mass([0.5, 0.25]), 4, 0.2, seed=0)
    np.testing.assert_allclose(rep.estimate, [0.5, 0.25])
    assert rep.details["truncation_scale"] == 0.0


def test_full_estimator_certificates(fixtures):
    dist = fixtures["bench_2d"]
    rep = mv.full_estimator(dist, 4, 0.2, seed=1)
    certs = rep.details["certificates"]
    assert set(certs) == {"kickstart", "quantile_sandwich", "truncation_moment", "relative_error"}
    assert all(c.passed for c in certs.values())
    assert np.abs(rep.estimate - dist.mean()).max() <= math.sqrt(covariance(dist).trace) / 4


def test_notso_multi_three_dimensional(fixtures):
    # n = 1 keeps the d = 3 lattice at 128^3 points
    dist = fixtures["gauss_3d"]
    sigma0 = math.sqrt(covariance(dist).trace)
    rep = mv.notso_multi(dist, 1, sigma0, 0.2, seed=2, enforce_n_assumption=False)
    assert rep.details["N"] == 128
    assert np.abs(rep.estimate - dist.mean()).max() <= sigma0


def test_full_estimator_validation(fixtures):
    with pytest.raises(PreconditionError):
        mv.full_estimator(fixtures["bench_2d"], 0, 0.2)
    with pytest.raises(PreconditionError):
        mv.full_estimator(fixtures["bench_2d"], 4, 0.2, inner="other")
