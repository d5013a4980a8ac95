import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from grovermean import params
from grovermean.errors import NoSignChange, PoleInBracket, PreconditionError
from grovermean.prob import UniRV
from grovermean.spectrum import (build_grover, canonical_phase, certify_key_property, degenerate_classes,
                                 eigen_residual, full_spectrum, grover_matrix, key_solution, phase_gap, secular,
                                 solve_alpha, state_distance_bound_check)
from corpora import key_corpus
from oracles import FROZEN, dense_eigenphases, dense_grover, grid_alpha, match_phases


def test_grover_matrix_matches_entrywise_construction():
    probs, theta = np.array([0.2, 0.3, 0.5]), np.array([0.4, -1.0, 2.5])
    np.testing.assert_allclose(grover_matrix(probs, theta), dense_grover(probs, theta), atol=1e-15)


def test_two_point_alpha_matches_frozen_value():
    theta = UniRV(np.array([0.75, 0.25]), np.array([0.1, -0.3]))
    alpha = solve_alpha(theta, (-0.5, 0.5))
    assert alpha == pytest.approx(FROZEN["alpha_two_point"], abs=1e-14)


def test_frozen_values_reproduce_under_mpmath():
    from oracles import mpmath_frozen

    fresh = mpmath_frozen()
    for key, value in FROZEN.items():
        got = fresh[key]
        if isinstance(value, tuple):
            for a, b in zip(value, got):
                assert a == pytest.approx(float(b), rel=1e-15)
        else:
            assert value == pytest.approx(float(got), rel=1e-15), key


def test_truncation_scales_match_frozen():
    assert params.key_lambda(1.0 / 3.0) == pytest.approx(FROZEN["lambda_third"], rel=1e-15)
    assert params.uni_lambda() == pytest.approx(FROZEN["lambda_uni"], rel=1e-15)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.05, 1.0), min_size=2, max_size=5), st.integers(0, 2 ** 31))
def test_alpha_agrees_with_grid_scan(weights, seed):
    rng = np.random.default_rng(seed)
    probs = np.array(weights) / sum(weights)
    theta = rng.uniform(-0.8, 0.8, size=probs.size)
    rv = UniRV(probs, theta)
    # poles sit at theta_k - pi < -2.1, so this bracket is pole free
    alpha = solve_alpha(rv, (-2.0, 2.0))
    assert alpha == pytest.approx(grid_alpha(probs, theta, -2.0, 2.0), abs=1e-11)


def test_secular_function_is_decreasing_between_poles():
    rv = UniRV(np.array([0.4, 0.6]), np.array([0.2, -0.5]))
    grid = np.linspace(-2.5, 2.5, 200)
    vals = [secular(rv, b) for b in grid]
    assert np.all(np.diff(vals) < 0)


def test_bracket_errors():
    rv = UniRV(np.array([0.5, 0.5]), np.array([0.0, 0.5]))
    with pytest.raises(PoleInBracket):
        solve_alpha(rv, (-4.0, 0.0))
    with pytest.raises(NoSignChange):
        solve_alpha(rv, (1.0, 2.0))
    with pytest.raises(PreconditionError):
        solve_alpha(rv, (1.0, 1.0))


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2 ** 31), st.booleans())
def test_full_spectrum_matches_dense_eigendecomposition(k, seed, degenerate):
    rng = np.random.default_rng(seed)
    probs = rng.dirichlet(np.ones(k))
    theta = rng.uniform(-math.pi, math.pi, size=k)
    if degenerate and k >= 2:
        theta[1] = theta[0]
    rv = UniRV(probs, theta)
    sols = full_spectrum(rv)
    op = build_grover(rv)
    reference, _ = dense_eigenphases(dense_grover(probs, theta))
    assert match_phases([s.alpha for s in sols], reference, 1e-8) <= 1e-8
    assert max(eigen_residual(op, s) for s in sols) <= 1e-9
    # eigenvectors of a unitary with distinct phases are orthonormal
    V = np.stack([s.amplitudes for s in sols], axis=1)
    np.testing.assert_allclose(V.conj().T @ V, np.eye(k), atol=1e-8)


def test_degenerate_classes_merge_across_the_cut():
    rv = UniRV(np.array([0.3, 0.3, 0.4]), np.array([math.pi, -math.pi, 0.0]))
    classes = degenerate_classes(rv)
    assert sorted(len(c) for c in classes) == [1, 2]


def test_zero_mass_outcome_gives_its_own_eigenvector():
    rv = UniRV(np.array([0.5, 0.5, 0.0]), np.array([0.1, -0.2, 1.0]))
    sols = full_spectrum(rv)
    op = build_grover(rv)
    assert len(sols) == 3
    assert max(eigen_residual(op, s) for s in sols) <= 1e-9


def test_point_mass_spectrum():
    rv = UniRV(np.ones(1), np.array([0.7]))
    (sol,) = full_spectrum(rv)
    assert sol.alpha == pytest.approx(0.7, abs=1e-12)
    assert sol.overlap == pytest.approx(1.0)


@settings(max_examples=80, deadline=None)
@given(st.floats(-20, 20))
def test_canonical_phase_range(x):
    y = canonical_phase(x)
    assert -math.pi < y <= math.pi
    assert phase_gap(x, y) < 1e-9


def test_key_property_on_corpus_sample():
    for rv, eps, s0 in key_corpus(count=25):
        cert, sol = certify_key_property(rv, eps, s0)
        assert cert.passed, cert
        assert 0 < sol.overlap <= 1


def test_key_solution_is_an_eigenvector():
    rv = UniRV(np.array([0.5, 0.5]), np.array([-0.05, 0.15]))
    theta, sol, _ = key_solution(rv, 0.1, 0.2)
    assert eigen_residual(build_grover(theta), sol) <= 1e-12


@pytest.mark.parametrize("eps, s0", [(0.2, 0.1), (0.1, 0.5), (0.0, 0.1)])
def test_key_preconditions(eps, s0):
    rv = UniRV(np.ones(1), np.zeros(1))
    with pytest.raises(PreconditionError):
        certify_key_property(rv, eps, s0)


def test_key_preconditions_check_moments():
    with pytest.raises(PreconditionError, match="E X"):
        certify_key_property(UniRV(np.ones(1), np.array([0.2])), 0.1, 0.3)
    with pytest.raises(PreconditionError, match="E X\\^2"):
        certify_key_property(UniRV(np.array([0.5, 0.5]), np.array([-0.5, 0.5])), 0.1, 0.3)


def test_state_distance_bound_examples():
    rv = UniRV(np.array([0.5, 0.5]), np.array([-0.05, 0.1]))
    for N in (1, 8, 64):
        lhs, rhs = state_distance_bound_check(rv, 0.1, 0.2, N)
        assert lhs <= rhs
    with pytest.raises(PreconditionError):
        state_distance_bound_check(rv, 0.1, 0.2, -1)


def test_dense_cap():
    with pytest.raises(PreconditionError, match="dense cap"):
        build_grover(UniRV(np.full(65, 1 / 65), np.zeros(65)))
