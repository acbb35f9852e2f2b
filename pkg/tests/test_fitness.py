"""Residual-vector fitness tests with hand-derived oracle values."""

import numpy as np
import pytest

from evosolve.expr import GraphBuilder
from evosolve.fitness import (
    DiffOperatorSpec,
    FitnessVector,
    combined,
    data_residuals,
    grid_fitness,
    homogenize,
    physics_residuals,
    residual_closure,
    scalar_fitness,
)

C_LOAD = 5e-5
LENGTH = 10.0
ALPHA = 2.0833333333333333e-06
BETA = -4.1666666666666665e-05
GAMMA = 0.0020833333333333333


def beam_deflection(x):
    return (C_LOAD / 24.0) * (x**4 - 2.0 * LENGTH * x**3 + LENGTH**3 * x)


def beam_graph():
    # c0*x^4 + c1*x^3 + c2*x with slots in payload order 0,1,2
    b = GraphBuilder(dim=1)
    x = b.var(0)
    x2 = b.mul(x, x)
    x4 = b.mul(x2, x2)
    x3 = b.mul(x2, x)
    term = b.add(b.mul(b.const(0), x4), b.mul(b.const(1), x3))
    b.add(term, b.mul(b.const(2), x))
    return b.graph()


def beam_problem(n_train):
    xs = np.linspace(0.0, LENGTH, n_train).reshape(-1, 1)
    interior = np.arange(1.0, 10.0).reshape(-1, 1)
    ends = np.array([[0.0], [LENGTH]])
    specs = (
        DiffOperatorSpec(terms=(((4,), 1.0),), points=interior,
                         forcing=lambda X: np.full(len(X), C_LOAD),
                         label="load"),
        DiffOperatorSpec(terms=(((2,), 1.0),), points=ends, label="moment"),
    )
    grid = np.linspace(0.0, LENGTH, 201).reshape(-1, 1)
    test_specs = (
        DiffOperatorSpec(terms=(((4,), 1.0),), points=grid,
                         forcing=lambda X: np.full(len(X), C_LOAD)),
    )

    class P:
        train_X = xs
        train_y = beam_deflection(xs[:, 0])
        test_X = grid
        test_y = beam_deflection(grid[:, 0])

    P.specs = specs
    P.test_specs = test_specs
    return P


def zero_graph():
    b = GraphBuilder(dim=1)
    x = b.var(0)
    b.sub(x, x)
    return b.graph()


def test_spec_rejects_empty_terms():
    with pytest.raises(ValueError):
        DiffOperatorSpec(terms=(), points=np.zeros((1, 1)))


def test_spec_rejects_nonpositive_weight():
    with pytest.raises(ValueError):
        DiffOperatorSpec(terms=(((1,), 1.0),), points=np.zeros((1, 1)),
                         weight=0.0)


def test_spec_rejects_order_above_limit():
    with pytest.raises(ValueError):
        DiffOperatorSpec(terms=(((5,), 1.0),), points=np.zeros((1, 1)))


def test_zero_model_data_residuals_three_points():
    # three supports: residual is minus the deflection at each
    g = zero_graph()
    xs = np.array([[0.0], [5.0], [10.0]])
    res = data_residuals(g, np.zeros(0), xs, beam_deflection(xs[:, 0]))
    np.testing.assert_allclose(
        res, [0.0, -0.006510416666666667, 0.0], rtol=0, atol=1e-18)


def test_quadratic_model_interior_residuals():
    # fourth derivative of x^2 vanishes, leaving minus the loading constant
    b = GraphBuilder(dim=1)
    x = b.var(0)
    b.mul(x, x)
    g = b.graph()
    spec = DiffOperatorSpec(terms=(((4,), 1.0),),
                            points=np.arange(1.0, 10.0).reshape(-1, 1),
                            forcing=lambda X: np.full(len(X), C_LOAD))
    res = physics_residuals(g, np.zeros(0), (spec,))
    np.testing.assert_allclose(res, np.full(9, -C_LOAD), rtol=0, atol=0)


def test_weight_scales_block():
    b = GraphBuilder(dim=1)
    x = b.var(0)
    b.mul(x, x)
    g = b.graph()
    pts = np.array([[2.0], [3.0]])
    plain = DiffOperatorSpec(terms=(((2,), 1.0),), points=pts)
    heavy = DiffOperatorSpec(terms=(((2,), 1.0),), points=pts, weight=4.0)
    r1 = physics_residuals(g, np.zeros(0), (plain,))
    r4 = physics_residuals(g, np.zeros(0), (heavy,))
    np.testing.assert_allclose(r4, 4.0 * r1, rtol=0, atol=0)


def test_combined_length_two_supports():
    prob = beam_problem(2)
    vec = combined(zero_graph(), np.zeros(0), prob)
    assert len(vec.dd) == 2
    assert len(vec.pr) == 11
    assert vec.length == 13


def test_combined_length_poisson_style():
    rng = np.random.default_rng(0)
    boundary = rng.random((16, 2))
    boundary[:, 1] = np.round(boundary[:, 1])
    interior = rng.random((32, 2))
    spec = DiffOperatorSpec(
        terms=(((2, 0), 1.0), ((0, 2), 1.0)), points=interior,
        forcing=lambda X: -2 * np.pi**2 * np.sin(np.pi * X[:, 0]) * np.sin(np.pi * X[:, 1]))

    class P:
        train_X = boundary
        train_y = np.zeros(16)
        specs = (spec,)

    b = GraphBuilder(dim=2)
    b.mul(b.var(0), b.var(1))
    vec = combined(b.graph(), np.zeros(0), P)
    assert vec.length == 48


def test_homogenize_is_mean_of_squares():
    vec = FitnessVector(np.array([1.0, -2.0]), np.array([3.0]))
    assert homogenize(vec) == pytest.approx((1 + 4 + 9) / 3, rel=0, abs=0)


def test_homogenize_ignores_block_split():
    entries = np.array([0.5, -1.5, 2.0, 0.25, -3.0])
    whole = FitnessVector(entries, np.zeros(0))
    split = FitnessVector(entries[:2], entries[2:])
    assert homogenize(whole) == homogenize(split)


def test_undefined_entry_gives_infinite_fitness():
    b = GraphBuilder(dim=1)
    one = b.const(0)
    b.div(one, b.var(0))
    g = b.graph()
    xs = np.array([[0.0], [1.0]])
    res = data_residuals(g, np.array([1.0]), xs, np.zeros(2))
    vec = FitnessVector(res, np.zeros(0))
    assert vec.undefined
    assert homogenize(vec) == np.inf


def test_undefined_physics_entry_gives_infinite_fitness():
    b = GraphBuilder(dim=1)
    b.div(b.const(0), b.var(0))
    g = b.graph()
    spec = DiffOperatorSpec(terms=(((1,), 1.0),),
                            points=np.array([[0.0], [2.0]]))
    vec = FitnessVector(np.zeros(0),
                        physics_residuals(g, np.array([1.0]), (spec,)))
    assert homogenize(vec) == np.inf


def test_exact_beam_solution_scores_zero():
    prob = beam_problem(2)
    coeffs = np.array([ALPHA, BETA, GAMMA])
    val = scalar_fitness(beam_graph(), coeffs, prob)
    assert val < 1e-15


def test_grid_fitness_exact_solution():
    prob = beam_problem(2)
    coeffs = np.array([ALPHA, BETA, GAMMA])
    assert grid_fitness(beam_graph(), coeffs, prob) < 1e-15


def test_grid_fitness_rejects_wrong_coefficient_count():
    prob = beam_problem(2)
    with pytest.raises(ValueError):
        grid_fitness(beam_graph(), np.zeros(2), prob)


def test_grid_fitness_separates_impostor():
    # same grid, visibly nonzero score for a quadratic stand-in
    prob = beam_problem(2)
    b = GraphBuilder(dim=1)
    x = b.var(0)
    b.mul(b.const(0), b.mul(x, x))
    val = grid_fitness(b.graph(), np.array([1e-3]), prob)
    assert val > 1e-8


def test_closure_single_matches_direct_path():
    prob = beam_problem(3)
    single, _ = residual_closure(beam_graph(), prob)
    coeffs = np.array([ALPHA, BETA, GAMMA])
    vec = combined(beam_graph(), coeffs, prob)
    np.testing.assert_allclose(
        single(coeffs), np.concatenate([vec.dd, vec.pr]), rtol=1e-13, atol=1e-18)


def test_closure_batch_rows_match_single():
    prob = beam_problem(3)
    single, batch = residual_closure(beam_graph(), prob)
    rng = np.random.default_rng(7)
    C = rng.uniform(-1.0, 1.0, size=(5, 3))
    out = batch(C)
    assert out.shape == (5, 14)
    for i in range(5):
        np.testing.assert_allclose(out[i], single(C[i]), rtol=1e-12, atol=1e-15)


def test_closure_handles_no_coefficients():
    prob = beam_problem(2)
    single, batch = residual_closure(zero_graph(), prob)
    res = single(np.zeros(0))
    assert res.shape == (13,)
    out = batch(np.zeros((4, 0)))
    assert out.shape == (4, 13)
    for row in out:
        np.testing.assert_allclose(row, res, rtol=0, atol=0)
