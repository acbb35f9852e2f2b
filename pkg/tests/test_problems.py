"""Benchmark builder tests: sampling layout, known solutions, counting."""

import numpy as np
import pytest

from evosolve.expr import Op, complexity
from evosolve.fitness import combined, physics_residuals, scalar_fitness
from evosolve.localopt import OptConfig
from evosolve.problems import (
    BEAM_ALPHA,
    BEAM_BETA,
    BEAM_GAMMA,
    beam_deflection,
    build_euler_bernoulli,
    build_poisson,
    hypothesis_space_size,
    manifest,
    poisson_forcing,
    poisson_solution,
)
from evosolve.simplify import is_known_solution
from evosolve.fitness import Individual


def test_beam_training_layouts():
    for n, expect in [
        (2, [0.0, 10.0]),
        (3, [0.0, 5.0, 10.0]),
        (5, [0.0, 2.5, 5.0, 7.5, 10.0]),
        (11, list(np.arange(0.0, 11.0))),
    ]:
        prob = build_euler_bernoulli(n=n)
        np.testing.assert_allclose(prob.train_X[:, 0], expect, atol=0)


def test_beam_midpoint_label():
    prob = build_euler_bernoulli(n=3)
    np.testing.assert_allclose(
        prob.train_y, [0.0, 0.006510416666666667, 0.0], rtol=0, atol=1e-18)
    assert prob.train_y[1] == pytest.approx(6.5104e-3, abs=1e-7)


def test_beam_counts_and_palette():
    prob = build_euler_bernoulli(n=2, test=1)
    assert prob.n_train == 2
    assert prob.m_physics == 11
    assert prob.max_complexity == 10
    assert prob.palette.ops == (Op.ADD, Op.SUB, Op.MUL)
    more = build_euler_bernoulli(n=2, test=2)
    assert more.palette.ops == (Op.ADD, Op.SUB, Op.MUL, Op.POW, Op.SIN, Op.DIV)


def test_beam_conventional_mode_drops_physics():
    prob = build_euler_bernoulli(n=3, physics=False)
    assert prob.specs == ()
    vec = combined(prob.known_graph, prob.known_coeffs, prob)
    assert vec.length == 3
    assert len(vec.pr) == 0


def test_beam_combined_length():
    prob = build_euler_bernoulli(n=2)
    vec = combined(prob.known_graph, prob.known_coeffs, prob)
    assert vec.length == 13


def test_beam_test_grid():
    prob = build_euler_bernoulli()
    assert prob.test_X.shape == (201, 1)
    assert prob.test_X[1, 0] - prob.test_X[0, 0] == pytest.approx(0.05)


def test_beam_known_solution_within_complexity_budget():
    prob = build_euler_bernoulli()
    assert complexity(prob.known_graph) <= prob.max_complexity
    np.testing.assert_allclose(
        prob.known_coeffs, [BEAM_ALPHA, BEAM_GAMMA * 0 + BEAM_BETA, BEAM_GAMMA])


def test_beam_rejects_bad_arguments():
    with pytest.raises(ValueError):
        build_euler_bernoulli(n=4)
    with pytest.raises(ValueError):
        build_euler_bernoulli(test=3)


@pytest.mark.parametrize("n", [2, 3, 5, 11])
def test_beam_known_fitness_below_threshold(n):
    prob = build_euler_bernoulli(n=n)
    assert scalar_fitness(prob.known_graph, prob.known_coeffs, prob) < 1e-15


@pytest.mark.parametrize("d", [1, 2, 3])
def test_poisson_known_fitness_below_threshold(d):
    prob = build_poisson(d=d, rng=np.random.default_rng(9))
    assert scalar_fitness(prob.known_graph, prob.known_coeffs, prob) < 1e-15


def test_poisson_counts_and_palettes():
    for d, nb, ni in [(1, 2, 2), (2, 16, 32), (3, 20, 64)]:
        prob = build_poisson(d=d, rng=np.random.default_rng(1))
        assert prob.n_train == nb
        assert prob.m_physics == ni
        assert prob.max_complexity == 20
    assert build_poisson(d=2, test=1).palette.ops == (Op.MUL, Op.SIN)
    assert build_poisson(d=2, test=2).palette.ops == (
        Op.ADD, Op.SUB, Op.MUL, Op.DIV, Op.SIN, Op.COS)


def test_poisson_1d_vector_length():
    prob = build_poisson(d=1)
    vec = combined(prob.known_graph, prob.known_coeffs, prob)
    assert vec.length == 4


def test_poisson_boundary_and_interior_placement():
    prob = build_poisson(d=3, rng=np.random.default_rng(7))
    on_face = np.any((prob.train_X == 0.0) | (prob.train_X == 1.0), axis=1)
    assert np.all(on_face)
    np.testing.assert_array_equal(prob.train_y, np.zeros(20))
    interior = prob.specs[0].points
    assert np.all((interior > 0.0) & (interior < 1.0))


def test_poisson_forcing_peak():
    val = poisson_forcing(np.array([[0.5, 0.5]]))
    np.testing.assert_allclose(val, [-2.0 * np.pi**2], rtol=1e-13)


def test_poisson_known_residuals_tiny_pointwise():
    prob = build_poisson(d=2, rng=np.random.default_rng(3))
    res = physics_residuals(prob.known_graph, prob.known_coeffs, prob.specs)
    assert np.max(np.abs(res)) < 1e-12


def test_poisson_grid_shapes():
    assert build_poisson(d=1).test_X.shape == (201, 1)
    assert build_poisson(d=2).test_X.shape == (41 * 41, 2)
    assert build_poisson(d=3).test_X.shape == (21 * 21 * 21, 3)


def test_poisson_sampling_is_seed_reproducible():
    a = build_poisson(d=2, rng=np.random.default_rng(123))
    b = build_poisson(d=2, rng=np.random.default_rng(123))
    np.testing.assert_array_equal(a.train_X, b.train_X)
    np.testing.assert_array_equal(a.specs[0].points, b.specs[0].points)


def test_poisson_rejects_bad_arguments():
    with pytest.raises(ValueError):
        build_poisson(d=4)
    with pytest.raises(ValueError):
        build_poisson(d=2, test=0)


def test_poisson_solution_values():
    assert poisson_solution([[0.5]]) == pytest.approx(1.0)
    assert poisson_solution([[0.5, 0.5]]) == pytest.approx(1.0)
    assert poisson_solution([[0.0, 0.3]]) == pytest.approx(0.0, abs=1e-16)


@pytest.mark.parametrize("builder", [
    lambda: build_euler_bernoulli(n=2, test=1),
    lambda: build_euler_bernoulli(n=11, test=2),
    lambda: build_poisson(d=1, rng=np.random.default_rng(2)),
    lambda: build_poisson(d=2, rng=np.random.default_rng(2)),
    lambda: build_poisson(d=3, rng=np.random.default_rng(2)),
])
def test_known_solution_passes_success_gate(builder):
    prob = builder()
    ind = Individual(prob.known_graph, prob.known_coeffs.copy())
    assert is_known_solution(ind, prob)


def test_hypothesis_space_matches_published_magnitudes():
    targets = [
        ((2, 2, 20), 1.2e20),
        ((2, 6, 20), 4.1e23),
        ((3, 2, 20), 1.3e25),
        ((3, 6, 20), 3.8e27),
    ]
    for (d, m, n), target in targets:
        exact, approx = hypothesis_space_size(d, m, n)
        assert approx == pytest.approx(target, rel=0.10)
        # the d=3 falling-factorial tail puts the ratio at 148.6
        assert 1e-2 <= approx / exact <= 1e3


def test_hypothesis_space_exact_value_frozen():
    exact, approx = hypothesis_space_size(2, 2, 20)
    # 6^16 * (20*4)(19*3)(18*2)(17*1) and 6^16 * 80^4, hand-checked
    assert exact == pytest.approx(6**16 * 80 * 57 * 36 * 17, rel=1e-12)
    assert approx == pytest.approx(6**16 * 80**4, rel=1e-12)


def test_hypothesis_space_rejects_short_stack():
    with pytest.raises(ValueError):
        hypothesis_space_size(2, 2, 4)


def test_crowding_probes_inside_domain():
    prob = build_poisson(d=2)
    assert prob.crowd_X.shape == (16, 2)
    assert np.all((prob.crowd_X >= 0.0) & (prob.crowd_X <= 1.0))
    beam = build_euler_bernoulli()
    assert beam.crowd_X.shape == (16, 1)
    assert np.all((beam.crowd_X >= 0.0) & (beam.crowd_X <= 10.0))


def test_manifest_is_complete_and_deterministic():
    prob = build_poisson(d=2, rng=np.random.default_rng(5))
    text = manifest(prob)
    again = manifest(build_poisson(d=2, rng=np.random.default_rng(5)))
    assert text == again
    assert "problem poisson_2d_test1" in text
    assert "palette MUL SIN" in text
    assert "train 16" in text
    assert "points 32" in text
    assert "known_model" in text
    first_interior = prob.specs[0].points[0]
    assert repr(float(first_interior[0])) in text


def test_beam_deflection_endpoints_vanish():
    assert beam_deflection(0.0) == 0.0
    assert beam_deflection(10.0) == pytest.approx(0.0, abs=1e-18)
