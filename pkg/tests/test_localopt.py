"""Calibration tests against closed-form and normal-equations oracles."""

import numpy as np
import pytest

from evosolve.expr import GraphBuilder
from evosolve.fitness import DiffOperatorSpec, scalar_fitness
from evosolve.localopt import (
    CalibrationResult,
    OptConfig,
    bfgs_polish,
    calibrate,
    fd_jacobian,
    levenberg_marquardt,
    light_config,
)

C_LOAD = 5e-5
LENGTH = 10.0
ALPHA = 2.0833333333333333e-06
BETA = -4.1666666666666665e-05
GAMMA = 0.0020833333333333333


def _as_batch(fn):
    def batch(C):
        C = np.atleast_2d(np.asarray(C, dtype=float))
        return np.stack([fn(row) for row in C])
    return batch


def test_config_validation():
    with pytest.raises(ValueError):
        OptConfig(max_iterations=0)
    with pytest.raises(ValueError):
        OptConfig(restarts=0)
    with pytest.raises(ValueError):
        OptConfig(damping_factor=1.0)
    with pytest.raises(ValueError):
        OptConfig(guess_low=1.0, guess_high=-1.0)


def test_scalar_shift_root():
    batch = _as_batch(lambda c: np.array([c[0] - 3.0]))
    res = levenberg_marquardt(batch, np.array([0.0]))
    assert res.converged
    assert res.coeffs[0] == pytest.approx(3.0, abs=1e-12)


def test_scalar_shift_accurate_within_three_iterations():
    batch = _as_batch(lambda c: np.array([c[0] - 3.0]))
    res = levenberg_marquardt(batch, np.array([0.0]),
                              OptConfig(max_iterations=3))
    assert res.coeffs[0] == pytest.approx(3.0, abs=1e-9)


def test_linear_problem_matches_normal_equations():
    rng = np.random.default_rng(5)
    A = rng.normal(size=(20, 4)) + np.eye(20, 4) * 3.0
    b = rng.normal(size=20)
    batch = _as_batch(lambda c: A @ c - b)
    res = levenberg_marquardt(batch, np.zeros(4))
    oracle, *_ = np.linalg.lstsq(A, b, rcond=None)
    np.testing.assert_allclose(res.coeffs, oracle, rtol=1e-8)


def test_rosenbrock_valley():
    def resid(c):
        return np.array([1.0 - c[0], 10.0 * (c[1] - c[0] ** 2)])

    res = levenberg_marquardt(_as_batch(resid), np.array([-1.2, 1.0]))
    np.testing.assert_allclose(res.coeffs, [1.0, 1.0], atol=1e-6)
    final = resid(res.coeffs)
    assert float(final @ final) < 1e-12


def test_fd_jacobian_matches_analytic():
    def resid(c):
        return np.array([np.sin(c[0]) * c[1], c[0] ** 2, c[1] ** 3])

    c = np.array([0.7, -1.3])
    J, r0 = fd_jacobian(_as_batch(resid), c, 1e-7)
    analytic = np.array([
        [np.cos(c[0]) * c[1], np.sin(c[0])],
        [2.0 * c[0], 0.0],
        [0.0, 3.0 * c[1] ** 2],
    ])
    np.testing.assert_allclose(J, analytic, rtol=1e-4, atol=1e-6)
    np.testing.assert_allclose(r0, resid(c), rtol=0, atol=0)


def test_rejected_steps_raise_damping_and_recover():
    # quartic bowl: big early steps overshoot, damping must adapt
    def resid(c):
        return np.array([c[0] ** 2 - 1.0, 0.1 * c[0]])

    res = levenberg_marquardt(_as_batch(resid), np.array([5.0]))
    assert res.objective < 1e-2


def test_undefined_region_is_infinite():
    def resid(c):
        out = np.array([c[0] - 1.0])
        return out if c[0] > 0 else np.array([np.nan])

    res = levenberg_marquardt(_as_batch(resid), np.array([-2.0]))
    assert res.objective == np.inf
    assert not res.converged


def beam_problem():
    interior = np.arange(1.0, 10.0).reshape(-1, 1)
    ends = np.array([[0.0], [LENGTH]])

    def deflect(x):
        return (C_LOAD / 24.0) * (x**4 - 2 * LENGTH * x**3 + LENGTH**3 * x)

    class P:
        train_X = ends
        train_y = deflect(ends[:, 0])
        specs = (
            DiffOperatorSpec(terms=(((4,), 1.0),), points=interior,
                             forcing=lambda X: np.full(len(X), C_LOAD)),
            DiffOperatorSpec(terms=(((2,), 1.0),), points=ends),
        )

    return P


def beam_graph():
    b = GraphBuilder(dim=1)
    x = b.var(0)
    x2 = b.mul(x, x)
    t = b.add(b.mul(b.const(0), b.mul(x2, x2)),
              b.mul(b.const(1), b.mul(x2, x)))
    b.add(t, b.mul(b.const(2), x))
    return b.graph()


def test_beam_coefficients_recovered():
    rng = np.random.default_rng(0)
    res = calibrate(beam_graph(), beam_problem(), rng)
    assert res.objective < 1e-15
    np.testing.assert_allclose(
        res.coeffs, [ALPHA, BETA, GAMMA], rtol=0, atol=1e-10)


def test_calibrate_is_deterministic():
    a = calibrate(beam_graph(), beam_problem(), np.random.default_rng(11))
    b = calibrate(beam_graph(), beam_problem(), np.random.default_rng(11))
    np.testing.assert_array_equal(a.coeffs, b.coeffs)
    assert a.objective == b.objective


def test_init_guess_is_used_first():
    rng = np.random.default_rng(1)
    res = calibrate(beam_graph(), beam_problem(), rng,
                    config=OptConfig(restarts=1),
                    init=np.array([ALPHA, BETA, GAMMA]))
    assert res.converged
    np.testing.assert_allclose(
        res.coeffs, [ALPHA, BETA, GAMMA], rtol=0, atol=1e-10)


def sine_problem():
    xs = np.linspace(0.05, 1.0, 21).reshape(-1, 1)

    class P:
        train_X = xs
        train_y = np.sin(np.pi * xs[:, 0])
        specs = ()

    return P


def sine_graph():
    b = GraphBuilder(dim=1)
    b.sin(b.mul(b.const(0), b.var(0)))
    return b.graph()


def test_sine_frequency_recovery_rate():
    # at least half of 20 independent unit-interval starts must reach pi
    prob = sine_problem()
    g = sine_graph()
    from evosolve.fitness import residual_closure
    _, batch = residual_closure(g, prob)
    rng = np.random.default_rng(2024)
    hits = 0
    for _ in range(20):
        c0 = rng.uniform(-1.0, 1.0, size=1)
        res = levenberg_marquardt(batch, c0)
        if abs(res.coeffs[0] - np.pi) < 1e-6:
            hits += 1
    assert hits >= 10


def test_no_coefficients_shortcut():
    b = GraphBuilder(dim=1)
    x = b.var(0)
    b.mul(x, x)
    g = b.graph()
    prob = beam_problem()
    res = calibrate(g, prob, np.random.default_rng(0))
    assert res.method == "direct"
    assert res.objective == pytest.approx(scalar_fitness(g, np.zeros(0), prob),
                                          rel=1e-12)


def test_always_undefined_graph():
    b = GraphBuilder(dim=1)
    x = b.var(0)
    b.div(b.const(0), b.sub(x, x))
    g = b.graph()
    res = calibrate(g, beam_problem(), np.random.default_rng(3))
    assert res.objective == np.inf
    assert not res.converged


def test_bfgs_polish_reaches_minimum():
    def scalar(c):
        return (c[0] - 2.0) ** 2 + (c[1] + 1.0) ** 2

    res = bfgs_polish(scalar, np.zeros(2))
    np.testing.assert_allclose(res.coeffs, [2.0, -1.0], atol=1e-5)
    assert res.method == "bfgs"


def test_light_config_overrides():
    base = OptConfig(fd_step=1e-6)
    lite = light_config(base, max_iterations=25, restarts=1)
    assert lite.max_iterations == 25
    assert lite.restarts == 1
    assert lite.fd_step == 1e-6
    assert isinstance(lite, OptConfig)


def test_result_fields():
    res = levenberg_marquardt(
        _as_batch(lambda c: np.array([c[0] - 3.0])), np.array([0.0]))
    assert isinstance(res, CalibrationResult)
    assert res.method == "lm"
    assert res.iterations >= 1
