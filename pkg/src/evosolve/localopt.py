"""Coefficient calibration: damped least squares with a quasi-Newton fallback.

The primary path is Levenberg-Marquardt over the residual vector with a
forward-difference Jacobian.  All q perturbed settings plus the base point go
through the evaluator as one batch, so a Jacobian costs one graph traversal
rather than q+1.  When LM stalls, a BFGS polish on the homogenized scalar
takes over.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.optimize

from evosolve import fitness
from evosolve.expr import coefficient_count

_MAX_DAMPING = 1e16
_MIN_DAMPING = 1e-15
_BIG = 1e300


@dataclass(frozen=True)
class OptConfig:
    max_iterations: int = 200
    restarts: int = 3
    residual_tol: float = 1e-16
    step_tol: float = 1e-14
    init_damping: float = 1e-3
    damping_factor: float = 10.0
    fd_step: float = 1e-7
    guess_low: float = -1.0
    guess_high: float = 1.0
    bfgs_fallback: bool = True

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.restarts < 1:
            raise ValueError("restarts must be at least 1")
        if not (self.residual_tol > 0 and self.step_tol > 0):
            raise ValueError("tolerances must be positive")
        if not (self.init_damping > 0 and self.damping_factor > 1):
            raise ValueError("damping schedule must grow")
        if not self.fd_step > 0:
            raise ValueError("fd_step must be positive")
        if not self.guess_low < self.guess_high:
            raise ValueError("guess interval is empty")


@dataclass
class CalibrationResult:
    coeffs: np.ndarray
    objective: float
    iterations: int
    converged: bool
    method: str


def fd_jacobian(batch, c, fd_step):
    """Forward-difference Jacobian and base residual in one batched pass."""
    c = np.asarray(c, dtype=float)
    q = c.size
    steps = fd_step * (1.0 + np.abs(c))
    C = np.tile(c, (q + 1, 1))
    C[1:] += np.diag(steps)
    R = batch(C)
    J = (R[1:] - R[0]).T / steps
    return J, R[0]


def levenberg_marquardt(batch, c0, config=None):
    """Minimize the sum of squared residuals from one starting point."""
    config = config or OptConfig()
    c = np.array(c0, dtype=float)
    q = c.size
    r = batch(c[None])[0]
    n = r.size
    if not np.all(np.isfinite(r)):
        return CalibrationResult(c, np.inf, 0, False, "lm")
    cost = float(r @ r)
    if np.sqrt(cost) < config.residual_tol:
        return CalibrationResult(c, cost / n, 0, True, "lm")
    lam = config.init_damping
    J = None
    converged = False
    iters = 0
    while iters < config.max_iterations:
        iters += 1
        if J is None:
            J, _ = fd_jacobian(batch, c, config.fd_step)
            if not np.all(np.isfinite(J)):
                break
            g = J.T @ r
            H = J.T @ J
        try:
            d = np.linalg.solve(H + lam * np.eye(q), -g)
        except np.linalg.LinAlgError:
            lam *= config.damping_factor
            if lam > _MAX_DAMPING:
                break
            continue
        c_try = c + d
        r_try = batch(c_try[None])[0]
        if np.all(np.isfinite(r_try)):
            cost_try = float(r_try @ r_try)
        else:
            cost_try = np.inf
        if cost_try < cost:
            c, r, cost = c_try, r_try, cost_try
            lam = max(lam / config.damping_factor, _MIN_DAMPING)
            J = None
            if (np.sqrt(cost) < config.residual_tol
                    or np.linalg.norm(d) < config.step_tol):
                converged = True
                break
        else:
            lam *= config.damping_factor
            # sub-resolution rejected step: the floor is reached
            if np.linalg.norm(d) < config.step_tol:
                converged = True
                break
            if lam > _MAX_DAMPING:
                break
    return CalibrationResult(c, cost / n, iters, converged, "lm")


def bfgs_polish(scalar, c0, config=None):
    """Quasi-Newton descent on the homogenized objective (central-difference grad)."""
    config = config or OptConfig()

    def fun(c):
        v = scalar(np.asarray(c, dtype=float))
        return float(v) if np.isfinite(v) else _BIG

    def grad(c):
        c = np.asarray(c, dtype=float)
        g = np.empty(c.size)
        for j in range(c.size):
            h = config.fd_step * (1.0 + abs(c[j]))
            e = np.zeros_like(c)
            e[j] = h
            g[j] = (fun(c + e) - fun(c - e)) / (2.0 * h)
        return g

    with np.errstate(all="ignore"):
        res = scipy.optimize.minimize(
            fun, np.asarray(c0, dtype=float), jac=grad, method="BFGS",
            options={"maxiter": config.max_iterations, "gtol": 1e-12})
    obj = fun(res.x)
    return CalibrationResult(np.asarray(res.x, dtype=float),
                             obj if obj < _BIG else np.inf,
                             int(res.nit), bool(res.success), "bfgs")


def calibrate(graph, problem, rng, config=None, init=None):
    """Fit a graph's coefficients to a problem from several starting points.

    ``init``, when given, is tried first; the remaining starts are uniform
    draws from the configured guess interval.  Returns the best result across
    restarts, with a BFGS polish when no restart converged.
    """
    config = config or OptConfig()
    single, batch = fitness.residual_closure(graph, problem)
    q = coefficient_count(graph)
    if q == 0:
        r = single(np.zeros(0))
        if np.all(np.isfinite(r)):
            obj = float(r @ r) / r.size
        else:
            obj = np.inf
        return CalibrationResult(np.zeros(0), obj, 0, True, "direct")

    guesses = []
    if init is not None:
        guesses.append(np.asarray(init, dtype=float))
    while len(guesses) < config.restarts:
        guesses.append(rng.uniform(config.guess_low, config.guess_high, size=q))

    best = None
    for c0 in guesses:
        res = levenberg_marquardt(batch, c0, config)
        if best is None or res.objective < best.objective:
            best = res
        if best.converged and best.objective <= config.residual_tol:
            break

    if config.bfgs_fallback and not best.converged:
        if np.isfinite(best.objective):
            start = best.coeffs
        else:
            start = guesses[0]

        def scalar(c):
            rr = single(c)
            if np.all(np.isfinite(rr)):
                return float(rr @ rr) / rr.size
            return np.inf

        polish = bfgs_polish(scalar, start, config)
        if polish.objective < best.objective:
            best = polish
    return best


def light_config(config=None, max_iterations=40, restarts=2):
    """A cheaper schedule for inner-loop calibration during search."""
    base = config or OptConfig()
    return replace(base, max_iterations=max_iterations, restarts=restarts)
