"""Vector fitness: data residuals stacked with differential-operator residuals.

Every candidate is scored by the residual vector [data block; operator blocks].
The homogenized scalar is the mean of squared entries; any undefined entry
(non-finite evaluation anywhere in the vector) makes the scalar infinite.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from evosolve import evalad
from evosolve.expr import coefficient_count


@dataclass(frozen=True, eq=False)
class DiffOperatorSpec:
    """One operator block: weight * (sum_i mult_i * D^mi f - forcing) at points.

    ``terms`` is a tuple of (multi_index, multiplier); ``forcing`` maps the
    point array to target values (None means zero).  ``weight`` is the
    regularization strength for the block.
    """

    terms: tuple
    points: np.ndarray
    forcing: object = None
    weight: float = 1.0
    label: str = ""

    def __post_init__(self):
        if not self.terms:
            raise ValueError("operator spec needs at least one term")
        if not self.weight > 0:
            raise ValueError("operator weight must be positive")
        for mi, _ in self.terms:
            if sum(mi) > evalad.MAX_ORDER:
                raise ValueError("operator order above the supported maximum")

    def forcing_values(self):
        if self.forcing is None:
            return np.zeros(len(self.points))
        return np.asarray(self.forcing(self.points), dtype=float)


@dataclass
class Individual:
    """A candidate model: graph plus calibrated coefficients and cached score.

    ``graph`` is the pruned, evaluable model that ``coeffs`` belongs to.
    ``genome`` is the full command stack carried through variation; its
    unreachable commands are neutral genetic material.
    """

    graph: object
    coeffs: np.ndarray
    fitness: float = np.inf
    phenotype: np.ndarray | None = None
    genome: object = None

    def __post_init__(self):
        if self.genome is None:
            self.genome = self.graph


@dataclass
class FitnessVector:
    """Data-block and operator-block residuals, in declared order."""

    dd: np.ndarray
    pr: np.ndarray

    @property
    def undefined(self):
        return not (
            np.all(np.isfinite(self.dd)) and np.all(np.isfinite(self.pr))
        )

    @property
    def length(self):
        return len(self.dd) + len(self.pr)


def homogenize(vec):
    """Mean of squared residuals; infinity when any entry is undefined."""
    if vec.undefined:
        return np.inf
    total = float(np.dot(vec.dd, vec.dd) + np.dot(vec.pr, vec.pr))
    return total / vec.length


def data_residuals(graph, coeffs, X, y):
    """Prediction minus label at every training point (nan where undefined)."""
    X = np.asarray(X, dtype=float)
    vals, _ = evalad.eval_values(graph, coeffs, X)
    return vals - np.asarray(y, dtype=float)


def physics_residuals(graph, coeffs, specs):
    """Concatenated operator-block residuals in the given spec order."""
    out = []
    for spec in specs:
        reqs = [mi for mi, _ in spec.terms]
        vals, _ = evalad.eval_derivs(graph, coeffs, spec.points, reqs)
        acc = np.zeros(len(spec.points))
        for mi, mult in spec.terms:
            acc = acc + mult * vals[mi]
        out.append(spec.weight * (acc - spec.forcing_values()))
    if not out:
        return np.zeros(0)
    return np.concatenate(out)


def combined(graph, coeffs, problem):
    """Full fitness vector for a problem: data first, then each operator block."""
    if len(problem.train_X):
        dd = data_residuals(graph, coeffs, problem.train_X, problem.train_y)
    else:
        dd = np.zeros(0)
    pr = physics_residuals(graph, coeffs, problem.specs)
    return FitnessVector(dd, pr)


def scalar_fitness(graph, coeffs, problem):
    return homogenize(combined(graph, coeffs, problem))


def residual_closure(graph, problem):
    """(single, batch) residual functions over coefficient space.

    ``single(c)`` maps a coefficient vector to the residual vector.
    ``batch(C)`` maps an (S, q) block of coefficient settings to an (S, n+m)
    residual matrix in one pass per block, which is what makes
    finite-difference Jacobians affordable.
    """
    blocks = []
    if len(problem.train_X):
        blocks.append(("data", np.asarray(problem.train_X, float),
                       np.asarray(problem.train_y, float), None))
    for spec in problem.specs:
        blocks.append(("op", np.asarray(spec.points, float),
                       spec.forcing_values(), spec))
    tiled = {}

    def batch(C):
        C = np.atleast_2d(np.asarray(C, dtype=float))
        S = C.shape[0]
        outs = []
        for bi, (kind, X, target, spec) in enumerate(blocks):
            m = X.shape[0]
            key = (bi, S)
            if key not in tiled:
                tiled[key] = np.tile(X, (S, 1))
            XT = tiled[key]
            CT = np.repeat(C, m, axis=0)
            if kind == "data":
                vals, _ = evalad.eval_values(graph, CT, XT)
                res = vals.reshape(S, m) - target
            else:
                reqs = [mi for mi, _ in spec.terms]
                vals, _ = evalad.eval_derivs(graph, CT, XT, reqs)
                acc = np.zeros(S * m)
                for mi, mult in spec.terms:
                    acc = acc + mult * vals[mi]
                res = spec.weight * (acc.reshape(S, m) - target)
            outs.append(res)
        return np.concatenate(outs, axis=1)

    def single(c):
        return batch(np.asarray(c, dtype=float)[None, :])[0]

    return single, batch


def grid_fitness(graph, coeffs, problem):
    """Homogenized fitness on the dense held-out grid.

    The data block compares against the known solution's grid values; the
    operator blocks are the problem's governing operators applied across the
    same grid.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    if len(coeffs) != coefficient_count(graph):
        raise ValueError("coefficient vector does not match the graph")
    vals, _ = evalad.eval_values(graph, coeffs, problem.test_X)
    dd = vals - problem.test_y
    pr = physics_residuals(graph, coeffs, problem.test_specs)
    return homogenize(FitnessVector(dd, pr))
