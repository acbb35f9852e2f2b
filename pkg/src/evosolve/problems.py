"""Benchmark problem builders: beam deflection and d-dimensional Poisson.

Each builder returns an immutable Problem carrying its training pairs,
operator specs, palette, held-out dense grid, and the known closed-form
solution used by the success gate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from evosolve import simplify
from evosolve.expr import (
    ExpressionGraph,
    GraphBuilder,
    Op,
    OperatorPalette,
    serialize,
)
from evosolve.fitness import DiffOperatorSpec

BEAM_LOAD = 5e-5
BEAM_LENGTH = 10.0
BEAM_ALPHA = BEAM_LOAD / 24.0
BEAM_BETA = -2.0 * BEAM_LENGTH * BEAM_LOAD / 24.0
BEAM_GAMMA = BEAM_LENGTH**3 * BEAM_LOAD / 24.0

SUCCESS_THRESHOLD = 1e-15
CROWD_PROBES = 16

_EB_TRAIN_COUNTS = (2, 3, 5, 11)
_POISSON_BOUNDARY = {1: 2, 2: 16, 3: 20}
_POISSON_INTERIOR = {1: 2, 2: 32, 3: 64}
_POISSON_GRID = {1: 201, 2: 41, 3: 21}

PALETTES = {
    ("eb", 1): OperatorPalette((Op.ADD, Op.SUB, Op.MUL)),
    ("eb", 2): OperatorPalette((Op.ADD, Op.SUB, Op.MUL, Op.POW, Op.SIN, Op.DIV)),
    ("poisson", 1): OperatorPalette((Op.MUL, Op.SIN)),
    ("poisson", 2): OperatorPalette((Op.ADD, Op.SUB, Op.MUL, Op.DIV, Op.SIN, Op.COS)),
}


@dataclass(frozen=True, eq=False)
class Problem:
    name: str
    dim: int
    domain: tuple
    palette: OperatorPalette
    max_complexity: int
    train_X: np.ndarray
    train_y: np.ndarray
    specs: tuple
    test_X: np.ndarray
    test_y: np.ndarray
    test_specs: tuple
    known_graph: ExpressionGraph
    known_coeffs: np.ndarray
    crowd_X: np.ndarray
    success_threshold: float = SUCCESS_THRESHOLD

    def __post_init__(self):
        if len(self.train_X) != len(self.train_y):
            raise ValueError("training inputs and labels disagree in length")
        if not self.specs and not len(self.train_X):
            raise ValueError("a problem needs data or operator conditions")

    @property
    def n_train(self):
        return len(self.train_X)

    @property
    def m_physics(self):
        return sum(len(spec.points) for spec in self.specs)


def beam_deflection(x):
    """Closed-form beam displacement under uniform load."""
    x = np.asarray(x, dtype=float)
    return (BEAM_LOAD / 24.0) * (
        x**4 - 2.0 * BEAM_LENGTH * x**3 + BEAM_LENGTH**3 * x
    )


def _beam_known():
    # Horner-style nesting keeps the target expressible at complexity 10
    b = GraphBuilder(dim=1)
    x = b.var(0)
    inner = b.add(b.mul(b.const(0), x), b.const(1))
    b.mul(x, b.add(b.mul(b.mul(x, x), inner), b.const(2)))
    return b.graph(), np.array([BEAM_ALPHA, BEAM_BETA, BEAM_GAMMA])


def build_euler_bernoulli(n=2, test=1, physics=True, rng=None):
    """Beam problem: d4u/dx4 = c on (0, l), zero ends, zero end curvature.

    Training points are evenly spaced on [0, l] including both ends, with
    labels from the exact deflection.  ``physics=False`` drops the operator
    blocks entirely (conventional data-only fitness).
    """
    if n not in _EB_TRAIN_COUNTS:
        raise ValueError(f"unsupported training count {n}")
    if test not in (1, 2):
        raise ValueError("test must be 1 or 2")
    xs = np.linspace(0.0, BEAM_LENGTH, n).reshape(-1, 1)
    interior = np.arange(1.0, BEAM_LENGTH).reshape(-1, 1)
    ends = np.array([[0.0], [BEAM_LENGTH]])
    if physics:
        specs = (
            DiffOperatorSpec(
                terms=(((4,), 1.0),), points=interior,
                forcing=lambda X: np.full(len(X), BEAM_LOAD),
                label="load"),
            DiffOperatorSpec(terms=(((2,), 1.0),), points=ends,
                             label="curvature"),
        )
    else:
        specs = ()
    grid = np.linspace(0.0, BEAM_LENGTH, 201).reshape(-1, 1)
    test_specs = (
        DiffOperatorSpec(terms=(((4,), 1.0),), points=grid,
                         forcing=lambda X: np.full(len(X), BEAM_LOAD),
                         label="load"),
        DiffOperatorSpec(terms=(((2,), 1.0),), points=ends,
                         label="curvature"),
    )
    known_graph, known_coeffs = _beam_known()
    domain = ((0.0, BEAM_LENGTH),)
    tag = "" if physics else "_conventional"
    return Problem(
        name=f"eb_n{n}_test{test}{tag}",
        dim=1,
        domain=domain,
        palette=PALETTES[("eb", test)],
        max_complexity=10,
        train_X=xs,
        train_y=beam_deflection(xs[:, 0]),
        specs=specs,
        test_X=grid,
        test_y=beam_deflection(grid[:, 0]),
        test_specs=test_specs,
        known_graph=known_graph,
        known_coeffs=known_coeffs,
        crowd_X=simplify.probe_points(1, domain, CROWD_PROBES),
    )


def poisson_solution(X):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return np.prod(np.sin(np.pi * X), axis=1)


def poisson_forcing(X):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    d = X.shape[1]
    return -d * np.pi**2 * np.prod(np.sin(np.pi * X), axis=1)


def _poisson_known(d):
    b = GraphBuilder(dim=d)
    factors = [b.sin(b.mul(b.const(i), b.var(i))) for i in range(d)]
    acc = factors[0]
    for f in factors[1:]:
        acc = b.mul(acc, f)
    return b.graph(root=acc), np.full(d, np.pi)


def _sample_boundary(d, count, rng):
    if d == 1:
        return np.array([[0.0], [1.0]])
    pts = rng.uniform(0.0, 1.0, size=(count, d))
    faces = rng.integers(0, 2 * d, size=count)
    for i, face in enumerate(faces):
        pts[i, face // 2] = float(face % 2)
    return pts


def _sample_interior(d, count, rng):
    pts = rng.uniform(0.0, 1.0, size=(count, d))
    # open-cube condition: redraw the measure-zero edge hits
    while True:
        on_edge = np.any((pts <= 0.0) | (pts >= 1.0), axis=1)
        if not np.any(on_edge):
            return pts
        pts[on_edge] = rng.uniform(0.0, 1.0, size=(int(on_edge.sum()), d))


def _tensor_grid(d, points_per_axis):
    axes = [np.linspace(0.0, 1.0, points_per_axis)] * d
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _laplacian_terms(d):
    return tuple(
        (tuple(2 if j == i else 0 for j in range(d)), 1.0) for i in range(d)
    )


def build_poisson(d=2, test=1, rng=None):
    """Poisson problem on the open unit d-cube with zero Dirichlet boundary.

    Boundary samples (uniform on the faces) become zero-label training
    pairs; interior samples carry the Laplacian-minus-forcing spec.  All
    sampling is drawn from ``rng`` and stored on the Problem.
    """
    if d not in (1, 2, 3):
        raise ValueError(f"unsupported dimension {d}")
    if test not in (1, 2):
        raise ValueError("test must be 1 or 2")
    if rng is None:
        rng = np.random.default_rng(0)
    boundary = _sample_boundary(d, _POISSON_BOUNDARY[d], rng)
    interior = _sample_interior(d, _POISSON_INTERIOR[d], rng)
    specs = (
        DiffOperatorSpec(terms=_laplacian_terms(d), points=interior,
                         forcing=poisson_forcing, label="poisson"),
    )
    grid = _tensor_grid(d, _POISSON_GRID[d])
    test_specs = (
        DiffOperatorSpec(terms=_laplacian_terms(d), points=grid,
                         forcing=poisson_forcing, label="poisson"),
    )
    known_graph, known_coeffs = _poisson_known(d)
    domain = ((0.0, 1.0),) * d
    return Problem(
        name=f"poisson_{d}d_test{test}",
        dim=d,
        domain=domain,
        palette=PALETTES[("poisson", test)],
        max_complexity=20,
        train_X=boundary,
        train_y=np.zeros(len(boundary)),
        specs=specs,
        test_X=grid,
        test_y=poisson_solution(grid),
        test_specs=test_specs,
        known_graph=known_graph,
        known_coeffs=known_coeffs,
        crowd_X=simplify.probe_points(d, domain, CROWD_PROBES),
    )


def hypothesis_space_size(d, m, n):
    """(exact, approx) count of candidate models.

    ``n`` is the command-stack length, ``m`` the operator count, ``d`` the
    input dimension.  The approximation replaces the falling-factorial tail
    with (2nd)^(2d).
    """
    if n <= 2 * d:
        raise ValueError("stack length must exceed twice the dimension")
    head = float(2 * d + m) ** (n - 2 * d)
    tail = 1.0
    for i in range(1, 2 * d + 1):
        tail *= (n - i + 1) * (2 * d - i + 1)
    approx = head * float(2 * n * d) ** (2 * d)
    return head * tail, approx


def manifest(problem):
    """Self-contained text description of a problem's full sampling."""
    lines = [
        f"problem {problem.name}",
        f"dim {problem.dim}",
        "domain " + " ".join(f"{lo!r} {hi!r}" for lo, hi in problem.domain),
        "palette " + " ".join(op.value for op in problem.palette.ops),
        f"max_complexity {problem.max_complexity}",
        f"success_threshold {problem.success_threshold!r}",
        f"train {problem.n_train}",
    ]
    for x, y in zip(problem.train_X, problem.train_y):
        lines.append(" ".join(repr(float(v)) for v in x) + f" -> {float(y)!r}")
    for spec in problem.specs:
        terms = ",".join(f"{mi}:{mult!r}" for mi, mult in spec.terms)
        lines.append(
            f"spec {spec.label or 'op'} weight {spec.weight!r} "
            f"terms {terms} points {len(spec.points)}")
        for x in spec.points:
            lines.append(" ".join(repr(float(v)) for v in x))
    lines.append("known_coeffs "
                 + " ".join(repr(float(c)) for c in problem.known_coeffs))
    lines.append("known_model")
    lines.append(serialize(problem.known_graph).rstrip("\n"))
    return "\n".join(lines) + "\n"
