"""Genetic-programming discovery of closed-form ODE/PDE solutions.

Candidate models are command-stack expression graphs.  Their fit to data and
to differential-operator constraints is scored as a residual vector, constant
slots are calibrated by local optimization, and populations evolve on an
island archipelago with deterministic crowding.
"""

from evosolve.expr import (
    Command,
    ExpressionGraph,
    GraphBuilder,
    GraphError,
    Op,
    OperatorPalette,
    ParseError,
    complexity,
    deserialize,
    render_infix,
    serialize,
)

__all__ = [
    "Command",
    "ExpressionGraph",
    "GraphBuilder",
    "GraphError",
    "Op",
    "OperatorPalette",
    "ParseError",
    "complexity",
    "deserialize",
    "render_infix",
    "serialize",
]

__version__ = "0.1.0"
