"""Discover the Euler-Bernoulli beam deflection curve from two data points.

A simply supported beam under uniform load deflects as

    u(x) = (c/24) * (x^4 - 2*l*x^3 + l^3*x),   c = 5e-5, l = 10

With only the two endpoint measurements (both zero!) a data-only fit is
hopeless.  The physics-regularized fitness adds the load equation
d4u/dx4 = c on the interior and zero curvature at the ends, which pins the
curve down completely.  Evolution then searches the {+, -, *} palette for
a command stack whose calibrated constants satisfy everything at once.
"""

import time

from evosolve.evolve import EvolutionConfig, evolve_until
from evosolve.expr import deserialize, render_infix
from evosolve.problems import build_euler_bernoulli


def main():
    problem = build_euler_bernoulli(n=2, test=1, physics=True)
    print(f"problem: {problem.name}")
    print(f"data points: {problem.n_train}, "
          f"operator conditions: {problem.m_physics}")
    print(f"palette: {[op.value for op in problem.palette.ops]}, "
          f"complexity cap {problem.max_complexity}")
    print()

    cfg = EvolutionConfig(seed=1, max_generations=500)
    start = time.perf_counter()
    record = evolve_until(problem, cfg)
    elapsed = time.perf_counter() - start

    print(f"outcome: {record.outcome} "
          f"(generation {record.success_generation}, {elapsed:.1f}s)")
    print("model:    ",
          render_infix(deserialize(record.best_graph), record.best_coeffs))
    print(f"fitness:   {record.best_fitness:.3e}")
    print()
    print("exact coefficients: alpha=c/24, beta=-2*l*c/24, gamma=l^3*c/24")
    print("                  = 2.0833e-06, -4.1667e-05, 2.0833e-03")
    trajectory = [s.best_fitness for s in record.stats[:8]]
    print(f"best fitness by generation: "
          f"{['%.1e' % v for v in trajectory]} ...")


if __name__ == "__main__":
    main()
