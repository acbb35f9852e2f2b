"""Evolve the closed-form solution of the Poisson equation on the unit cube.

The target problem is

    laplacian(u) = -d*pi^2 * prod_i sin(pi*x_i)    on (0,1)^d
    u = 0                                          on the boundary

whose solution is the separable product u = prod_i sin(pi*x_i).  The
fitness vector concatenates boundary-data residuals with the interior
operator residuals, so candidates are judged as solutions of the PDE, not
as curve fits.  Success requires both a sub-1e-15 dense-grid fitness and
structural equivalence of the expanded canonical form, which rules out
lucky numerical impostors.
"""

import time

from evosolve.evolve import EvolutionConfig, evolve_until
from evosolve.expr import deserialize, render_infix
from evosolve.problems import build_poisson, hypothesis_space_size


def main():
    for d in (1, 2):
        problem = build_poisson(d=d, test=1)
        exact, approx = hypothesis_space_size(
            d, len(problem.palette.ops), problem.max_complexity)
        print(f"== {problem.name} ==")
        print(f"hypothesis space: about {approx:.2g} candidate stacks")
        start = time.perf_counter()
        record = evolve_until(
            problem, EvolutionConfig(seed=0, max_generations=50))
        elapsed = time.perf_counter() - start
        graph = deserialize(record.best_graph)
        print(f"outcome: {record.outcome} at generation "
              f"{record.success_generation} ({elapsed:.1f}s)")
        print(f"model:   {render_infix(graph, record.best_coeffs)}")
        print(f"fitness: {record.best_fitness:.3e}")
        print()


if __name__ == "__main__":
    main()
