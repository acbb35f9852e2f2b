"""Deterministic-crowding evolution over an island archipelago.

Graphs evolve per island through paired crossover/mutation; every offspring
is calibrated, then competes against its phenotypically closer parent, and
islands exchange their best individuals around a ring on a fixed schedule.
All randomness flows through per-(island, generation) streams derived from
the run seed, so results are independent of execution schedule.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

from evosolve import evalad, fitness as _fitness, simplify
from evosolve.expr import (
    ARITY,
    Command,
    ExpressionGraph,
    Op,
    complexity,
    deserialize,
    prune,
    random_graph,
    serialize,
)
from evosolve.localopt import OptConfig, calibrate, light_config
from evosolve.problems import manifest

CHECKPOINT_VERSION = 1
_PHENO_CLIP = 1e150


@dataclass(frozen=True)
class EvolutionConfig:
    seed: int = 0
    islands: int = 10
    population_per_island: int = 15
    crossover_rate: float = 0.5
    mutation_rate: float = 0.5
    migration_interval: int = 10
    migration_count: int = 2
    threshold: float = 1e-15
    max_generations: int = 100
    opt: OptConfig = field(default_factory=light_config)

    def __post_init__(self):
        if self.islands < 1:
            raise ValueError("need at least one island")
        if self.population_per_island < 2:
            raise ValueError("island population must allow pairing")
        for rate in (self.crossover_rate, self.mutation_rate):
            if not 0.0 <= rate <= 1.0:
                raise ValueError("rates must lie in [0, 1]")
        if self.migration_interval < 1:
            raise ValueError("migration interval must be positive")
        if not 0 <= self.migration_count <= self.population_per_island:
            raise ValueError("migration count exceeds island population")
        if self.max_generations < 0:
            raise ValueError("max_generations must be non-negative")
        if not self.threshold > 0:
            raise ValueError("threshold must be positive")

    @property
    def population(self):
        return self.islands * self.population_per_island


@dataclass
class GenerationStats:
    """Per-generation summary; success is only probed at threshold crossings."""

    generation: int
    island_best: tuple
    best_fitness: float
    success: bool = False


@dataclass
class RunRecord:
    seed: int
    problem_name: str
    config: dict
    stats: list
    outcome: str
    success_generation: int | None
    best_graph: str
    best_coeffs: list
    best_fitness: float
    problem_manifest: str
    # filled by the experiment harness when the record is persisted
    config_hash: str = ""
    wall_time: float = 0.0
    infix: str = ""
    canonical: str = ""

    def to_dict(self):
        return {
            "seed": self.seed,
            "problem": self.problem_name,
            "config": self.config,
            "stats": [
                {
                    "generation": s.generation,
                    "island_best": list(s.island_best),
                    "best_fitness": s.best_fitness,
                    "success": s.success,
                }
                for s in self.stats
            ],
            "outcome": self.outcome,
            "success_generation": self.success_generation,
            "best_graph": self.best_graph,
            "best_coeffs": self.best_coeffs,
            "best_fitness": self.best_fitness,
            "problem_manifest": self.problem_manifest,
            "config_hash": self.config_hash,
            "wall_time": self.wall_time,
            "infix": self.infix,
            "canonical": self.canonical,
        }


def stream(seed, island, generation):
    """The rng for one island's work in one generation."""
    return np.random.default_rng(
        np.random.SeedSequence(seed, spawn_key=(island, generation)))


# == variation operators ======================================================


def _segment_span(g, p):
    """Stack span [i, p] covering everything command p draws from."""
    lo = p
    stack = [p]
    seen = {p}
    while stack:
        q = stack.pop()
        c = g.commands[q]
        for r in (c.a, c.b)[:ARITY[c.op]]:
            if r not in seen:
                seen.add(r)
                lo = min(lo, r)
                stack.append(r)
    return lo, p + 1


def _remap(c, m):
    if ARITY[c.op] == 0:
        return c
    if ARITY[c.op] == 1:
        return Command(c.op, m(c.a))
    return Command(c.op, m(c.a), m(c.b))


def _decollide(head, seg, tail):
    """Renumber incoming constant slots that clash with the host's.

    A payload collision would silently tie two unrelated constants to one
    coefficient, so transplanted constants move to fresh slots.  Slot
    sharing wholly inside the segment is kept: it is an inherited trait.
    """
    outside = {c.payload for c in head + tail if c.op is Op.CONST}
    if not outside:
        return seg
    nxt = max(outside | {c.payload for c in seg if c.op is Op.CONST}) + 1
    mapping = {}
    out = []
    for c in seg:
        if c.op is Op.CONST and c.payload in outside:
            if c.payload not in mapping:
                mapping[c.payload] = nxt
                nxt += 1
            out.append(Command(Op.CONST, payload=mapping[c.payload]))
        else:
            out.append(c)
    return tuple(out)


def _splice(host, i, j, guest, gi, gj):
    """Replace host's segment [i, j) with guest's segment [gi, gj).

    References inside the incoming segment shift with it; stray references
    below it clamp to earlier host code.  Host references into the replaced
    region map positionally, clamped to the new segment's root, so splicing
    a graph's own segment back in reproduces it exactly.
    """
    off = i - gi
    top = i + (gj - gi) - 1
    seg = []
    for q in range(gi, gj):
        seg.append(_remap(guest.commands[q],
                          lambda r: r + off if r >= gi
                          else min(r, q + off - 1)))
    shift = (gj - gi) - (j - i)

    def move(r):
        if r < i:
            return r
        if r < j:
            return min(r, top)
        return r + shift

    tail = tuple(_remap(c, move) for c in host.commands[j:])
    seg = _decollide(host.commands[:i], tuple(seg), tail)
    return ExpressionGraph(host.commands[:i] + seg + tail, host.dim)


def crossover(a, b, rng, max_complexity):
    """Exchange a contiguous command-stack segment between two genomes.

    Each parent contributes the span of one subtree, with the two picks
    matched by size so the exchange trades comparable semantic units and
    stays within the complexity budget.  When no size-compatible span
    exists the exchange degrades to a uniform address-aligned slice.
    Commands that end up unreachable are kept: they are the genetic
    material later edits and exchanges draw from.
    """
    pa = int(rng.integers(len(a.commands)))
    ia, ja = _segment_span(a, pa)
    la = ja - ia
    room_a = max_complexity - len(a.commands)
    room_b = max_complexity - len(b.commands)
    spans = [p + 1 - _segment_span(b, p)[0]
             for p in range(len(b.commands))]
    cand = [(l, p) for p, l in enumerate(spans)
            if la - room_b <= l <= la + room_a]
    if cand:
        lb, pb = min(cand, key=lambda t: (abs(t[0] - la),
                                          abs(t[1] - pa)))
        ib, jb = pb + 1 - lb, pb + 1
        return (_splice(a, ia, ja, b, ib, jb),
                _splice(b, ib, jb, a, ia, ja))
    span = min(len(a.commands), len(b.commands))
    i = int(rng.integers(span))
    j = int(rng.integers(i + 1, span + 1))
    seg_b = _decollide(a.commands[:i], b.commands[i:j], a.commands[j:])
    seg_a = _decollide(b.commands[:i], a.commands[i:j], b.commands[j:])
    return (
        ExpressionGraph(a.commands[:i] + seg_b + a.commands[j:], a.dim),
        ExpressionGraph(b.commands[:i] + seg_a + b.commands[j:], b.dim),
    )


def _next_payload(g):
    payloads = [c.payload for c in g.commands if c.op is Op.CONST]
    return max(payloads) + 1 if payloads else 0


def _reachable(g):
    root = len(g.commands) - 1
    seen = {root}
    stack = [root]
    while stack:
        q = stack.pop()
        c = g.commands[q]
        for r in (c.a, c.b)[:ARITY[c.op]]:
            if r not in seen:
                seen.add(r)
                stack.append(r)
    return seen


def _dead_tops(g):
    """Indices of dormant subtree roots: referenced by nobody, not the root."""
    used = set()
    for c in g.commands:
        used.update((c.a, c.b)[:ARITY[c.op]])
    return [p for p in range(len(g.commands) - 1) if p not in used]


def _swap_candidates(g, palette):
    out = []
    for pos, cmd in enumerate(g.commands):
        if cmd.op in (Op.VAR, Op.CONST):
            continue
        alts = [op for op in palette.ops
                if ARITY[op] == ARITY[cmd.op] and op is not cmd.op]
        if alts:
            out.append((pos, alts))
    return out

def swap_operator(g, palette, rng):
    candidates = _swap_candidates(g, palette)
    reach = _reachable(g)
    live = [c for c in candidates if c[0] in reach]
    pool = live or candidates
    pos, alts = pool[int(rng.integers(len(pool)))]
    cmd = g.commands[pos]
    new_op = alts[int(rng.integers(len(alts)))]
    commands = list(g.commands)
    commands[pos] = Command(new_op, cmd.a, cmd.b)
    return ExpressionGraph(tuple(commands), g.dim)


def rewire_argument(g, rng):
    """Point one argument of one operator at a different earlier command.

    Edits land on expressed operators, and half the new targets are dormant
    subtree roots, so a single rewire can substitute a whole dormant
    expression into the model.
    """
    ops = [p for p, c in enumerate(g.commands) if ARITY[c.op] >= 1]
    reach = _reachable(g)
    live = [p for p in ops if p in reach]
    pool = live or ops
    pos = pool[int(rng.integers(len(pool)))]
    cmd = g.commands[pos]
    tops = [p for p in _dead_tops(g) if p < pos]
    if tops and rng.integers(2) == 0:
        target = tops[int(rng.integers(len(tops)))]
    else:
        target = int(rng.integers(pos))
    commands = list(g.commands)
    if ARITY[cmd.op] == 1 or rng.integers(2) == 0:
        commands[pos] = Command(cmd.op, target, cmd.b)
    else:
        commands[pos] = Command(cmd.op, cmd.a, target)
    return ExpressionGraph(tuple(commands), g.dim)


def _concat_trees(trees, dim):
    """Stack whole graphs end to end, remapping refs and constant slots."""
    commands = []
    payload_base = 0
    for t in trees:
        start = len(commands)
        n_consts = 0
        for c in t.commands:
            if c.op is Op.CONST:
                commands.append(Command(Op.CONST,
                                        payload=c.payload + payload_base))
                n_consts = max(n_consts, c.payload + 1)
            elif ARITY[c.op] == 0:
                commands.append(c)
            elif ARITY[c.op] == 1:
                commands.append(Command(c.op, c.a + start))
            else:
                commands.append(Command(c.op, c.a + start, c.b + start))
        payload_base += n_consts
    return ExpressionGraph(tuple(commands), dim)


def _compact(g, max_complexity, reserve):
    """Repack a stack as dormant trees plus the expressed tree at the end.

    Keeps whole dormant subtrees while they fit under the budget minus
    ``reserve``, so insertion room is recovered without discarding all the
    latent material.
    """
    reduced = prune(g)
    trees = []
    total = len(reduced.commands)
    room = max_complexity - reserve
    for top in _dead_tops(g):
        tree = prune(ExpressionGraph(g.commands[:top + 1], g.dim))
        if total + len(tree.commands) <= room:
            trees.append(tree)
            total += len(tree.commands)
    trees.append(reduced)
    return _concat_trees(trees, g.dim)


def _unit(palette, dim, cap, rng):
    """Random subtree of at most cap commands, function-wrapped half the
    time when the palette has unary operators."""
    unops = [op for op in palette.ops if ARITY[op] == 1]
    wrap = bool(unops) and cap >= 2 and rng.integers(2) == 0
    t = random_graph(palette, dim,
                     int(rng.integers(1, cap - int(wrap) + 1)), rng)
    if wrap:
        op = unops[int(rng.integers(len(unops)))]
        t = ExpressionGraph(
            t.commands + (Command(op, len(t.commands) - 1),), dim)
    return t


def grow_leaf(g, palette, rng, max_complexity):
    """Grow one leaf into a subtree that keeps the leaf as one of its inputs.

    A near-full stack is compacted first, trading some intron material for
    insertion room.  Only expressed leaves are grown, so the edit changes
    the model rather than the latent code.
    """
    if len(g.commands) > max_complexity - 5:
        g = _compact(g, max_complexity, reserve=6)
    leaves = [p for p, c in enumerate(g.commands) if ARITY[c.op] == 0]
    reach = _reachable(g)
    live = [p for p in leaves if p in reach]
    pool = live or leaves
    pos = pool[int(rng.integers(len(pool)))]
    budget = max(max_complexity - len(g.commands) + 1, 1)
    binops = [op for op in palette.ops if ARITY[op] == 2]
    if binops and budget >= 3 and rng.integers(2) == 0:
        # attach style: combine the leaf with a fresh subtree under one
        # binary operator, leaving the leaf's own role intact
        t = _unit(palette, g.dim, min(5, budget - 2), rng)
        op = binops[int(rng.integers(len(binops)))]
        k = len(t.commands)
        hole = Command(Op.VAR, payload=0)
        join = (Command(op, k - 1, k) if rng.integers(2) == 0
                else Command(op, k, k - 1))
        sub = ExpressionGraph(t.commands + (hole, join), g.dim)
        kept = k
    else:
        sub = _unit(palette, g.dim, min(6, budget), rng)
        keep = [p for p, c in enumerate(sub.commands) if ARITY[c.op] == 0]
        kept = (keep[int(rng.integers(len(keep)))]
                if len(sub.commands) > 1 else None)
    base = _next_payload(g)
    spliced = []
    for p, c in enumerate(sub.commands):
        if p == kept:
            spliced.append(g.commands[pos])
        elif c.op is Op.CONST:
            spliced.append(Command(Op.CONST, payload=c.payload + base))
        elif ARITY[c.op] == 0:
            spliced.append(c)
        elif ARITY[c.op] == 1:
            spliced.append(Command(c.op, c.a + pos))
        else:
            spliced.append(Command(c.op, c.a + pos, c.b + pos))
    shift = len(spliced) - 1

    def move(ref):
        return ref + shift if ref >= pos else ref

    tail = []
    for c in g.commands[pos + 1:]:
        if ARITY[c.op] == 0:
            tail.append(c)
        elif ARITY[c.op] == 1:
            tail.append(Command(c.op, move(c.a)))
        else:
            tail.append(Command(c.op, move(c.a), move(c.b)))
    commands = g.commands[:pos] + tuple(spliced) + tuple(tail)
    return ExpressionGraph(commands, g.dim)


def prune_to_leaf(g, rng):
    ops = [p for p, c in enumerate(g.commands) if ARITY[c.op] >= 1]
    reach = _reachable(g)
    live = [p for p in ops if p in reach]
    pool = live or ops
    pos = pool[int(rng.integers(len(pool)))]
    commands = list(g.commands)
    if rng.integers(2) == 0:
        commands[pos] = Command(Op.VAR, payload=int(rng.integers(g.dim)))
    else:
        commands[pos] = Command(Op.CONST, payload=_next_payload(g))
    return ExpressionGraph(tuple(commands), g.dim)


def mutate(g, palette, rng, max_complexity):
    """Apply one uniformly chosen feasible edit; result stays within budget."""
    kinds = ["grow"]
    if _swap_candidates(g, palette):
        kinds.append("swap")
    if any(ARITY[c.op] >= 1 for c in g.commands):
        kinds.extend(["rewire", "shrink"])
    kind = sorted(kinds)[int(rng.integers(len(kinds)))]
    if kind == "swap":
        return swap_operator(g, palette, rng)
    if kind == "rewire":
        return rewire_argument(g, rng)
    if kind == "grow":
        return grow_leaf(g, palette, rng, max_complexity)
    return prune_to_leaf(g, rng)


# == scoring and similarity ===================================================


def calibration_stream(seed, graph_text):
    """Rng keyed by (run seed, topology), not by when calibration happens.

    Scoring a topology is therefore a pure function of the run seed, which
    makes memoization and checkpoint resume exactly reproducible.
    """
    digest = hashlib.sha256(graph_text.encode()).digest()
    words = tuple(int.from_bytes(digest[k:k + 4], "big")
                  for k in range(0, 16, 4))
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=words))


def _scored(genome, problem, opt, seed, cache):
    # scoring sees only the reachable model, so intron-only edits are free
    reduced = prune(genome)
    key = serialize(reduced)
    hit = cache.get(key)
    if hit is None:
        res = calibrate(reduced, problem, calibration_stream(seed, key), opt)
        hit = (res.coeffs, res.objective)
        cache[key] = hit
    return _fitness.Individual(reduced, np.array(hit[0]), hit[1],
                               genome=genome)


def phenotype(ind, problem):
    if ind.phenotype is None:
        vals, _ = evalad.eval_values(ind.graph, ind.coeffs, problem.crowd_X)
        vals = np.where(np.isfinite(vals), vals, _PHENO_CLIP)
        ind.phenotype = np.clip(vals, -_PHENO_CLIP, _PHENO_CLIP)
    return ind.phenotype


def _distance(a, b, problem):
    diff = phenotype(a, problem) - phenotype(b, problem)
    with np.errstate(over="ignore"):
        return float(np.sqrt(np.dot(diff, diff)))


# == generational step ========================================================


def crowding_generation(population, problem, cfg, rng, cache):
    """One deterministic-crowding step over a single island's population."""
    pop = list(population)
    order = rng.permutation(len(pop))
    for k in range(0, len(pop) - 1, 2):
        ia, ib = int(order[k]), int(order[k + 1])
        pa, pb = pop[ia], pop[ib]
        ga, gb = pa.genome, pb.genome
        if rng.random() < cfg.crossover_rate:
            ga, gb = crossover(ga, gb, rng, problem.max_complexity)
        if rng.random() < cfg.mutation_rate:
            ga = mutate(ga, problem.palette, rng, problem.max_complexity)
        if rng.random() < cfg.mutation_rate:
            gb = mutate(gb, problem.palette, rng, problem.max_complexity)
        ca = _scored(ga, problem, cfg.opt, cfg.seed, cache)
        cb = _scored(gb, problem, cfg.opt, cfg.seed, cache)
        straight = (_distance(pa, ca, problem) + _distance(pb, cb, problem))
        crossed = (_distance(pa, cb, problem) + _distance(pb, ca, problem))
        if straight <= crossed:
            first, second = ca, cb
        else:
            first, second = cb, ca
        if first.fitness <= pa.fitness:
            pop[ia] = first
        if second.fitness <= pb.fitness:
            pop[ib] = second
    return pop


def migrate(islands, count, rng=None):
    """Ring exchange: copies of each island's best replace the next's worst."""
    if len(islands) < 2 or count == 0:
        return islands
    packets = []
    for pop in islands:
        ranked = sorted(range(len(pop)), key=lambda i: (pop[i].fitness, i))
        packets.append([
            _fitness.Individual(pop[i].graph, pop[i].coeffs.copy(),
                                pop[i].fitness, pop[i].phenotype,
                                genome=pop[i].genome)
            for i in ranked[:count]
        ])
    out = []
    for idx, pop in enumerate(islands):
        arriving = packets[(idx - 1) % len(islands)]
        ranked = sorted(range(len(pop)), key=lambda i: (-pop[i].fitness, -i))
        pop = list(pop)
        for slot, migrant in zip(ranked[:count], arriving):
            pop[slot] = migrant
        out.append(pop)
    return out


# == run loop =================================================================


def _best(islands):
    best = None
    for pop in islands:
        for ind in pop:
            if best is None or ind.fitness < best.fitness:
                best = ind
    return best


def _random_chain(palette, dim, max_complexity, rng):
    """Random tree whose root region is a fold of smaller subtrees.

    The expressed model is a single tree (1/4), or 2 (1/2) or 3 (1/4)
    subtrees joined by random binary operators.  Folded shapes put several
    independently drawn units right under the root, which is where segment
    exchange and argument rewiring operate best.  When the palette has
    unary operators, each subtree root is wrapped in one half the time, so
    palettes built around function application seed function-of-subtree
    units rather than only raw compositions.
    """
    binops = [op for op in palette.ops if ARITY[op] == 2]
    unops = [op for op in palette.ops if ARITY[op] == 1]
    k = (1, 2, 2, 3)[int(rng.integers(4))] if binops else 1
    wraps = k if unops else 0
    part = (max_complexity - (k - 1) - wraps) // k
    if k == 1 or part < 2:
        return random_graph(palette, dim, max_complexity, rng)
    parts = []
    for _ in range(k):
        t = random_graph(palette, dim, part, rng)
        if unops and rng.integers(2) == 0:
            op = unops[int(rng.integers(len(unops)))]
            t = ExpressionGraph(
                t.commands + (Command(op, len(t.commands) - 1),), dim)
        parts.append(t)
    joined = _concat_trees(parts, dim)
    commands = list(joined.commands)
    roots = []
    off = 0
    for t in parts:
        roots.append(off + len(t.commands) - 1)
        off += len(t.commands)
    head = roots[0]
    for r in roots[1:]:
        op = binops[int(rng.integers(len(binops)))]
        commands.append(Command(op, head, r))
        head = len(commands) - 1
    return ExpressionGraph(tuple(commands), dim)


def random_genome(palette, dim, max_complexity, rng):
    """Draw a full-length command stack: intron trees, then the output tree.

    The stack spends its whole budget.  The tree rooted at the last command
    is the expressed model; the preceding trees are unreachable but give
    crossover and rewiring real material to work with.  Fill trees are kept
    small so the latent code is a pool of simple motifs rather than one
    opaque blob.
    """
    trees = [_random_chain(palette, dim, max_complexity, rng)]
    while sum(len(t.commands) for t in trees) < max_complexity:
        room = max_complexity - sum(len(t.commands) for t in trees)
        trees.insert(0, random_graph(palette, dim, min(room, 7), rng))
    return _concat_trees(trees, dim)


def _initial_islands(problem, cfg, cache):
    islands = []
    for i in range(cfg.islands):
        rng = stream(cfg.seed, i, 0)
        pop = []
        for _ in range(cfg.population_per_island):
            g = random_genome(problem.palette, problem.dim,
                              problem.max_complexity, rng)
            pop.append(_scored(g, problem, cfg.opt, cfg.seed, cache))
        islands.append(pop)
    return islands


def save_checkpoint(path, payload):
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        json.dump(payload, fh)
    os.replace(tmp, path)


def load_checkpoint(path):
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError("unsupported checkpoint version")
    return payload


def _islands_to_payload(islands):
    return [
        [
            {
                "genome": serialize(ind.genome),
                "coeffs": [float(c) for c in ind.coeffs],
                "fitness": float(ind.fitness),
            }
            for ind in pop
        ]
        for pop in islands
    ]


def _islands_from_payload(payload):
    islands = []
    for pop in payload:
        out = []
        for entry in pop:
            genome = deserialize(entry["genome"])
            out.append(_fitness.Individual(
                prune(genome),
                np.asarray(entry["coeffs"], dtype=float),
                entry["fitness"],
                genome=genome,
            ))
        islands.append(out)
    return islands


def _stats_to_payload(stats):
    return [
        {"generation": s.generation, "island_best": list(s.island_best),
         "best_fitness": s.best_fitness, "success": s.success}
        for s in stats
    ]


def _stats_from_payload(payload):
    return [
        GenerationStats(e["generation"], tuple(e["island_best"]),
                        e["best_fitness"], e["success"])
        for e in payload
    ]


def evolve_until(problem, cfg, plant=None, checkpoint_path=None,
                 checkpoint_every=0):
    """Run evolution to the stop condition and return the full RunRecord.

    ``plant`` optionally injects (graph, coeffs) pairs into island 0's
    initial population.  With ``checkpoint_path`` the run resumes from an
    existing file and saves state every ``checkpoint_every`` generations.
    """
    if not problem.palette.ops:
        raise ValueError("problem palette is empty")
    cache = {}
    stats = []
    start_gen = 0
    islands = None

    if checkpoint_path and os.path.exists(checkpoint_path):
        payload = load_checkpoint(checkpoint_path)
        if payload["seed"] != cfg.seed or payload["problem"] != problem.name:
            raise ValueError("checkpoint does not match this run")
        islands = _islands_from_payload(payload["islands"])
        stats = _stats_from_payload(payload["stats"])
        start_gen = payload["generation"] + 1

    if islands is None:
        islands = _initial_islands(problem, cfg, cache)
        if plant:
            for slot, (g, coeffs) in enumerate(plant):
                rng = calibration_stream(cfg.seed, serialize(g))
                res = calibrate(g, problem, rng, cfg.opt, init=coeffs)
                islands[0][slot % cfg.population_per_island] = (
                    _fitness.Individual(g, res.coeffs, res.objective))

    def record(generation):
        island_best = tuple(
            float(min(ind.fitness for ind in pop)) for pop in islands)
        best = _best(islands)
        entry = GenerationStats(generation, island_best,
                                float(best.fitness))
        if best.fitness <= cfg.threshold:
            entry.success = simplify.is_known_solution(best, problem)
        stats.append(entry)
        return entry, best

    def finish(outcome, success_generation, best):
        return RunRecord(
            seed=cfg.seed,
            problem_name=problem.name,
            config={
                "islands": cfg.islands,
                "population_per_island": cfg.population_per_island,
                "crossover_rate": cfg.crossover_rate,
                "mutation_rate": cfg.mutation_rate,
                "migration_interval": cfg.migration_interval,
                "migration_count": cfg.migration_count,
                "threshold": cfg.threshold,
                "max_generations": cfg.max_generations,
                "opt": {
                    "max_iterations": cfg.opt.max_iterations,
                    "restarts": cfg.opt.restarts,
                },
            },
            stats=stats,
            outcome=outcome,
            success_generation=success_generation,
            best_graph=serialize(best.graph),
            best_coeffs=[float(c) for c in best.coeffs],
            best_fitness=float(best.fitness),
            problem_manifest=manifest(problem),
        )

    def checkpoint(generation):
        if checkpoint_path and checkpoint_every and (
                generation % checkpoint_every == 0):
            save_checkpoint(checkpoint_path, {
                "version": CHECKPOINT_VERSION,
                "seed": cfg.seed,
                "problem": problem.name,
                "generation": generation,
                "islands": _islands_to_payload(islands),
                "stats": _stats_to_payload(stats),
            })

    if start_gen == 0:
        entry, best = record(0)
        checkpoint(0)
        if entry.success:
            return finish("verified", 0, best)
        if best.fitness <= cfg.threshold:
            return finish("numeric_only", 0, best)
        start_gen = 1

    for gen in range(start_gen, cfg.max_generations + 1):
        for i in range(cfg.islands):
            rng = stream(cfg.seed, i, gen)
            islands[i] = crowding_generation(
                islands[i], problem, cfg, rng, cache)
        if cfg.islands > 1 and gen % cfg.migration_interval == 0:
            islands = migrate(islands, cfg.migration_count)
        entry, best = record(gen)
        checkpoint(gen)
        if entry.success:
            return finish("verified", gen, best)
        if best.fitness <= cfg.threshold:
            return finish("numeric_only", gen, best)
    return finish("exhausted", None, _best(islands))
