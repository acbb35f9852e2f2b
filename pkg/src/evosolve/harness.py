"""Experiment runner and CLI: seeded trial batches, statistics, plot data.

An experiment is `repeats` independent evolution trials with seeds
``seed_base + 0 .. seed_base + repeats - 1``.  Each finished trial is
persisted as one line-oriented record file, so an interrupted batch resumes
by skipping the seeds whose records already exist.  Summaries aggregate the
per-generation best-fitness series (terminated runs carry their final value
forward) into quartile trends and a success CDF, exported as CSV.

Config files are flat ``key value`` text; see CONFIG_KEYS.
"""

from __future__ import annotations

import argparse
import ast
import csv
import hashlib
import importlib.resources
import math
import re
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from evosolve import fitness as _fitness
from evosolve import simplify
from evosolve.evolve import (
    EvolutionConfig,
    GenerationStats,
    RunRecord,
    evolve_until,
)
from evosolve.expr import deserialize, render_infix, serialize
from evosolve.localopt import light_config
from evosolve.problems import (
    build_euler_bernoulli,
    build_poisson,
    hypothesis_space_size,
)

RECORD_HEADER = "evosolve record 1"
MODEL_HEADER = "evosolve model 1"

# every accepted config-file key, with the ExperimentConfig field it feeds
CONFIG_KEYS = (
    "problem",            # "poisson" or "eb"
    "dim",                # poisson spatial dimension (1, 2, or 3)
    "n_train",            # beam training-point count (2, 3, 5, or 11)
    "test",               # palette variant (1 or 2)
    "physics",            # beam only: false drops the operator residuals
    "plant_known",        # inject the known solution into the start population
    "repeats",
    "seed_base",
    "out_dir",
    "workers",
    "islands",
    "population_per_island",
    "crossover_rate",
    "mutation_rate",
    "migration_interval",
    "migration_count",
    "threshold",
    "max_generations",
    "opt_max_iterations",
    "opt_restarts",
)


@dataclass(frozen=True)
class ExperimentConfig:
    """One batch of seeded trials on a single problem."""

    problem: str = "poisson"
    dim: int = 2
    n_train: int = 2
    test: int = 1
    physics: bool = True
    plant_known: bool = False
    evolution: EvolutionConfig = field(default_factory=EvolutionConfig)
    repeats: int = 30
    seed_base: int = 0
    out_dir: str = "results"
    workers: int = 1

    def __post_init__(self):
        if self.problem not in ("poisson", "eb"):
            raise ValueError(f"unknown problem {self.problem!r}")
        if self.repeats < 1:
            raise ValueError("repeats must be at least 1")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")


def build_problem(cfg):
    if cfg.problem == "poisson":
        return build_poisson(d=cfg.dim, test=cfg.test)
    return build_euler_bernoulli(n=cfg.n_train, test=cfg.test,
                                 physics=cfg.physics)


# == config files ==============================================================


def _parse_bool(raw):
    low = raw.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def parse_config(text):
    """Build an ExperimentConfig from flat ``key value`` lines.

    Blank lines and ``#`` comments are skipped; unknown or repeated keys
    are rejected.
    """
    seen = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        parts = stripped.split(None, 1)
        if len(parts) != 2:
            raise ValueError(f"line {lineno}: expected 'key value'")
        key, raw = parts
        if key not in CONFIG_KEYS:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        if key in seen:
            raise ValueError(f"line {lineno}: duplicate key {key!r}")
        seen[key] = raw

    def take(key, conv, default):
        if key not in seen:
            return default
        try:
            return conv(seen[key])
        except ValueError as exc:
            raise ValueError(f"config key {key!r}: {exc}") from exc

    opt = light_config()
    opt = replace(
        opt,
        max_iterations=take("opt_max_iterations", int, opt.max_iterations),
        restarts=take("opt_restarts", int, opt.restarts),
    )
    evo = EvolutionConfig(
        islands=take("islands", int, 10),
        population_per_island=take("population_per_island", int, 15),
        crossover_rate=take("crossover_rate", float, 0.5),
        mutation_rate=take("mutation_rate", float, 0.5),
        migration_interval=take("migration_interval", int, 10),
        migration_count=take("migration_count", int, 2),
        threshold=take("threshold", float, 1e-15),
        max_generations=take("max_generations", int, 100),
        opt=opt,
    )
    return ExperimentConfig(
        problem=take("problem", str, "poisson"),
        dim=take("dim", int, 2),
        n_train=take("n_train", int, 2),
        test=take("test", int, 1),
        physics=take("physics", _parse_bool, True),
        plant_known=take("plant_known", _parse_bool, False),
        evolution=evo,
        repeats=take("repeats", int, 30),
        seed_base=take("seed_base", int, 0),
        out_dir=take("out_dir", str, "results"),
        workers=take("workers", int, 1),
    )


def render_config(cfg):
    """Canonical one-key-per-line dump; parse_config round-trips it."""
    evo = cfg.evolution
    pairs = (
        ("problem", cfg.problem),
        ("dim", cfg.dim),
        ("n_train", cfg.n_train),
        ("test", cfg.test),
        ("physics", str(cfg.physics).lower()),
        ("plant_known", str(cfg.plant_known).lower()),
        ("repeats", cfg.repeats),
        ("seed_base", cfg.seed_base),
        ("out_dir", cfg.out_dir),
        ("workers", cfg.workers),
        ("islands", evo.islands),
        ("population_per_island", evo.population_per_island),
        ("crossover_rate", repr(evo.crossover_rate)),
        ("mutation_rate", repr(evo.mutation_rate)),
        ("migration_interval", evo.migration_interval),
        ("migration_count", evo.migration_count),
        ("threshold", repr(evo.threshold)),
        ("max_generations", evo.max_generations),
        ("opt_max_iterations", evo.opt.max_iterations),
        ("opt_restarts", evo.opt.restarts),
    )
    return "".join(f"{k} {v}\n" for k, v in pairs)


# execution knobs that do not alter trial content stay out of the hash,
# so extending repeats or moving the output directory reuses old records
_NON_TRIAL_KEYS = ("repeats", "seed_base", "out_dir", "workers")


def config_hash(cfg):
    lines = [
        line for line in render_config(cfg).splitlines(keepends=True)
        if line.split(None, 1)[0] not in _NON_TRIAL_KEYS
    ]
    return hashlib.sha256("".join(lines).encode()).hexdigest()


# == record files ==============================================================


def record_path(out_dir, seed):
    return Path(out_dir) / f"record_{seed:06d}.txt"


def record_text(record):
    """Full persisted form of one trial record."""
    coeffs = " ".join(repr(float(c)) for c in record.best_coeffs)
    cfg = record.config
    flat = {k: v for k, v in cfg.items() if k != "opt"}
    flat.update({f"opt_{k}": v for k, v in cfg.get("opt", {}).items()})
    cfg_line = " ".join(f"{k}={flat[k]!r}" for k in sorted(flat))
    lines = [
        RECORD_HEADER,
        f"config_hash {record.config_hash or '-'}",
        f"seed {record.seed}",
        f"problem {record.problem_name}",
        f"outcome {record.outcome}",
        "success_generation "
        + ("none" if record.success_generation is None
           else str(record.success_generation)),
        f"wall_time {record.wall_time!r}",
        f"best_fitness {record.best_fitness!r}",
        f"best_coeffs {coeffs}".rstrip(),
        f"infix {record.infix}",
        f"canonical {record.canonical}",
        f"config {cfg_line}",
        f"series {len(record.stats)}",
    ]
    for s in record.stats:
        lines.append(f"{s.generation} {s.best_fitness!r} {int(s.success)}")
    model_lines = record.best_graph.rstrip("\n").split("\n")
    lines.append(f"model {len(model_lines)}")
    lines.extend(model_lines)
    manifest_lines = record.problem_manifest.rstrip("\n").split("\n")
    lines.append(f"manifest {len(manifest_lines)}")
    lines.extend(manifest_lines)
    return "\n".join(lines) + "\n"


def _expect(lines, i, key):
    parts = lines[i].split(None, 1)
    if parts[0] != key:
        raise ValueError(f"record line {i + 1}: expected {key!r}")
    return parts[1] if len(parts) > 1 else ""


def parse_record(text):
    lines = text.rstrip("\n").split("\n")
    if lines[0] != RECORD_HEADER:
        raise ValueError("not a record file")
    chash = _expect(lines, 1, "config_hash")
    seed = int(_expect(lines, 2, "seed"))
    problem_name = _expect(lines, 3, "problem")
    outcome = _expect(lines, 4, "outcome")
    raw_sg = _expect(lines, 5, "success_generation")
    success_generation = None if raw_sg == "none" else int(raw_sg)
    wall_time = float(_expect(lines, 6, "wall_time"))
    best_fitness = float(_expect(lines, 7, "best_fitness"))
    raw_coeffs = _expect(lines, 8, "best_coeffs")
    best_coeffs = [float(v) for v in raw_coeffs.split()] if raw_coeffs else []
    infix = _expect(lines, 9, "infix")
    canonical = _expect(lines, 10, "canonical")
    config = {}
    opt = {}
    for pair in _expect(lines, 11, "config").split():
        key, raw = pair.split("=", 1)
        value = ast.literal_eval(raw)
        if key.startswith("opt_"):
            opt[key[4:]] = value
        else:
            config[key] = value
    config["opt"] = opt
    count = int(_expect(lines, 12, "series"))
    stats = []
    at = 13
    for line in lines[at:at + count]:
        g, fit, success = line.split()
        stats.append(GenerationStats(int(g), (), float(fit),
                                     success=bool(int(success))))
    at += count
    count = int(_expect(lines, at, "model"))
    best_graph = "\n".join(lines[at + 1:at + 1 + count]) + "\n"
    at += 1 + count
    count = int(_expect(lines, at, "manifest"))
    problem_manifest = "\n".join(lines[at + 1:at + 1 + count]) + "\n"
    return RunRecord(
        seed=seed,
        problem_name=problem_name,
        config=config,
        stats=stats,
        outcome=outcome,
        success_generation=success_generation,
        best_graph=best_graph,
        best_coeffs=best_coeffs,
        best_fitness=best_fitness,
        problem_manifest=problem_manifest,
        config_hash="" if chash == "-" else chash,
        wall_time=wall_time,
        infix=infix,
        canonical=canonical,
    )


def save_record(record, path):
    Path(path).write_text(record_text(record))


def load_record(path):
    return parse_record(Path(path).read_text())


def load_records(out_dir):
    paths = sorted(Path(out_dir).glob("record_*.txt"))
    return [load_record(p) for p in paths]


# == model files ===============================================================


def model_text(graph, coeffs, problem_name=None):
    lines = [MODEL_HEADER]
    if problem_name:
        lines.append(f"problem {problem_name}")
    lines.append(
        ("coeffs " + " ".join(repr(float(c)) for c in coeffs)).rstrip())
    body = serialize(graph).rstrip("\n").split("\n")
    lines.append(f"model {len(body)}")
    lines.extend(body)
    return "\n".join(lines) + "\n"


def save_model(path, graph, coeffs, problem_name=None):
    Path(path).write_text(model_text(graph, coeffs, problem_name))


def parse_model(text):
    """(graph, coeffs, problem name or None) from model-file text."""
    lines = text.rstrip("\n").split("\n")
    if lines[0] != MODEL_HEADER:
        raise ValueError("not a model file")
    at = 1
    problem_name = None
    if lines[at].startswith("problem "):
        problem_name = lines[at].split(None, 1)[1]
        at += 1
    raw = _expect(lines, at, "coeffs")
    coeffs = np.array([float(v) for v in raw.split()] if raw else [])
    count = int(_expect(lines, at + 1, "model"))
    graph = deserialize("\n".join(lines[at + 2:at + 2 + count]) + "\n")
    return graph, coeffs, problem_name


def load_model(path):
    return parse_model(Path(path).read_text())


def bundled_model_path(name):
    """Path of a model file shipped with the package (known solutions)."""
    return Path(importlib.resources.files("evosolve") / "data" / name)


# == running experiments =======================================================


def _run_trial(cfg, seed):
    problem = build_problem(cfg)
    evo = replace(cfg.evolution, seed=seed)
    plant = None
    if cfg.plant_known:
        plant = [(problem.known_graph, problem.known_coeffs)]
    start = time.perf_counter()
    record = evolve_until(problem, evo, plant=plant)
    record.wall_time = time.perf_counter() - start
    record.config_hash = config_hash(cfg)
    graph = deserialize(record.best_graph)
    record.infix = render_infix(graph, record.best_coeffs)
    record.canonical = simplify.render_form(
        simplify.canonicalize(graph, record.best_coeffs))
    return record


def run_experiment(cfg, log=None):
    """Run (or resume) all trials of an experiment; returns records by seed.

    Completed seeds found in ``cfg.out_dir`` with a matching config hash
    are not recomputed.  A record that cannot be written is reported on
    ``log`` and kept in memory so the batch still completes.
    """
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    chash = config_hash(cfg)
    manifest_path = out / "experiment.txt"
    manifest = render_config(cfg) + f"config_hash {chash}\n"
    if manifest_path.exists():
        old = manifest_path.read_text()
        match = re.search(r"^config_hash (\w+)$", old, re.MULTILINE)
        if match and match.group(1) != chash:
            raise ValueError(
                f"{out} holds records for a different configuration")
    manifest_path.write_text(manifest)

    seeds = [cfg.seed_base + i for i in range(cfg.repeats)]
    records = {}
    pending = []
    for seed in seeds:
        path = record_path(out, seed)
        if path.exists():
            try:
                old = load_record(path)
            except (ValueError, OSError):
                old = None
            if old is not None and old.config_hash == chash:
                records[seed] = old
                continue
        pending.append(seed)

    def store(seed, record):
        records[seed] = record
        try:
            save_record(record, record_path(out, seed))
        except OSError as exc:
            if log is not None:
                print(f"seed {seed}: record not saved: {exc}", file=log)
        if log is not None:
            print(f"seed {seed}: {record.outcome} "
                  f"generation {record.success_generation} "
                  f"fitness {record.best_fitness:.3e} "
                  f"({record.wall_time:.1f}s)", file=log)

    if cfg.workers == 1 or len(pending) <= 1:
        for seed in pending:
            store(seed, _run_trial(cfg, seed))
    else:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            futures = {seed: pool.submit(_run_trial, cfg, seed)
                       for seed in pending}
            for seed, fut in futures.items():
                store(seed, fut.result())
    return [records[seed] for seed in seeds]


# == summaries =================================================================


@dataclass(frozen=True)
class SummaryStats:
    """Per-generation distribution of best fitness plus the success CDF."""

    generations: tuple
    median: tuple
    q1: tuple
    q3: tuple
    minimum: tuple
    maximum: tuple
    cdf: tuple
    repeats: int

    def __post_init__(self):
        previous = 0.0
        for value in self.cdf:
            if value < previous or not 0.0 <= value <= 1.0:
                raise ValueError("success CDF must be non-decreasing in [0,1]")
            previous = value


def _quantile(sorted_values, q):
    n = len(sorted_values)
    if n == 1:
        return sorted_values[0]
    h = (n - 1) * q
    lo = math.floor(h)
    hi = min(lo + 1, n - 1)
    return sorted_values[lo] + (h - lo) * (sorted_values[hi] - sorted_values[lo])


def outlier_fences(q1, q3):
    """Standard box-plot whisker fences at 1.5 interquartile ranges."""
    iqr = q3 - q1
    return q1 - 1.5 * iqr, q3 + 1.5 * iqr


def summarize(records):
    """Aggregate trial records into per-generation stats and a success CDF.

    Runs that terminated early contribute their final best fitness to every
    later generation, so all series share one length.
    """
    if not records:
        raise ValueError("no records to summarize")
    horizon = max(rec.stats[-1].generation for rec in records)
    series = []
    for rec in records:
        values = [s.best_fitness for s in rec.stats]
        values.extend([values[-1]] * (horizon + 1 - len(values)))
        series.append(values)
    table = list(zip(*series))
    median, q1, q3, mn, mx = [], [], [], [], []
    for row in table:
        ordered = sorted(row)
        median.append(_quantile(ordered, 0.5))
        q1.append(_quantile(ordered, 0.25))
        q3.append(_quantile(ordered, 0.75))
        mn.append(ordered[0])
        mx.append(ordered[-1])
    wins = sorted(rec.success_generation for rec in records
                  if rec.outcome == "verified"
                  and rec.success_generation is not None)
    total = len(records)
    cdf = [sum(1 for w in wins if w <= g) / total for g in range(horizon + 1)]
    return SummaryStats(
        generations=tuple(range(horizon + 1)),
        median=tuple(median),
        q1=tuple(q1),
        q3=tuple(q3),
        minimum=tuple(mn),
        maximum=tuple(mx),
        cdf=tuple(cdf),
        repeats=total,
    )


def export_plot_data(stats, out_dir, fmt="csv"):
    """Write trend.csv and cdf.csv; returns the written paths."""
    if fmt != "csv":
        raise ValueError(f"unsupported format {fmt!r}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    trend = out / "trend.csv"
    with open(trend, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["generation", "median", "q1", "q3", "min", "max"])
        for i, g in enumerate(stats.generations):
            writer.writerow([g, repr(stats.median[i]), repr(stats.q1[i]),
                             repr(stats.q3[i]), repr(stats.minimum[i]),
                             repr(stats.maximum[i])])
    cdf = out / "cdf.csv"
    with open(cdf, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["generation", "fraction"])
        for g, fraction in zip(stats.generations, stats.cdf):
            writer.writerow([g, repr(fraction)])
    return [trend, cdf]


# == command line ==============================================================


_PROBLEM_NAME = re.compile(
    r"^(?:poisson_(?P<d>[123])d_test(?P<pt>[12])"
    r"|eb_n(?P<n>2|3|5|11)_test(?P<et>[12])(?P<conv>_conventional)?)$")


def problem_from_name(name):
    """Rebuild a benchmark problem from its manifest name."""
    match = _PROBLEM_NAME.match(name)
    if not match:
        raise ValueError(f"unknown problem name {name!r}")
    if match.group("d"):
        return build_poisson(d=int(match.group("d")),
                             test=int(match.group("pt")))
    return build_euler_bernoulli(n=int(match.group("n")),
                                 test=int(match.group("et")),
                                 physics=not match.group("conv"))


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _build_parser():
    parser = _Parser(prog="evosolve",
                     description="evolve and verify closed-form solutions "
                                 "of differential-equation benchmarks")
    sub = parser.add_subparsers(dest="command")
    run_p = sub.add_parser("run", help="run a batch of seeded trials")
    run_p.add_argument("config", help="key-value config file")
    run_p.add_argument("--seed", type=int, default=None,
                       help="override seed_base")
    run_p.add_argument("--repeats", type=int, default=None)
    run_p.add_argument("--out", default=None, help="override out_dir")
    sum_p = sub.add_parser("summarize",
                           help="aggregate a results directory into CSV")
    sum_p.add_argument("directory")
    h_p = sub.add_parser("hspace", help="hypothesis-space size estimate")
    h_p.add_argument("--d", type=int, required=True, help="input dimension")
    h_p.add_argument("--m", type=int, required=True, help="operator count")
    h_p.add_argument("--n", type=int, required=True, help="stack length")
    v_p = sub.add_parser("verify",
                         help="run the known-solution gates on a model file")
    v_p.add_argument("model_file")
    v_p.add_argument("--problem", default=None,
                     help="problem name, e.g. poisson_2d_test1 or eb_n2_test1")
    return parser


def _cmd_run(args, stdout):
    text = Path(args.config).read_text()
    cfg = parse_config(text)
    if args.seed is not None:
        cfg = replace(cfg, seed_base=args.seed)
    if args.repeats is not None:
        cfg = replace(cfg, repeats=args.repeats)
    if args.out is not None:
        cfg = replace(cfg, out_dir=args.out)
    records = run_experiment(cfg, log=stdout)
    stats = summarize(records)
    export_plot_data(stats, cfg.out_dir)
    wins = [r for r in records if r.outcome == "verified"]
    print(f"{len(wins)}/{len(records)} runs verified; "
          f"records and CSV written to {cfg.out_dir}", file=stdout)
    return 0


def _cmd_summarize(args, stdout):
    directory = Path(args.directory)
    if not directory.is_dir():
        raise OSError(f"not a directory: {directory}")
    records = load_records(directory)
    if not records:
        raise ValueError(f"no record files in {directory}")
    stats = summarize(records)
    export_plot_data(stats, directory)
    wins = sorted(r.success_generation for r in records
                  if r.outcome == "verified")
    print(f"runs {stats.repeats}", file=stdout)
    print(f"verified {len(wins)}", file=stdout)
    if wins:
        print(f"median_success_generation {_quantile(wins, 0.5)}",
              file=stdout)
    print(f"final_median_fitness {stats.median[-1]!r}", file=stdout)
    print(f"wrote trend.csv and cdf.csv to {directory}", file=stdout)
    return 0


def _cmd_hspace(args, stdout):
    exact, approx = hypothesis_space_size(args.d, args.m, args.n)
    print(f"exact {exact:.6g}", file=stdout)
    print(f"approx {approx:.6g}", file=stdout)
    return 0


def _cmd_verify(args, stdout):
    text = Path(args.model_file).read_text()
    if text.startswith(RECORD_HEADER):
        record = parse_record(text)
        graph = deserialize(record.best_graph)
        coeffs = np.array(record.best_coeffs)
        name = args.problem or record.problem_name
    else:
        graph, coeffs, stored = parse_model(text)
        name = args.problem or stored
    if name is None:
        raise ValueError("model file names no problem; pass --problem")
    problem = problem_from_name(name)
    scalar = _fitness.grid_fitness(graph, coeffs, problem)
    form = simplify.canonicalize(graph, coeffs)
    known = simplify.canonicalize(problem.known_graph, problem.known_coeffs)
    verdict = simplify.equivalent(form, known, domain=problem.domain)
    fit_ok = scalar < problem.success_threshold
    structure_ok = verdict.kind is simplify.Verdict.EQUIVALENT
    print(f"problem {problem.name}", file=stdout)
    print(f"model {render_infix(graph, coeffs)}", file=stdout)
    print(f"canonical {simplify.render_form(form)}", file=stdout)
    print(f"grid_fitness {scalar!r} threshold "
          f"{problem.success_threshold!r} "
          f"gate {'pass' if fit_ok else 'fail'}", file=stdout)
    print(f"structure {verdict.kind.name.lower()} "
          f"gate {'pass' if structure_ok else 'fail'}", file=stdout)
    print("known_solution "
          + ("yes" if fit_ok and structure_ok else "no"), file=stdout)
    return 0


def cli_main(argv=None, stdout=None, stderr=None):
    """Entry point; returns 0 on success, 1 on config error, 2 on I/O error."""
    stdout = sys.stdout if stdout is None else stdout
    stderr = sys.stderr if stderr is None else stderr
    parser = _build_parser()
    try:
        args = parser.parse_args(sys.argv[1:] if argv is None else list(argv))
    except _UsageError as exc:
        print(parser.format_usage().rstrip(), file=stderr)
        print(f"error: {exc}", file=stderr)
        return 1
    handlers = {
        "run": _cmd_run,
        "summarize": _cmd_summarize,
        "hspace": _cmd_hspace,
        "verify": _cmd_verify,
    }
    if args.command is None:
        print(parser.format_usage().rstrip(), file=stderr)
        return 1
    try:
        return handlers[args.command](args, stdout)
    except ValueError as exc:
        print(f"error: {exc}", file=stderr)
        return 1
    except OSError as exc:
        print(f"io error: {exc}", file=stderr)
        return 2


if __name__ == "__main__":
    sys.exit(cli_main())
